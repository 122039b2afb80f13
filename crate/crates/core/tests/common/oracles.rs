//! Independent reference computations used as test oracles. Nothing here
//! calls into the implementation under test.

use std::collections::{HashMap, VecDeque};

fn levenshtein(a: &[u8], b: &[u8]) -> usize {
    let mut dp = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in dp.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=b.len() {
        dp[0][j] = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let c = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            dp[i][j] = (dp[i - 1][j - 1] + c).min(dp[i - 1][j] + 1).min(dp[i][j - 1] + 1);
        }
    }
    dp[a.len()][b.len()]
}

/// Every sequence obtainable by moving one contiguous block elsewhere.
fn one_shift_neighbours(seq: &[u8]) -> Vec<Vec<u8>> {
    let n = seq.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..=n {
            let block = &seq[i..j];
            let mut rest = seq[..i].to_vec();
            rest.extend_from_slice(&seq[j..]);
            for k in 0..=rest.len() {
                let mut cand = rest[..k].to_vec();
                cand.extend_from_slice(block);
                cand.extend_from_slice(&rest[k..]);
                if cand != seq {
                    out.push(cand);
                }
            }
        }
    }
    out
}

/// Minimum over all shift sequences of (#shifts + Levenshtein distance of
/// the shifted hypothesis to the reference). Breadth-first search over the
/// permutations of the hypothesis reachable by block moves.
pub fn exhaustive_ter_edits(hyp: &[u8], reference: &[u8]) -> usize {
    let mut dist: HashMap<Vec<u8>, usize> = HashMap::new();
    let mut queue = VecDeque::new();
    dist.insert(hyp.to_vec(), 0);
    queue.push_back(hyp.to_vec());
    let mut best = usize::MAX;
    while let Some(seq) = queue.pop_front() {
        let d = dist[&seq];
        best = best.min(d + levenshtein(&seq, reference));
        if d + 1 >= best {
            continue;
        }
        for next in one_shift_neighbours(&seq) {
            if !dist.contains_key(&next) {
                dist.insert(next.clone(), d + 1);
                queue.push_back(next);
            }
        }
    }
    best
}
