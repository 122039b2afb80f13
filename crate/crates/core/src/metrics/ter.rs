//! Translation edit rate with greedy block shifts.

use std::collections::HashSet;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize_tercom, TokenizeOptions};
use crate::error::{Error, Result};

/// Longest block considered for a single shift.
pub const MAX_SHIFT_BLOCK: usize = 10;
/// Furthest a block may move (in token positions).
pub const MAX_SHIFT_DISTANCE: usize = 50;
/// Hypotheses up to this length are scored by exhaustive shift search
/// instead of the greedy loop.
pub const EXACT_SEARCH_MAX_TOKENS: usize = 8;

/// Integer edit breakdown of one hypothesis/reference pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TerScore {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub shifts: usize,
    pub ref_len: usize,
}

impl TerScore {
    pub fn edits(&self) -> usize {
        self.insertions + self.deletions + self.substitutions + self.shifts
    }

    /// Exact edits / reference length.
    pub fn score(&self) -> Ratio<usize> {
        Ratio::new(self.edits(), self.ref_len)
    }

    pub fn score_f64(&self) -> f64 {
        self.edits() as f64 / self.ref_len as f64
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub(crate) struct EditOps {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
}

impl EditOps {
    fn total(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }
}

/// Word-level Levenshtein distance, two-row form.
pub fn edit_distance<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=reference.len()).collect();
    let mut cur = vec![0; reference.len() + 1];
    for (i, h) in hyp.iter().enumerate() {
        cur[0] = i + 1;
        for (j, r) in reference.iter().enumerate() {
            let diag = prev[j] + usize::from(h != r);
            cur[j + 1] = diag.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[reference.len()]
}

/// Levenshtein alignment with a deterministic backtrace preference:
/// diagonal (match/substitution), then deletion of a hypothesis word, then
/// insertion of a reference word.
pub(crate) fn edit_ops<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditOps {
    let (n, m) = (hyp.len(), reference.len());
    let w = m + 1;
    let mut dp = vec![0usize; (n + 1) * w];
    for j in 0..=m {
        dp[j] = j;
    }
    for i in 1..=n {
        dp[i * w] = i;
        for j in 1..=m {
            let diag = dp[(i - 1) * w + j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            let del = dp[(i - 1) * w + j] + 1;
            let ins = dp[i * w + j - 1] + 1;
            dp[i * w + j] = diag.min(del).min(ins);
        }
    }
    let mut ops = EditOps::default();
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = dp[i * w + j];
        if i > 0 && j > 0 {
            let sub = usize::from(hyp[i - 1] != reference[j - 1]);
            if dp[(i - 1) * w + j - 1] + sub == here {
                ops.substitutions += sub;
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && dp[(i - 1) * w + j] + 1 == here {
            ops.deletions += 1;
            i -= 1;
        } else {
            ops.insertions += 1;
            j -= 1;
        }
    }
    debug_assert_eq!(ops.total(), dp[n * w + m]);
    ops
}

/// Moves `hyp[start..start + len]` so that it begins at index `dest` of the
/// sequence that remains after removing the block.
pub(crate) fn apply_shift<T: Clone>(hyp: &[T], start: usize, len: usize, dest: usize) -> Vec<T> {
    let block = &hyp[start..start + len];
    let mut rest: Vec<T> = Vec::with_capacity(hyp.len());
    rest.extend_from_slice(&hyp[..start]);
    rest.extend_from_slice(&hyp[start + len..]);
    let mut out = Vec::with_capacity(hyp.len());
    out.extend_from_slice(&rest[..dest]);
    out.extend_from_slice(block);
    out.extend_from_slice(&rest[dest..]);
    out
}

/// One accepted shift: where the block started, its length, where it went,
/// and the edit distance after applying it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Shift {
    pub start: usize,
    pub len: usize,
    pub dest: usize,
    pub distance_before: usize,
    pub distance_after: usize,
}

/// Best shift for the current hypothesis, if any reduces the edit distance by
/// at least 2. Candidates are visited by (start, length, destination)
/// ascending and only a strictly larger reduction replaces the incumbent.
fn best_shift<T: PartialEq + Clone>(hyp: &[T], reference: &[T], current: usize) -> Option<Shift> {
    let n = hyp.len();
    let mut best: Option<Shift> = None;
    for start in 0..n {
        for len in 1..=MAX_SHIFT_BLOCK.min(n - start) {
            let rest_len = n - len;
            for dest in 0..=rest_len {
                if dest == start || dest.abs_diff(start) > MAX_SHIFT_DISTANCE {
                    continue;
                }
                let cand = apply_shift(hyp, start, len, dest);
                let d = edit_distance(&cand, reference);
                if d + 2 > current {
                    continue;
                }
                if best.is_none_or(|b| d < b.distance_after) {
                    best = Some(Shift {
                        start,
                        len,
                        dest,
                        distance_before: current,
                        distance_after: d,
                    });
                }
            }
        }
    }
    best
}

/// Lower bound on the edit distance of any reordering of `hyp`: shifts keep
/// the token multiset, so at least `max(|hyp|, |ref|) - |common multiset|`
/// edits remain.
fn multiset_bound<T: PartialEq>(hyp: &[T], reference: &[T]) -> usize {
    let mut used = vec![false; reference.len()];
    let mut common = 0;
    for h in hyp {
        if let Some(k) = (0..reference.len()).find(|&k| !used[k] && reference[k] == *h) {
            used[k] = true;
            common += 1;
        }
    }
    hyp.len().max(reference.len()) - common
}

/// Maps tokens to dense ids (first occurrence order across hyp then ref).
fn intern<T: PartialEq>(hyp: &[T], reference: &[T]) -> (Vec<u16>, Vec<u16>) {
    let mut table: Vec<&T> = Vec::new();
    let mut ids = Vec::with_capacity(hyp.len() + reference.len());
    for t in hyp.iter().chain(reference) {
        let id = match table.iter().position(|u| *u == t) {
            Some(p) => p,
            None => {
                table.push(t);
                table.len() - 1
            }
        };
        ids.push(id as u16);
    }
    let r = ids.split_off(hyp.len());
    (ids, r)
}

struct SearchNode {
    seq: Vec<u16>,
    parent: usize,
    shift: Option<Shift>,
    depth: usize,
}

/// Exact minimum of shifts + residual edits, by breadth-first search over
/// block moves. Among optimal states the shallowest one found first in
/// (start, length, destination) order wins.
fn exact_shifts<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> (Vec<T>, Vec<Shift>) {
    let (h, r) = intern(hyp, reference);
    let root_distance = edit_distance(&h, &r);
    let bound = multiset_bound(&h, &r);
    let mut best_total = root_distance;
    let mut best_node = 0usize;

    let mut seen: HashSet<Vec<u16>> = HashSet::new();
    seen.insert(h.clone());
    let mut nodes = vec![SearchNode {
        seq: h,
        parent: 0,
        shift: None,
        depth: 0,
    }];
    let mut distances = vec![root_distance];
    let mut head = 0;
    while head < nodes.len() {
        let depth = nodes[head].depth;
        // BFS: every later node is at least this deep
        if depth + 1 + bound >= best_total {
            break;
        }
        let n = nodes[head].seq.len();
        for start in 0..n {
            for len in 1..=n - start {
                for dest in 0..=n - len {
                    if dest == start {
                        continue;
                    }
                    let cand = apply_shift(&nodes[head].seq, start, len, dest);
                    if seen.contains(&cand) {
                        continue;
                    }
                    seen.insert(cand.clone());
                    let d = edit_distance(&cand, &r);
                    let shift = Shift {
                        start,
                        len,
                        dest,
                        distance_before: distances[head],
                        distance_after: d,
                    };
                    nodes.push(SearchNode {
                        seq: cand,
                        parent: head,
                        shift: Some(shift),
                        depth: depth + 1,
                    });
                    distances.push(d);
                    if depth + 1 + d < best_total {
                        best_total = depth + 1 + d;
                        best_node = nodes.len() - 1;
                    }
                }
            }
        }
        head += 1;
    }

    let mut trace = Vec::new();
    let mut at = best_node;
    while let Some(shift) = nodes[at].shift {
        trace.push(shift);
        at = nodes[at].parent;
    }
    trace.reverse();
    let mut shifted = hyp.to_vec();
    for s in &trace {
        shifted = apply_shift(&shifted, s.start, s.len, s.dest);
    }
    (shifted, trace)
}

fn greedy_shifts<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> (Vec<T>, Vec<Shift>) {
    let mut current = hyp.to_vec();
    let mut distance = edit_distance(&current, reference);
    let mut trace = Vec::new();
    while distance >= 2 {
        let Some(shift) = best_shift(&current, reference, distance) else {
            break;
        };
        current = apply_shift(&current, shift.start, shift.len, shift.dest);
        distance = shift.distance_after;
        trace.push(shift);
    }
    (current, trace)
}

/// TER with the list of applied shifts, in application order.
///
/// Hypotheses of at most [`EXACT_SEARCH_MAX_TOKENS`] tokens get the exact
/// minimum over all shift sequences; longer ones use the greedy loop, where
/// every accepted shift lowers the edit distance by at least 2.
pub fn ter_with_trace<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> Result<(TerScore, Vec<Shift>)> {
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let (shifted, trace) = if hyp.len() <= EXACT_SEARCH_MAX_TOKENS {
        exact_shifts(hyp, reference)
    } else {
        greedy_shifts(hyp, reference)
    };
    let ops = edit_ops(&shifted, reference);
    Ok((
        TerScore {
            insertions: ops.insertions,
            deletions: ops.deletions,
            substitutions: ops.substitutions,
            shifts: trace.len(),
            ref_len: reference.len(),
        },
        trace,
    ))
}

/// Greedy-shift TER over pre-tokenized input.
pub fn ter<T: PartialEq + Clone>(hyp: &[T], reference: &[T]) -> Result<TerScore> {
    ter_with_trace(hyp, reference).map(|(s, _)| s)
}

/// Tokenizes both sides with the default signature and scores them.
pub fn ter_sentence(hyp: &str, reference: &str) -> Result<TerScore> {
    ter_sentence_with(hyp, reference, TokenizeOptions::default())
}

pub fn ter_sentence_with(hyp: &str, reference: &str, opts: TokenizeOptions) -> Result<TerScore> {
    let h = tokenize_tercom(hyp, opts);
    let r = tokenize_tercom(reference, opts);
    ter(&h, &r)
}
