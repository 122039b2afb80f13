mod common;

use num_rational::Ratio;
use proptest::prelude::*;
use qeforge_core::metrics::*;
use serde::Deserialize;

use common::oracles::exhaustive_ter_edits;

#[derive(Deserialize)]
struct TokenizeCase {
    text: String,
    lowercase: bool,
    keep_punct: bool,
    tokens: Vec<String>,
}

#[test]
fn tokenizer_matches_unicode_table_fixture() {
    let raw = include_str!("fixtures/tokenize_cases.jsonl");
    let cases: Vec<TokenizeCase> = raw.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(cases.len() >= 200);
    for c in &cases {
        let opts = TokenizeOptions {
            lowercase: c.lowercase,
            keep_punct: c.keep_punct,
        };
        assert_eq!(tokenize_tercom(&c.text, opts), c.tokens, "text {:?}", c.text);
    }
}

fn toks(s: &str) -> Vec<&str> {
    s.split_whitespace().collect()
}

#[test]
fn ter_fixed_cases() {
    assert_eq!(
        ter(&toks("a b c"), &toks("a b c")).unwrap().score(),
        Ratio::from_integer(0)
    );
    assert_eq!(ter(&toks(""), &toks("a b c")).unwrap().score(), Ratio::from_integer(1));
    assert_eq!(
        ter(&toks("x y z"), &toks("a b c")).unwrap().score(),
        Ratio::from_integer(1)
    );
    let swap = ter(&toks("c d a b"), &toks("a b c d")).unwrap();
    assert_eq!(swap.score(), Ratio::new(1, 4));
    assert_eq!(swap.shifts, 1);
    assert!(matches!(
        ter(&toks("a"), &toks("")),
        Err(qeforge_core::Error::EmptyReference)
    ));
}

#[test]
fn ter_sentence_tokenizes_before_scoring() {
    let s = ter_sentence("The cat, sat.", "the cat sat").unwrap();
    assert_eq!((s.deletions, s.ref_len), (2, 3));
    let no_punct = TokenizeOptions {
        keep_punct: false,
        ..Default::default()
    };
    assert_eq!(
        ter_sentence_with("The cat, sat.", "the cat sat", no_punct)
            .unwrap()
            .edits(),
        0
    );
}

#[test]
fn long_sentences_use_the_greedy_search_and_stay_bounded() {
    let reference: Vec<String> = (0..40).map(|i| format!("w{i}")).collect();
    let mut hyp = reference.clone();
    hyp.rotate_left(13);
    let s = ter(&hyp, &reference).unwrap();
    assert!(s.edits() <= edit_distance(&hyp, &reference));
    assert!(s.shifts >= 1);
}

fn sym_seq(max: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 0..=max)
}

proptest! {
    #[test]
    fn ter_agrees_with_exhaustive_oracle(hyp in sym_seq(5), reference in sym_seq(5).prop_filter("non-empty", |r| !r.is_empty())) {
        let s = ter(&hyp, &reference).unwrap();
        prop_assert_eq!(s.edits(), exhaustive_ter_edits(&hyp, &reference));
        prop_assert_eq!(s.ref_len, reference.len());
    }

    #[test]
    fn ter_never_exceeds_plain_edit_distance(hyp in prop::collection::vec(0u8..6, 0..30), reference in prop::collection::vec(0u8..6, 1..30)) {
        let s = ter(&hyp, &reference).unwrap();
        prop_assert!(s.edits() <= edit_distance(&hyp, &reference));
        prop_assert!(s.edits() <= hyp.len().max(reference.len()) + s.shifts);
    }

    #[test]
    fn ter_identity_is_zero(reference in prop::collection::vec(0u8..6, 1..30)) {
        prop_assert_eq!(ter(&reference, &reference).unwrap().edits(), 0);
    }

    #[test]
    fn pearson_is_affine_invariant(
        xs in prop::collection::vec(-100.0f64..100.0, 3..40),
        a in 0.1f64..10.0,
        b in -50.0f64..50.0,
        seed in any::<u64>(),
    ) {
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| x + ((i as u64 ^ seed) % 7) as f64).collect();
        if let (Ok(r), Ok(r2)) = (pearson(&xs, &ys), pearson(&xs.iter().map(|x| a * x + b).collect::<Vec<_>>(), &ys)) {
            prop_assert!((r.r - r2.r).abs() < 1e-9);
            let flipped: Vec<f64> = xs.iter().map(|x| -a * x + b).collect();
            prop_assert!((pearson(&flipped, &ys).unwrap().r + r.r).abs() < 1e-9);
        }
    }

    #[test]
    fn bleu_ignores_sentence_order(
        pairs in prop::collection::vec(("[a-e]( [a-e]){0,6}", "[a-e]( [a-e]){0,6}"), 1..12),
        rot in 0usize..12,
    ) {
        let (h, r): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
        let base = bleu(&h, &r).unwrap();
        let k = rot % h.len();
        let (mut h2, mut r2) = (h.clone(), r.clone());
        h2.rotate_left(k);
        r2.rotate_left(k);
        let rotated = bleu(&h2, &r2).unwrap();
        prop_assert!((base.score - rotated.score).abs() < 1e-9);
        prop_assert!((0.0..=100.0).contains(&base.score));
    }
}

#[test]
fn pearson_analytic_cases() {
    let p = |a: &[f64], b: &[f64]| pearson(a, b).unwrap().rescaled;
    assert!((p(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]) - 100.0).abs() < 1e-9);
    assert!((p(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 100.0).abs() < 1e-9);
    assert!((p(&[1.0, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]) - 80.0).abs() < 1e-9);
    assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    assert!(pearson(&[1.0f32, 2.0], &[1.0, 2.0, 3.0]).is_err());
    let r32 = pearson(&[1.0f32, 2.0, 3.0, 4.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
    assert!((r32.rescaled - 80.0).abs() < 1e-4);
}

#[test]
fn bleu_examples() {
    assert!((bleu(&["a b c d e"], &["a b c d e"]).unwrap().score - 100.0).abs() < 1e-9);
    assert_eq!(bleu(&["x y z"], &["a b c"]).unwrap().score, 0.0);
    assert!(bleu(&["a"], &["a", "b"]).is_err());
}

#[test]
fn williams_detects_real_difference() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_xoshiro::Xoshiro256PlusPlus::seed_from_u64(7);
    let gold: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let noise: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
    let close: Vec<f64> = gold.iter().map(|g| g + 0.1 * rng.random::<f64>()).collect();
    let grid = significance_grid(
        &gold,
        &[("close".into(), close), ("noise".into(), noise)],
        DEFAULT_ALPHA,
        SignificanceTest::Williams,
    )
    .unwrap();
    assert!(grid.cell(0, 1).unwrap().significant);
}

#[test]
fn increase_pct_in_single_precision() {
    let v: f32 = increase_pct(51.90f32, 47.17).unwrap();
    assert!((v - 10.03).abs() < 0.01);
}
