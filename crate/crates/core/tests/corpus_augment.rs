use std::collections::HashSet;

use proptest::prelude::*;
use qeforge_core::augment::{compose_step2_corpus, dag1_concat, Approach, MixOptions};
use qeforge_core::corpus::*;

fn lp(s: &str) -> LangPair {
    s.parse().unwrap()
}

fn samples(n: usize, pair: &str, domain: Domain, origin: Origin) -> Vec<QeSample> {
    (0..n)
        .map(|i| {
            QeSample::new(
                format!("{pair} s{i}"),
                format!("t{i}"),
                (i % 10) as f64 / 10.0,
                lp(pair),
                domain,
                origin,
            )
            .unwrap()
        })
        .collect()
}

fn spec(dev: f64, test: f64, seed: u64) -> SplitSpec {
    SplitSpec {
        ratios: [1.0 - dev - test, dev, test],
        seed,
        shuffle: true,
    }
}

proptest! {
    #[test]
    fn split_partitions_the_input(n in 20usize..400, dev in 0.05f64..0.3, test in 0.05f64..0.3, seed in any::<u64>()) {
        let data: Vec<usize> = (0..n).collect();
        let s = spec(dev, test, seed);
        let parts = split(&data, &s).unwrap();
        let mut all: Vec<usize> = parts.train.iter().chain(&parts.dev).chain(&parts.test).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, data.clone());
        prop_assert_eq!(parts.dev.len(), (n as f64 * dev + 1e-9).floor() as usize);
        prop_assert_eq!(parts.test.len(), (n as f64 * test + 1e-9).floor() as usize);
        prop_assert_eq!(split(&data, &s).unwrap(), parts);
    }

    #[test]
    fn subsample_is_a_seeded_ordered_subset(n in 0usize..300, k in 0usize..300, seed in any::<u64>()) {
        let data: Vec<usize> = (0..n).collect();
        match subsample(&data, k, seed) {
            Ok(sub) => {
                prop_assert!(k <= n);
                prop_assert_eq!(sub.len(), k);
                prop_assert!(sub.windows(2).all(|w| w[0] < w[1]));
                prop_assert_eq!(subsample(&data, k, seed).unwrap(), sub);
            }
            Err(_) => prop_assert!(k > n),
        }
    }

    #[test]
    fn concat_preserves_sizes_and_order(sizes in prop::collection::vec(0usize..50, 0..6)) {
        let sets: Vec<Vec<(usize, usize)>> = sizes.iter().enumerate().map(|(s, &n)| (0..n).map(|i| (s, i)).collect()).collect();
        let all = concat(&sets);
        prop_assert_eq!(all.len(), sizes.iter().sum::<usize>());
        let mut expected = Vec::new();
        for set in &sets {
            expected.extend_from_slice(set);
        }
        prop_assert_eq!(all, expected);
    }

    #[test]
    fn qe_tsv_round_trips(labels in prop::collection::vec(0.0f64..1.0, 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let set: Vec<QeSample> = labels
            .iter()
            .enumerate()
            .map(|(i, l)| QeSample::new(format!("src {i}"), format!("tgt {i}"), *l, lp("en-de"), Domain::Id, Origin::Authentic).unwrap())
            .collect();
        let path = dir.path().join("d.tsv");
        write_qe_tsv(&path, &set).unwrap();
        let back = load_qe_tsv(&path, &lp("en-de"), Domain::Id, Origin::Authentic).unwrap();
        prop_assert_eq!(fingerprint(&back), fingerprint(&set));
    }
}

#[test]
fn split_differs_across_seeds() {
    let data: Vec<usize> = (0..500).collect();
    assert_ne!(
        split(&data, &spec(0.1, 0.1, 1)).unwrap(),
        split(&data, &spec(0.1, 0.1, 2)).unwrap()
    );
}

#[test]
fn manifest_records_pairs_and_domains() {
    let mut set = samples(5, "en-de", Domain::Id, Origin::Authentic);
    set.extend(samples(3, "ro-en", Domain::Id, Origin::Authentic));
    let m = DatasetManifest::describe("x", vec![], &set);
    let dir = tempfile::tempdir().unwrap();
    m.save(&dir.path().join("m.json")).unwrap();
    assert_eq!(DatasetManifest::load(&dir.path().join("m.json")).unwrap(), m);
}

#[test]
fn step2_composition_counts() {
    let pairs = ["en-de", "en-zh", "ro-en", "ru-en"];
    let ood = samples(60_000, "en-it", Domain::Ood, Origin::Authentic);
    let id: Vec<Vec<QeSample>> = pairs
        .iter()
        .map(|p| samples(7000, p, Domain::Id, Origin::Authentic))
        .collect();
    let syn: Vec<Vec<QeSample>> = pairs
        .iter()
        .map(|p| samples(7000, p, Domain::Id, Origin::Synthetic))
        .collect();

    let dag1 = compose_step2_corpus(&ood, &id, &[], MixOptions::default()).unwrap();
    assert_eq!(
        (dag1.id_count, dag1.ood_count, dag1.samples.len()),
        (28_000, 28_000, 56_000)
    );

    let opts = MixOptions {
        approach: Approach::Dag2,
        ..Default::default()
    };
    let dag2 = compose_step2_corpus(&ood, &id, &syn, opts).unwrap();
    assert_eq!((dag2.id_count, dag2.ood_count), (56_000, 56_000));
    let synthetic = dag2.samples.iter().filter(|s| s.origin == Origin::Synthetic).count();
    assert_eq!(synthetic, 28_000);

    let again = compose_step2_corpus(&ood, &id, &syn, opts).unwrap();
    assert_eq!(fingerprint(&again.samples), fingerprint(&dag2.samples));
    let unique: HashSet<String> = dag2
        .samples
        .iter()
        .filter(|s| s.domain == Domain::Ood)
        .map(|s| s.src.clone())
        .collect();
    assert_eq!(unique.len(), 56_000);
}

#[test]
fn dag2_without_synthetic_data_is_rejected() {
    let ood = samples(100, "en-it", Domain::Ood, Origin::Authentic);
    let id = vec![samples(10, "en-de", Domain::Id, Origin::Authentic)];
    let opts = MixOptions {
        approach: Approach::Dag2,
        ..Default::default()
    };
    assert!(compose_step2_corpus(&ood, &id, &[], opts).is_err());
}

#[test]
fn dag1_concat_rejects_out_of_domain_sets() {
    let ok = dag1_concat(&[samples(3, "en-de", Domain::Id, Origin::Authentic)]).unwrap();
    assert_eq!(ok.len(), 3);
    assert!(dag1_concat(&[samples(3, "en-it", Domain::Ood, Origin::Authentic)]).is_err());
}
