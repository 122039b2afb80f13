use qeforge_core::metrics::bleu;
use qeforge_core::modeling::*;
use qeforge_core::rng;
use qeforge_core::{ToyQeModelF32, ToyQeModelF64, ToySeq2SeqF64};

fn spec() -> VocabSpec {
    VocabSpec::from_texts(["the cat sat on the mat", "a dog ran far away", "qwerty zxcv"], 100)
}

fn batch(model: &ToyQeModelF64) -> Vec<(Vec<u32>, f64)> {
    [
        ("the cat sat", 0.3),
        ("a dog ran away </s> on the mat", 0.9),
        ("qwerty unseen words", 0.1),
    ]
    .iter()
    .map(|(t, l)| (model.backend.tokenize(t), *l))
    .collect()
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let model = QeModel::new(ToyEncoder::<f64>::new(3, 8, &spec()).unwrap(), 3);
    let b = batch(&model);
    let (loss, grads) = model.loss_and_grads(&b);
    assert!((loss - model.batch_loss(&b)).abs() < 1e-12);
    let eps = 1e-6;
    let mut checked = 0;
    let n_groups = model.param_groups().count();
    for g in 0..n_groups {
        let len = model.param_groups().nth(g).unwrap().len();
        for i in (0..len).step_by(len / 7 + 1) {
            let shifted = |delta: f64| {
                let mut m = model.clone();
                m.param_groups_mut().nth(g).unwrap().data[i] += delta;
                m.batch_loss(&b)
            };
            let numeric = (shifted(eps) - shifted(-eps)) / (2.0 * eps);
            let analytic = grads[g][i];
            assert!(
                (numeric - analytic).abs() <= 1e-6 * (1.0 + numeric.abs()),
                "group {g} index {i}: numeric {numeric} analytic {analytic}"
            );
            checked += 1;
        }
    }
    assert!(checked > 20);
}

#[test]
fn single_precision_model_runs() {
    let model: ToyQeModelF32 = QeModel::new(toy_encoder(3, 8, &spec()).unwrap(), 3);
    let preds = model.forward(&["the cat".to_string(), "a dog".to_string()]).unwrap();
    assert_eq!(preds.len(), 2);
    assert!(preds.iter().all(|p| p.is_finite()));
}

#[test]
fn adding_tags_keeps_existing_rows() {
    let mut enc = ToyEncoder::<f64>::new(3, 8, &spec()).unwrap();
    let cat = enc.vocab().id("cat").unwrap();
    let before = enc.embedding_row(cat).to_vec();
    enc.extend_vocabulary(&DOMAIN_TAGS, 9).unwrap();
    assert!(enc.vocab().contains(TAG_ID) && enc.vocab().contains(TAG_OOD));
    assert_eq!(enc.embedding_row(cat), &before[..]);
}

#[test]
fn rendering_appends_tag_after_target() {
    use qeforge_core::corpus::Domain;
    let r = render_input("src", "tgt", Domain::Ood, TagMode::Tag);
    assert!(r.ends_with(&format!("tgt {TAG_OOD} {SEP}")), "{r}");
    let plain = render_input("src", "tgt", Domain::Ood, TagMode::Notag);
    assert!(!plain.contains(TAG_OOD));
}

fn words(seed: u64, n: usize) -> Vec<(String, String)> {
    let mut r = rng::seeded(seed);
    let letters: Vec<char> = "abcdefghij".chars().collect();
    (0..n)
        .map(|_| {
            let w: Vec<String> = (0..4 + rng::bounded(&mut r, 3))
                .map(|_| {
                    (0..2 + rng::bounded(&mut r, 4))
                        .map(|_| letters[rng::bounded(&mut r, letters.len())])
                        .collect()
                })
                .collect();
            let s = w.join(" ");
            (s.clone(), s)
        })
        .collect()
}

#[test]
fn seq2seq_learns_to_copy() {
    let cfg = Seq2SeqConfig {
        alphabet: " abcdefghij".into(),
        ..Default::default()
    };
    let mut model: ToySeq2SeqF64 = toy_seq2seq(5, &cfg);
    let (train, dev) = (words(1, 400), words(2, 60));
    let report = model
        .fit(
            &train,
            &dev,
            &MtTrainConfig {
                max_updates: 1500,
                ..Default::default()
            },
        )
        .unwrap();
    assert!(report.best_eval_loss < report.eval_losses[0]);
    let hyps: Vec<String> = dev.iter().map(|(s, _)| model.translate_one(s)).collect();
    let refs: Vec<&str> = dev.iter().map(|(_, r)| r.as_str()).collect();
    let score = bleu(&hyps, &refs).unwrap().score;
    assert!(score >= 90.0, "copy BLEU {score}");
}

#[test]
fn seq2seq_training_is_deterministic() {
    let cfg = Seq2SeqConfig {
        alphabet: " abcdefghij".into(),
        ..Default::default()
    };
    let train_cfg = MtTrainConfig {
        max_updates: 200,
        eval_interval: 50,
        ..Default::default()
    };
    let (train, dev) = (words(1, 100), words(2, 20));
    let run = || {
        let mut m: ToySeq2SeqF64 = toy_seq2seq(5, &cfg);
        let rep = m.fit(&train, &dev, &train_cfg).unwrap();
        (m, rep)
    };
    let (a, ra) = run();
    let (b, rb) = run();
    assert_eq!(ra, rb);
    assert_eq!(a, b);
}
