mod common;

use mapstory::classify::{
    contrastive_loss_and_grad, fine_tune, CategoryClassifier, TrainingConfig,
};
use mapstory::encoder::{load_checkpoint, save_checkpoint, Checkpoint, ClassifierMeta, ToyEncoder};
use mapstory::taxonomy::{CaptionCategory, ClassVocabulary};
use mapstory::KeywordPredictor;

fn base(seed: u64) -> CategoryClassifier<ToyEncoder> {
    CategoryClassifier::new(
        ToyEncoder::new(ToyEncoder::DEFAULT_EMBED_DIM, seed),
        ClassVocabulary::map_type(),
        None,
    )
    .unwrap()
}

fn toy_config() -> TrainingConfig {
    TrainingConfig {
        learning_rate: 1e-2,
        ..TrainingConfig::default()
    }
}

fn accuracy(clf: &CategoryClassifier<ToyEncoder>, set: &[mapstory::classify::LabeledImage]) -> f64 {
    let correct = set
        .iter()
        .filter(|s| clf.predict(&s.image).unwrap().caption.label == s.label)
        .count();
    correct as f64 / set.len() as f64
}

#[test]
fn toy_set_is_linearly_separable() {
    let set = common::red_blue_set();
    let feats: Vec<Vec<f32>> = set
        .iter()
        .map(|s| ToyEncoder::image_features(&s.image))
        .collect();
    let pos: Vec<bool> = set.iter().map(|s| s.label == "pictorial map").collect();
    assert!(common::linearly_separable(&feats, &pos, 1000));
}

#[test]
fn fine_tune_fits_toy_set() {
    let set = common::red_blue_set();
    for seed in 0..3 {
        assert!(
            accuracy(&base(seed), &set) < 1.0,
            "untrained encoder already fits seed {seed}"
        );
        let (tuned, log) = fine_tune(
            &base(seed),
            &set,
            &TrainingConfig {
                seed,
                ..toy_config()
            },
            None,
        )
        .unwrap();
        assert_eq!(log.epochs.len(), 30);
        assert_eq!(log.selected_epoch, 30);
        assert_eq!(
            accuracy(&tuned, &set),
            1.0,
            "seed {seed}\n{}",
            log.to_text()
        );
        let first = log.epochs.first().unwrap().loss;
        let last = log.epochs.last().unwrap().loss;
        assert!(last < first, "loss {first} -> {last}");
    }
}

#[test]
fn zero_learning_rate_is_identity() {
    let set = common::red_blue_set();
    let start = base(4);
    let cfg = TrainingConfig {
        learning_rate: 0.0,
        ..toy_config()
    };
    let (tuned, _) = fine_tune(&start, &set, &cfg, None).unwrap();
    let bits = |m: &mapstory::encoder::Matrix| {
        m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(
        bits(tuned.encoder().image_projection()),
        bits(start.encoder().image_projection())
    );
    assert_eq!(
        bits(tuned.encoder().text_projection()),
        bits(start.encoder().text_projection())
    );
    for s in &set {
        assert_eq!(
            tuned.predict(&s.image).unwrap(),
            start.predict(&s.image).unwrap()
        );
    }
}

#[test]
fn same_seed_same_parameters() {
    let set = common::red_blue_set();
    let (a, la) = fine_tune(&base(2), &set, &toy_config(), None).unwrap();
    let (b, lb) = fine_tune(&base(2), &set, &toy_config(), None).unwrap();
    assert_eq!(a.encoder(), b.encoder());
    assert_eq!(la, lb);
    let (c, _) = fine_tune(
        &base(2),
        &set,
        &TrainingConfig {
            seed: 9,
            ..toy_config()
        },
        None,
    )
    .unwrap();
    assert_ne!(a.encoder(), c.encoder());
}

#[test]
fn gradient_matches_central_differences() {
    for seed in 0..3 {
        let err = common::gradient_check(seed, 150);
        assert!(err <= 1e-4, "seed {seed}: relative error {err:e}");
    }
}

#[test]
fn reference_loss_agrees_with_crate_loss() {
    let enc = ToyEncoder::new(8, 3);
    let f64v = |v: Vec<f32>| v.into_iter().map(f64::from).collect::<Vec<_>>();
    let xi: Vec<Vec<f64>> = (0..3)
        .map(|i| {
            f64v(ToyEncoder::image_features(&common::noisy_image(
                [40 * i as u8, 90, 200],
                30,
                10,
                10,
                i,
            )))
        })
        .collect();
    let xt: Vec<Vec<f64>> = ["a", "bb", "ccc"]
        .iter()
        .map(|t| f64v(ToyEncoder::text_features(t).unwrap()))
        .collect();
    let wi = f64v(enc.image_projection().as_slice().to_vec());
    let wt = f64v(enc.text_projection().as_slice().to_vec());
    let got = contrastive_loss_and_grad(&wi, &wt, 8, &xi, &xt, 14.0).loss;
    let want = common::reference_loss(&wi, &wt, 8, &xi, &xt, 14.0);
    assert!((got - want).abs() < 1e-10, "{got} vs {want}");
}

#[test]
fn checkpoint_round_trip_preserves_predictions() {
    let set = common::red_blue_set();
    let (tuned, _) = fine_tune(
        &base(1),
        &set,
        &TrainingConfig {
            epochs: 3,
            ..toy_config()
        },
        None,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("map_type.ckpt");
    let ck = Checkpoint {
        classifier: Some(ClassifierMeta {
            category: CaptionCategory::MapType,
            labels: tuned.vocabulary().labels().to_vec(),
            prompts: tuned.prompts().to_vec(),
        }),
        encoder: tuned.encoder().clone(),
    };
    save_checkpoint(&path, &ck).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded, ck);
    let meta = loaded.classifier.unwrap();
    let restored =
        CategoryClassifier::with_prompts(loaded.encoder, tuned.vocabulary().clone(), meta.prompts)
            .unwrap();
    for s in &set {
        let (a, b) = (
            tuned.predict(&s.image).unwrap(),
            restored.predict(&s.image).unwrap(),
        );
        assert_eq!(a.caption.label, b.caption.label);
        let bits = |p: &mapstory::Prediction| {
            p.scores
                .iter()
                .map(|(_, v)| v.to_bits())
                .collect::<Vec<_>>()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}
