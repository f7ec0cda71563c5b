mod common;

use mapstory::encoder::{save_checkpoint, Checkpoint, ClassifierMeta, ToyEncoder};
use mapstory::pipeline::{
    checkpoint_path, load_predictors, write_base_checkpoint, BackendKind, PipelineError,
    ServiceConfig,
};
use mapstory::taxonomy::{CaptionCategory, VocabularySet};
use mapstory::{Aspect, Pipeline};

fn vocabularies() -> VocabularySet {
    VocabularySet::load(&common::fixtures().join("vocab.toml")).unwrap()
}

fn write_finetuned(dir: &std::path::Path, vocabs: &VocabularySet) {
    for (i, c) in CaptionCategory::ALL.into_iter().enumerate() {
        let labels = vocabs.get(c).unwrap().labels().to_vec();
        let ck = Checkpoint {
            encoder: ToyEncoder::new(16, i as u64),
            classifier: Some(ClassifierMeta {
                category: c,
                prompts: labels.clone(),
                labels,
            }),
        };
        save_checkpoint(&checkpoint_path(dir, c), &ck).unwrap();
    }
}

fn service_config(dir: &std::path::Path, backend: &str) -> ServiceConfig {
    let fx = common::fixtures();
    let text = format!(
        "vocab_config = {:?}\ntree_config = {:?}\nmodel_dir = {:?}\nbackend = {backend:?}\n",
        fx.join("vocab.toml"),
        fx.join("tree.toml"),
        dir
    );
    ServiceConfig::from_toml_str(&text, dir).unwrap()
}

#[test]
fn finetuned_pipeline_tells_a_story() {
    let dir = tempfile::tempdir().unwrap();
    let vocabs = vocabularies();
    write_finetuned(dir.path(), &vocabs);
    let pipeline = service_config(dir.path(), "finetuned")
        .build_pipeline()
        .unwrap();
    let img = common::noisy_image([200, 60, 50], 30, 20, 20, 1);
    let a = pipeline.story(&img, &Aspect::ALL).unwrap();
    let b = pipeline.story(&img, &Aspect::ALL).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.keywords[0].category, CaptionCategory::MapType);
    assert_eq!(
        a.keywords.len(),
        1 + pipeline.tree().branch(&a.map_type).unwrap().len()
    );
}

#[test]
fn zeroshot_pipeline_uses_base_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    assert!(service_config(dir.path(), "zeroshot")
        .build_pipeline()
        .is_err());
    write_base_checkpoint(dir.path(), 32, 0).unwrap();
    let pipeline = service_config(dir.path(), "zeroshot")
        .build_pipeline()
        .unwrap();
    let p = pipeline
        .predict(
            CaptionCategory::Topic,
            &common::noisy_image([9, 9, 9], 5, 8, 8, 0),
        )
        .unwrap();
    assert_eq!(p.scores.len(), 3);
}

#[test]
fn checkpoint_for_other_vocabulary_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let vocabs = vocabularies();
    write_finetuned(dir.path(), &vocabs);
    let ck = Checkpoint {
        encoder: ToyEncoder::new(16, 0),
        classifier: Some(ClassifierMeta {
            category: CaptionCategory::Topic,
            labels: vec!["tourism".into(), "military".into()],
            prompts: vec!["tourism".into(), "military".into()],
        }),
    };
    save_checkpoint(&checkpoint_path(dir.path(), CaptionCategory::Topic), &ck).unwrap();
    let Err(err) = load_predictors(
        BackendKind::Finetuned,
        &vocabs,
        &CaptionCategory::ALL,
        dir.path(),
    ) else {
        panic!("mismatched checkpoint accepted");
    };
    assert!(
        matches!(err, PipelineError::CheckpointMismatch { .. }),
        "{err}"
    );
}

#[test]
fn missing_files_fail_fast() {
    let dir = tempfile::tempdir().unwrap();
    let text = "vocab_config = \"nope.toml\"\nbackend = \"mock\"\n";
    let cfg = ServiceConfig::from_toml_str(text, dir.path()).unwrap();
    assert!(matches!(cfg.check_files(), Err(PipelineError::Config(_))));
    let cfg = service_config(&dir.path().join("absent"), "finetuned");
    assert!(cfg.check_files().is_err());
}

#[test]
fn mock_pipeline_uses_default_tree() {
    let pipeline = Pipeline::mock(vocabularies()).unwrap();
    assert_eq!(pipeline.tree(), &mapstory::tree::default_tree());
}
