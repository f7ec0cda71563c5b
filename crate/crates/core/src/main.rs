use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};

use mapstory::classify::{fine_tune, CategoryClassifier, TrainingConfig};
use mapstory::encoder::{
    load_checkpoint, model_dir, save_checkpoint, Checkpoint, ClassifierMeta, ToyEncoder,
};
use mapstory::eval::{evaluate, render_report, EvaluationReport, PredictorBackend};
use mapstory::ingest::{run_build, BuildConfig, DatasetManifest};
use mapstory::pipeline::{
    checkpoint_path, load_labeled_images, load_predictors, BackendKind, ServiceConfig,
};
use mapstory::taxonomy::{parse_aspects, Aspect, CaptionCategory, VocabularySet};

#[derive(Parser)]
#[command(
    name = "mapstory",
    version,
    about = "Historical map keyword captioning and storytelling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build per-category train/test manifests from a metadata corpus.
    BuildDataset {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        test_fraction: Option<f64>,
    },
    /// Fine-tune one category classifier on a manifest.
    Train {
        #[arg(long)]
        category: CaptionCategory,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Held-out manifest for best-epoch selection.
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        /// Starting checkpoint; a fresh toy encoder when omitted.
        #[arg(long)]
        init: Option<PathBuf>,
        #[arg(long, default_value_t = ToyEncoder::DEFAULT_EMBED_DIM)]
        embed_dim: usize,
        /// Vocabulary config supplying a prompt template for the category.
        #[arg(long)]
        vocab: Option<PathBuf>,
    },
    /// Classify one image with a fine-tuned category checkpoint.
    Predict {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        category: CaptionCategory,
        #[arg(long, env = "MAPSTORY_MODEL_DIR")]
        model_dir: Option<PathBuf>,
    },
    /// Per-category accuracy on the `*.test.manifest` files of a directory.
    Evaluate {
        /// One or more of zeroshot, finetuned, mock (comma separated).
        #[arg(long, value_delimiter = ',', required = true)]
        backend: Vec<String>,
        #[arg(long)]
        manifests: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, env = "MAPSTORY_MODEL_DIR")]
        model_dir: Option<PathBuf>,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Tell the story of one map and print the response body.
    Story {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "where,what,when,why")]
        aspects: String,
    },
    /// Write an untrained toy encoder checkpoint (the zero-shot base).
    InitEncoder {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = ToyEncoder::DEFAULT_EMBED_DIM)]
        embed_dim: usize,
    },
}

fn manifest_root(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn build_dataset(
    corpus: &Path,
    out: &Path,
    config: &Path,
    seed: Option<u64>,
    fraction: Option<f64>,
) -> Result<()> {
    let cfg = BuildConfig::load(config)?;
    let seed = seed.unwrap_or(cfg.split.seed);
    let fraction = fraction.unwrap_or(cfg.split.test_fraction);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let summary = run_build(corpus, out, &cfg, seed, fraction)?;
    for line in &summary.output.log {
        println!("{line}");
    }
    println!(
        "wrote {} manifest files to {}",
        summary.files.len(),
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train(
    category: CaptionCategory,
    manifest_path: &Path,
    out: &Path,
    config: TrainingConfig,
    val_manifest: Option<&Path>,
    init: Option<&Path>,
    embed_dim: usize,
    vocab: Option<&Path>,
) -> Result<()> {
    let manifest = DatasetManifest::read(manifest_path)?;
    if manifest.category != category {
        bail!(
            "{} holds {} samples, not {category}",
            manifest_path.display(),
            manifest.category
        );
    }
    let train_set = load_labeled_images(&manifest, &manifest_root(manifest_path))?;
    let val_set = match val_manifest {
        Some(p) => Some(load_labeled_images(
            &DatasetManifest::read(p)?,
            &manifest_root(p),
        )?),
        None => None,
    };
    let encoder = match init {
        Some(p) => load_checkpoint(p)?.encoder,
        None => ToyEncoder::new(embed_dim, config.seed),
    };
    let template = match vocab {
        Some(p) => VocabularySet::load(p)?
            .template(category)
            .map(str::to_string),
        None => None,
    };
    let base =
        CategoryClassifier::new(encoder, manifest.class_labels.clone(), template.as_deref())?;
    let (tuned, log) = fine_tune(&base, &train_set, &config, val_set.as_deref())?;
    print!("{}", log.to_text());
    let ck = Checkpoint {
        classifier: Some(ClassifierMeta {
            category,
            labels: manifest.class_labels.labels().to_vec(),
            prompts: tuned.prompts().to_vec(),
        }),
        encoder: tuned
            .into_encoder()
            .with_name(format!("{category}-finetuned")),
    };
    save_checkpoint(out, &ck)?;
    std::fs::write(out.with_extension("log"), log.to_text())?;
    println!("selected epoch {} -> {}", log.selected_epoch, out.display());
    Ok(())
}

fn predict(image: &Path, category: CaptionCategory, dir: Option<PathBuf>) -> Result<()> {
    let path = checkpoint_path(&model_dir(dir), category);
    let ck = load_checkpoint(&path)?;
    let meta = ck
        .classifier
        .with_context(|| format!("{} has no classifier metadata", path.display()))?;
    let vocab = mapstory::ClassVocabulary::new(
        category,
        &meta.labels,
        mapstory::taxonomy::VocabularySource::DerivedFromManifest,
    )?;
    let clf = CategoryClassifier::with_prompts(ck.encoder, vocab, meta.prompts)?;
    let bytes = std::fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    let pred = mapstory::KeywordPredictor::predict(&clf, &mapstory::ingest::decode_image(&bytes)?)?;
    println!("{}", pred.caption.label);
    for (label, score) in &pred.scores {
        println!("{score:.6}\t{label}");
    }
    Ok(())
}

fn run_evaluate(
    backends: &[String],
    dir: &Path,
    out: &Path,
    models: Option<PathBuf>,
) -> Result<()> {
    let mut manifests = Vec::new();
    for category in CaptionCategory::ALL {
        let path = dir.join(format!("{}.test.manifest", category.id()));
        if path.is_file() {
            manifests.push(DatasetManifest::read(&path)?);
        }
    }
    if manifests.is_empty() {
        bail!("no *.test.manifest files in {}", dir.display());
    }
    let mut vocabularies = VocabularySet::default();
    for m in &manifests {
        vocabularies.insert(m.class_labels.clone());
    }
    let evaluated: Vec<&DatasetManifest> = manifests
        .iter()
        .filter(|m| !m.class_labels.is_empty())
        .collect();
    let categories: Vec<CaptionCategory> = evaluated.iter().map(|m| m.category).collect();
    let models = model_dir(models);
    let mut report = EvaluationReport::default();
    for m in &evaluated {
        report.sample_counts.insert(m.category, m.len());
    }
    for name in backends {
        let kind: BackendKind = name.parse()?;
        let backend = PredictorBackend {
            name: name.clone(),
            predictors: load_predictors(kind, &vocabularies, &categories, &models)?,
            image_root: dir.to_path_buf(),
        };
        let owned: Vec<DatasetManifest> = evaluated.iter().map(|m| (*m).clone()).collect();
        let result = evaluate(&backend, &owned)?;
        for w in &result.warnings {
            eprintln!("warning: {w}");
        }
        report.add_row(name.clone(), result.accuracies);
    }
    let text = render_report(&report);
    print!("{text}");
    let (text_path, json_path) = if out.extension().is_some_and(|e| e == "json") {
        (out.with_extension("txt"), out.to_path_buf())
    } else {
        (out.to_path_buf(), out.with_extension("json"))
    };
    std::fs::write(&text_path, &text)?;
    std::fs::write(&json_path, report.to_json())?;
    Ok(())
}

fn story(image: &Path, config: &Path, aspects: &str) -> Result<()> {
    let aspects: Vec<Aspect> = parse_aspects(aspects)?;
    let pipeline = ServiceConfig::load(config)?.build_pipeline()?;
    let bytes = std::fs::read(image).with_context(|| format!("reading {}", image.display()))?;
    let response = pipeline.story(&mapstory::ingest::decode_image(&bytes)?, &aspects)?;
    println!("{}", serde_json::to_string_pretty(&response)?);
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::BuildDataset {
            corpus,
            out,
            config,
            seed,
            test_fraction,
        } => build_dataset(&corpus, &out, &config, seed, test_fraction),
        Command::Train {
            category,
            manifest,
            out,
            epochs,
            seed,
            learning_rate,
            batch_size,
            val_manifest,
            init,
            embed_dim,
            vocab,
        } => {
            let defaults = TrainingConfig::default();
            let config = TrainingConfig {
                epochs: epochs.unwrap_or(defaults.epochs),
                seed: seed.unwrap_or(defaults.seed),
                learning_rate: learning_rate.unwrap_or(defaults.learning_rate),
                batch_size: batch_size.unwrap_or(defaults.batch_size),
                ..defaults
            };
            train(
                category,
                &manifest,
                &out,
                config,
                val_manifest.as_deref(),
                init.as_deref(),
                embed_dim,
                vocab.as_deref(),
            )
        }
        Command::Predict {
            image,
            category,
            model_dir,
        } => predict(&image, category, model_dir),
        Command::Evaluate {
            backend,
            manifests,
            out,
            model_dir,
        } => run_evaluate(&backend, &manifests, &out, model_dir),
        Command::Serve { config } => {
            let cfg = ServiceConfig::load(&config)?;
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(mapstory::service::serve(cfg))?;
            Ok(())
        }
        Command::Story {
            image,
            config,
            aspects,
        } => story(&image, &config, &aspects),
        Command::InitEncoder {
            out,
            seed,
            embed_dim,
        } => {
            let ck = Checkpoint {
                encoder: ToyEncoder::new(embed_dim, seed).with_name("base"),
                classifier: None,
            };
            save_checkpoint(&out, &ck)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

#[allow(dead_code)]
fn _assert_send_sync() {
    fn check<T: Send + Sync>() {}
    check::<Arc<mapstory::Pipeline>>();
}
