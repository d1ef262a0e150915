//! The `pipeline` subcommand: every stage from raw frames to the evaluation
//! report in one invocation, with a manifest recording what ran.

use std::path::{Path, PathBuf};
use std::time::Instant;

use au2vec_core::cluster::{self, FitOptions};
use au2vec_core::cooccur::{self, Weighting};
use au2vec_core::eval;
use au2vec_core::features;
use au2vec_core::glove::{self, GloveConfig};
use au2vec_core::ingest;
use au2vec_core::tokenize;
use au2vec_core::{Error, Result};

use crate::manifest::{digest_of, PipelineManifest, StageRecord};
use crate::stages;

pub struct PipelineArgs {
    pub input: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub labels: PathBuf,
    pub out_dir: PathBuf,
    pub k: usize,
    pub dim: usize,
    pub window: u32,
    pub epochs: usize,
    pub min_count: u32,
    pub dist_threshold: f64,
    pub uniform: bool,
    pub levels: usize,
    pub folds: usize,
    pub lambdas: Vec<f64>,
    pub seed: u64,
    pub min_confidence: f64,
    pub target_fps: f64,
}

fn record_stage(
    manifest: &mut PipelineManifest,
    stage: &str,
    params: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
    start: Instant,
) -> Result<()> {
    let digest_all = |paths: &[&Path]| paths.iter().map(|p| digest_of(p)).collect::<Result<_>>();
    let record = StageRecord {
        stage: stage.to_string(),
        params,
        inputs: digest_all(inputs)?,
        outputs: digest_all(outputs)?,
        duration_secs: start.elapsed().as_secs_f64(),
    };
    eprintln!("[pipeline] {stage} done in {:.2}s", record.duration_secs);
    manifest.stages.push(record);
    Ok(())
}

pub fn run_pipeline(args: &PipelineArgs, workers: usize) -> Result<()> {
    std::fs::create_dir_all(&args.out_dir).map_err(|e| Error::io(&args.out_dir, e))?;
    let out = |name: &str| args.out_dir.join(name);
    let mut manifest = PipelineManifest::default();

    // Frame corpus: either ingest a CSV directory here or start from an
    // existing artifact.
    let corpus_path = match (&args.corpus, &args.input) {
        (Some(path), None) => path.clone(),
        (None, Some(input)) => {
            let start = Instant::now();
            let path = out("corpus.aufc");
            stages::run_ingest(input, &path, args.min_confidence, args.target_fps)?;
            record_stage(
                &mut manifest,
                "ingest",
                serde_json::json!({
                    "min_confidence": args.min_confidence,
                    "target_fps": args.target_fps,
                }),
                &[input.as_path()],
                &[&path],
                start,
            )?;
            path
        }
        _ => {
            return Err(Error::InvalidArgument(
                "pipeline needs exactly one of --corpus or --input".into(),
            ))
        }
    };
    let corpus = ingest::read_corpus(&corpus_path)?;

    let start = Instant::now();
    let codebook_path = out("codebook.aukm");
    let fit_opts = FitOptions {
        workers,
        ..Default::default()
    };
    let codebook = cluster::fit_kmeans(&corpus, args.k, args.seed, &fit_opts)?;
    cluster::write_codebook(&codebook, &codebook_path)?;
    record_stage(
        &mut manifest,
        "cluster",
        serde_json::json!({"k": args.k, "seed": args.seed}),
        &[&corpus_path],
        &[&codebook_path],
        start,
    )?;

    let start = Instant::now();
    let vocab_path = out("vocab.auvb");
    let tokens_path = out("tokens.autk");
    let counts = tokenize::count_cluster_frequencies(&corpus, &codebook, workers);
    let vocab = tokenize::build_vocabulary(&counts, args.min_count, args.dist_threshold);
    let tokens = tokenize::tokenize_corpus(&corpus, &codebook, &vocab, workers);
    tokenize::write_vocabulary(&vocab, &vocab_path)?;
    tokenize::write_tokens(&tokens, &tokens_path)?;
    record_stage(
        &mut manifest,
        "tokenize",
        serde_json::json!({
            "min_count": args.min_count,
            "dist_threshold": args.dist_threshold,
        }),
        &[&corpus_path, &codebook_path],
        &[&vocab_path, &tokens_path],
        start,
    )?;

    let start = Instant::now();
    let cooc_path = out("cooc.auco");
    let weighting = if args.uniform {
        Weighting::Uniform
    } else {
        Weighting::InverseDistance
    };
    let table = cooccur::build_table(&tokens, vocab.size() as u32, args.window, weighting, workers)?;
    cooccur::write_table(&table, &cooc_path)?;
    record_stage(
        &mut manifest,
        "cooccur",
        serde_json::json!({
            "window": args.window,
            "weighting": if args.uniform { "uniform" } else { "inverse_distance" },
        }),
        &[&tokens_path, &vocab_path],
        &[&cooc_path],
        start,
    )?;

    let start = Instant::now();
    let model_path = out("model.augv");
    let glove_config = GloveConfig {
        dim: args.dim,
        epochs: args.epochs,
        seed: args.seed,
        workers,
        deterministic: workers <= 1,
        ..Default::default()
    };
    let model = glove::train(&table, &vocab, &glove_config)?;
    glove::write_model(&model, &model_path)?;
    record_stage(
        &mut manifest,
        "train-embeddings",
        serde_json::json!({
            "dim": args.dim,
            "epochs": args.epochs,
            "seed": args.seed,
            "x_max": glove_config.x_max,
            "alpha": glove_config.alpha,
            "learning_rate": glove_config.learning_rate,
            "deterministic": glove_config.deterministic,
        }),
        &[&cooc_path, &vocab_path],
        &[&model_path],
        start,
    )?;

    let start = Instant::now();
    let static_path = out("static.tsv");
    let dynamic_path = out("dynamic.tsv");
    let pooled_path = out("pooled.tsv");
    features::write_features_tsv(&features::static_features_all(&corpus, workers)?, &static_path)?;
    features::write_features_tsv(
        &features::tron_features_all(&corpus, args.levels, workers)?,
        &dynamic_path,
    )?;
    features::write_features_tsv(
        &features::pooled_features_all(&tokens, &model, &vocab, workers)?,
        &pooled_path,
    )?;
    record_stage(
        &mut manifest,
        "features",
        serde_json::json!({"levels": args.levels}),
        &[&corpus_path, tokens_path.as_path(), &model_path, &vocab_path],
        &[&static_path, &dynamic_path, &pooled_path],
        start,
    )?;

    let start = Instant::now();
    let report_path = out("report.tsv");
    let labels = eval::parse_labels_tsv(&args.labels)?;
    let mut report_text = String::from(stages::report_header());
    let mut truth = Vec::new();
    for (name, path) in [
        ("static", &static_path),
        ("dynamic", &dynamic_path),
        ("pooled", &pooled_path),
    ] {
        let table = features::read_features_tsv(path)?;
        let data = eval::align(&table, &labels)?;
        let report = eval::kfold_cv(&data, args.folds, &args.lambdas, args.seed, name)?;
        eprintln!(
            "[pipeline] {name}: pcc={:.4} rmse={:.4} ccc={:.4}",
            report.pcc, report.rmse, report.ccc
        );
        report_text.push_str(&stages::report_rows(name, &report));
        truth = data.y;
    }
    let baseline = eval::random_baseline(&truth, &truth, args.seed, 100)?;
    eprintln!(
        "[pipeline] random baseline: pcc={:.4} rmse={:.4} ccc={:.4}",
        baseline.pcc, baseline.rmse, baseline.ccc
    );
    report_text.push_str(&stages::report_rows("random_baseline", &baseline));
    std::fs::write(&report_path, report_text).map_err(|e| Error::io(&report_path, e))?;
    record_stage(
        &mut manifest,
        "evaluate",
        serde_json::json!({
            "folds": args.folds,
            "lambdas": args.lambdas,
            "seed": args.seed,
            "baseline_repeats": 100,
        }),
        &[
            static_path.as_path(),
            dynamic_path.as_path(),
            pooled_path.as_path(),
            args.labels.as_path(),
        ],
        &[&report_path],
        start,
    )?;

    let manifest_path = out("manifest.json");
    manifest.write(&manifest_path)?;
    // Self-check: re-read the manifest and re-digest every recorded file so
    // a torn write or stale artifact surfaces now, not at analysis time.
    PipelineManifest::read(&manifest_path)?.verify()?;
    eprintln!(
        "[pipeline] all stages complete; manifest at {}",
        manifest_path.display()
    );
    Ok(())
}
