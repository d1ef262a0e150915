//! Implementations of the single-stage subcommands. Each takes already
//! parsed flags, talks to the core library, and reports progress on stderr;
//! stdout stays reserved for query results.

use std::path::{Path, PathBuf};

use au2vec_core::cluster::{self, FitOptions};
use au2vec_core::cooccur::{self, Weighting};
use au2vec_core::eval::{self, EvalReport};
use au2vec_core::features::{self, FeatureKind};
use au2vec_core::glove::{self, CombineMode, GloveConfig};
use au2vec_core::ingest::{self, FrameCorpus};
use au2vec_core::synth::{self, SynthConfig};
use au2vec_core::tokenize::{self, UNK_TOKEN};
use au2vec_core::{Error, Result};

/// Gathers the CSV inputs for ingest: a single file, or every `*.csv`
/// directly under a directory, sorted by file name so corpus order does not
/// depend on directory enumeration order.
fn collect_csvs(input: &Path) -> Result<Vec<PathBuf>> {
    let meta = std::fs::metadata(input).map_err(|e| Error::io(input, e))?;
    if meta.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .map_err(|e| Error::io(input, e))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .map(|ext| ext.eq_ignore_ascii_case("csv"))
                    .unwrap_or(false)
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no .csv files under {}",
            input.display()
        )));
    }
    Ok(files)
}

pub fn run_ingest(
    input: &Path,
    out: &Path,
    min_confidence: f64,
    target_fps: f64,
) -> Result<()> {
    let files = collect_csvs(input)?;
    let mut sequences = Vec::with_capacity(files.len());
    let mut clamped_total = 0usize;
    for file in &files {
        let bytes = std::fs::read(file).map_err(|e| Error::io(file, e))?;
        let video_id = file
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let outcome = ingest::parse_openface_csv(&bytes, &video_id)?;
        clamped_total += outcome.clamped;
        let kept = ingest::filter_confidence(&outcome.sequence, min_confidence);
        // Downsampling only ever reduces the rate; slower sources pass through.
        let seq = if kept.source_fps > target_fps && kept.frames.len() >= 2 {
            ingest::downsample(&kept, target_fps)?
        } else {
            kept
        };
        if seq.frames.is_empty() {
            eprintln!("[ingest] {video_id}: no frames survived filtering");
        } else {
            eprintln!(
                "[ingest] {video_id}: {} frames at {:.2} fps",
                seq.frames.len(),
                seq.source_fps
            );
        }
        sequences.push(seq);
    }
    let corpus = FrameCorpus { sequences };
    ingest::write_corpus(&corpus, out)?;
    eprintln!(
        "[ingest] wrote {} videos, {} frames ({} values clamped) to {}",
        corpus.sequences.len(),
        corpus.total_frames(),
        clamped_total,
        out.display()
    );
    Ok(())
}

pub fn run_cluster(corpus: &Path, k: usize, seed: u64, out: &Path, workers: usize) -> Result<()> {
    let corpus = ingest::read_corpus(corpus)?;
    let opts = FitOptions {
        workers,
        ..Default::default()
    };
    let codebook = cluster::fit_kmeans(&corpus, k, seed, &opts)?;
    eprintln!(
        "[cluster] k={} inertia={:.6} iterations={}",
        codebook.k, codebook.inertia, codebook.iterations_run
    );
    cluster::write_codebook(&codebook, out)?;
    eprintln!("[cluster] wrote {}", out.display());
    Ok(())
}

pub fn run_elbow(
    corpus: &Path,
    ks: &[usize],
    seed: u64,
    report: &Path,
    workers: usize,
) -> Result<()> {
    let corpus = ingest::read_corpus(corpus)?;
    let opts = FitOptions {
        workers,
        ..Default::default()
    };
    let curve = cluster::elbow_sweep(&corpus, ks, seed, &opts)?;
    let mut text = String::from("k\tinertia\n");
    for (k, inertia) in &curve.points {
        text.push_str(&format!("{k}\t{inertia}\n"));
        eprintln!("[elbow] k={k} inertia={inertia:.6}");
    }
    std::fs::write(report, text).map_err(|e| Error::io(report, e))?;
    let violations = curve.monotonic_violations();
    if !violations.is_empty() {
        eprintln!("[elbow] warning: inertia increased at k={violations:?}");
    }
    let choice = cluster::select_elbow(&curve)?;
    if choice.weak_knee {
        eprintln!(
            "[elbow] selected k={} (weak knee, score={:.6}) — curve has no clear bend",
            choice.k, choice.score
        );
    } else {
        eprintln!("[elbow] selected k={} (score={:.6})", choice.k, choice.score);
    }
    eprintln!("[elbow] wrote {}", report.display());
    Ok(())
}

pub fn run_tokenize(
    corpus: &Path,
    codebook: &Path,
    min_count: u32,
    dist_threshold: f64,
    out: &Path,
    vocab_out: &Path,
    workers: usize,
) -> Result<()> {
    let corpus = ingest::read_corpus(corpus)?;
    let codebook = cluster::read_codebook(codebook)?;
    let counts = tokenize::count_cluster_frequencies(&corpus, &codebook, workers);
    let vocab = tokenize::build_vocabulary(&counts, min_count, dist_threshold);
    let dropped = counts.len() - (vocab.size() - 3);
    let sequences = tokenize::tokenize_corpus(&corpus, &codebook, &vocab, workers);
    let interior: usize = sequences.iter().map(|s| s.tokens.len() - 2).sum();
    let unks: usize = sequences
        .iter()
        .flat_map(|s| &s.tokens)
        .filter(|&&t| t == UNK_TOKEN)
        .count();
    tokenize::write_vocabulary(&vocab, vocab_out)?;
    tokenize::write_tokens(&sequences, out)?;
    eprintln!(
        "[tokenize] vocabulary {} tokens ({} clusters dropped); {:.2}% of {} frames UNK",
        vocab.size(),
        dropped,
        if interior > 0 {
            100.0 * unks as f64 / interior as f64
        } else {
            0.0
        },
        interior
    );
    eprintln!(
        "[tokenize] wrote {} and {}",
        vocab_out.display(),
        out.display()
    );
    Ok(())
}

pub fn run_cooccur(
    tokens: &Path,
    vocab: &Path,
    window: u32,
    uniform: bool,
    out: &Path,
    workers: usize,
) -> Result<()> {
    let sequences = tokenize::read_tokens(tokens)?;
    let vocab = tokenize::read_vocabulary(vocab)?;
    let weighting = if uniform {
        Weighting::Uniform
    } else {
        Weighting::InverseDistance
    };
    let table = cooccur::build_table(&sequences, vocab.size() as u32, window, weighting, workers)?;
    eprintln!(
        "[cooccur] {} cells, total weight {:.3}",
        table.len(),
        table.total_weight()
    );
    cooccur::write_table(&table, out)?;
    eprintln!("[cooccur] wrote {}", out.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_train(
    cooc: &Path,
    vocab: &Path,
    dim: usize,
    epochs: usize,
    seed: u64,
    x_max: f64,
    alpha: f64,
    learning_rate: f64,
    out: &Path,
    export: Option<&Path>,
    workers: usize,
) -> Result<()> {
    let table = cooccur::read_table(cooc)?;
    let vocab = tokenize::read_vocabulary(vocab)?;
    let config = GloveConfig {
        dim,
        x_max,
        alpha,
        learning_rate,
        epochs,
        seed,
        workers,
        // Lock-free parallel updates trade exact reproducibility for speed;
        // a single worker keeps the sequential, reproducible path.
        deterministic: workers <= 1,
    };
    let model = glove::train(&table, &vocab, &config)?;
    match (model.loss_history.first(), model.loss_history.last()) {
        (Some(first), Some(last)) => {
            eprintln!("[train] {epochs} epochs, loss {first:.6} → {last:.6}")
        }
        _ => eprintln!("[train] empty co-occurrence table; model left at init"),
    }
    glove::write_model(&model, out)?;
    eprintln!("[train] wrote {}", out.display());
    if let Some(path) = export {
        glove::export_embeddings(&model, &vocab, path, CombineMode::Sum)?;
        eprintln!("[train] exported text vectors to {}", path.display());
    }
    Ok(())
}

pub fn run_neighbors(model: &Path, vocab: &Path, token: &str, n: usize) -> Result<()> {
    let model = glove::read_model(model)?;
    let vocab = tokenize::read_vocabulary(vocab)?;
    for (name, similarity) in glove::nearest_neighbors(&model, &vocab, token, n)? {
        println!("{name}\t{similarity:.6}");
    }
    Ok(())
}

pub struct FeatureInputs<'a> {
    pub corpus: Option<&'a Path>,
    pub tokens: Option<&'a Path>,
    pub model: Option<&'a Path>,
    pub vocab: Option<&'a Path>,
}

pub fn run_features(
    kind: FeatureKind,
    inputs: &FeatureInputs,
    levels: usize,
    out: &Path,
    workers: usize,
) -> Result<()> {
    let vectors = match kind {
        FeatureKind::Static | FeatureKind::Dynamic => {
            let corpus_path = inputs.corpus.ok_or_else(|| {
                Error::InvalidArgument(format!("--kind {} requires --corpus", kind.as_str()))
            })?;
            let corpus = ingest::read_corpus(corpus_path)?;
            if kind == FeatureKind::Static {
                features::static_features_all(&corpus, workers)?
            } else {
                features::tron_features_all(&corpus, levels, workers)?
            }
        }
        FeatureKind::PooledEmbedding => {
            let (tokens, model, vocab) = match (inputs.tokens, inputs.model, inputs.vocab) {
                (Some(t), Some(m), Some(v)) => (t, m, v),
                _ => {
                    return Err(Error::InvalidArgument(
                        "--kind pooled requires --tokens, --model, and --vocab".into(),
                    ))
                }
            };
            let tokens = tokenize::read_tokens(tokens)?;
            let model = glove::read_model(model)?;
            let vocab = tokenize::read_vocabulary(vocab)?;
            features::pooled_features_all(&tokens, &model, &vocab, workers)?
        }
    };
    features::write_features_tsv(&vectors, out)?;
    eprintln!(
        "[features] wrote {} rows × {} columns ({}) to {}",
        vectors.len(),
        vectors.first().map(|f| f.values.len()).unwrap_or(0),
        kind.as_str(),
        out.display()
    );
    Ok(())
}

/// Reads a `video_id<TAB>group` file and returns groups aligned with `ids`.
fn load_groups(path: &Path, ids: &[String]) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let mut by_id = std::collections::HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() || (lineno == 0 && line.starts_with("video_id\t")) {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(id), Some(group)) = (fields.next(), fields.next()) else {
            return Err(Error::format(
                &label,
                format!("line {}: expected id<TAB>group", lineno + 1),
            ));
        };
        by_id.insert(id.to_string(), group.to_string());
    }
    ids.iter()
        .map(|id| {
            by_id.get(id).cloned().ok_or_else(|| {
                Error::InvalidArgument(format!("no group for video {id:?} in {label}"))
            })
        })
        .collect()
}

/// Pooled row plus one row per fold, TSV, matching [`report_header`].
pub fn report_rows(target: &str, report: &EvalReport) -> String {
    let mut out = format!(
        "{target}\tpooled\t{}\t-\t{:.6}\t{:.6}\t{:.6}\n",
        report.n_samples, report.pcc, report.rmse, report.ccc
    );
    for fold in &report.per_fold {
        out.push_str(&format!(
            "{target}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            fold.fold, fold.n_test, fold.lambda, fold.pcc, fold.rmse, fold.ccc
        ));
    }
    out
}

pub fn report_header() -> &'static str {
    "target\tfold\tn\tlambda\tpcc\trmse\tccc\n"
}

pub struct EvaluateArgs<'a> {
    pub features: &'a Path,
    pub labels: &'a Path,
    pub folds: usize,
    pub seed: u64,
    pub lambdas: Vec<f64>,
    pub random_baseline: bool,
    pub json: bool,
    pub group_by: Option<&'a Path>,
    pub out: Option<&'a Path>,
}

pub fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let table = features::read_features_tsv(args.features)?;
    let labels = eval::parse_labels_tsv(args.labels)?;
    let mut data = eval::align(&table, &labels)?;
    if let Some(group_path) = args.group_by {
        data.groups = Some(load_groups(group_path, &data.ids)?);
    }
    let target = args
        .features
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "features".into());
    let report = eval::kfold_cv(&data, args.folds, &args.lambdas, args.seed, &target)?;
    eprintln!(
        "[evaluate] {target}: pcc={:.4} rmse={:.4} ccc={:.4} over {} folds",
        report.pcc,
        report.rmse,
        report.ccc,
        report.per_fold.len()
    );
    let baseline = if args.random_baseline {
        let b = eval::random_baseline(&data.y, &data.y, args.seed, 100)?;
        eprintln!(
            "[evaluate] random baseline: pcc={:.4} rmse={:.4} ccc={:.4}",
            b.pcc, b.rmse, b.ccc
        );
        Some(b)
    } else {
        None
    };

    let rendered = if args.json {
        #[derive(serde::Serialize)]
        struct JsonReport<'a> {
            evaluation: &'a EvalReport,
            random_baseline: Option<&'a EvalReport>,
        }
        serde_json::to_string_pretty(&JsonReport {
            evaluation: &report,
            random_baseline: baseline.as_ref(),
        })
        .map_err(|e| Error::format("report", e.to_string()))?
            + "\n"
    } else {
        let mut text = String::from(report_header());
        text.push_str(&report_rows(&target, &report));
        if let Some(b) = &baseline {
            text.push_str(&report_rows("random_baseline", b));
        }
        text
    };
    match args.out {
        Some(path) => {
            std::fs::write(path, rendered).map_err(|e| Error::io(path, e))?;
            eprintln!("[evaluate] wrote {}", path.display());
        }
        None => print!("{rendered}"),
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn run_synth(
    config: &SynthConfig,
    out: &Path,
    labels_out: &Path,
    truth_out: Option<&Path>,
    workers: usize,
) -> Result<()> {
    let output = synth::generate(config, workers)?;
    ingest::write_corpus(&output.corpus, out)?;
    let mut labels_text = String::new();
    for (id, label) in &output.labels {
        labels_text.push_str(&format!("{id}\t{label}\n"));
    }
    std::fs::write(labels_out, labels_text).map_err(|e| Error::io(labels_out, e))?;
    if let Some(truth_path) = truth_out {
        let mut text = String::new();
        for ((id, label), path) in output.labels.iter().zip(&output.state_paths) {
            let path_csv = path
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",");
            text.push_str(&format!("{id}\t{label}\t{path_csv}\n"));
        }
        std::fs::write(truth_path, text).map_err(|e| Error::io(truth_path, e))?;
        eprintln!("[synth] wrote hidden-state truth to {}", truth_path.display());
    }
    eprintln!(
        "[synth] wrote {} videos × {} frames to {} (labels in {})",
        config.n_videos,
        config.frames_per_video,
        out.display(),
        labels_out.display()
    );
    Ok(())
}
