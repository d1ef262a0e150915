//! `au2vec`: one binary, one subcommand per pipeline stage.
//!
//! Exit codes: 0 success, 1 usage error, 2 data/format error, 3 numeric or
//! training failure. Progress goes to stderr; stdout carries only query
//! results (neighbors, evaluation reports without `--out`).

use std::path::PathBuf;
use std::process::ExitCode;

use au2vec_core::features::FeatureKind;
use au2vec_core::synth::SynthConfig;
use au2vec_core::Error;
use clap::{Parser, Subcommand, ValueEnum};

mod manifest;
mod pipeline;
mod stages;

fn long_version() -> &'static str {
    let formats = au2vec_core::FORMAT_VERSIONS
        .iter()
        .map(|(name, version)| format!("{name} v{version}"))
        .collect::<Vec<_>>()
        .join(", ");
    Box::leak(
        format!(
            "{}\nartifact formats: {formats}",
            env!("CARGO_PKG_VERSION")
        )
        .into_boxed_str(),
    )
}

#[derive(Parser)]
#[command(
    name = "au2vec",
    version,
    long_version = long_version(),
    about = "Facial action-unit streams to expression clusters, tokens, and embeddings",
    arg_required_else_help = true
)]
struct Cli {
    /// Worker count for parallel stages; 1 is the deterministic mode.
    /// Defaults to the available CPU count.
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Static,
    Dynamic,
    Pooled,
}

impl From<KindArg> for FeatureKind {
    fn from(kind: KindArg) -> Self {
        match kind {
            KindArg::Static => FeatureKind::Static,
            KindArg::Dynamic => FeatureKind::Dynamic,
            KindArg::Pooled => FeatureKind::PooledEmbedding,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Parse OpenFace AU CSV files into a binary frame corpus.
    Ingest {
        /// A CSV file, or a directory whose *.csv files become one video each.
        #[arg(long)]
        input: PathBuf,
        /// Output corpus path (.aufc).
        #[arg(long)]
        out: PathBuf,
        /// Drop frames whose tracking confidence falls below this.
        #[arg(long, default_value_t = 0.90)]
        min_confidence: f64,
        /// Downsample faster sources to this frame rate.
        #[arg(long, default_value_t = 5.0)]
        target_fps: f64,
    },
    /// Fit a k-means expression codebook over all frames.
    Cluster {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        k: usize,
        #[arg(long)]
        seed: u64,
        /// Output codebook path (.aukm).
        #[arg(long)]
        out: PathBuf,
    },
    /// Sweep k over a list and report the inertia curve and its knee.
    Elbow {
        #[arg(long)]
        corpus: PathBuf,
        /// Comma-separated strictly increasing cluster counts, e.g. 5,10,20.
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        #[arg(long)]
        seed: u64,
        /// Output TSV with one k,inertia row per sweep point.
        #[arg(long)]
        report: PathBuf,
    },
    /// Build the token vocabulary and tokenize every video.
    Tokenize {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        codebook: PathBuf,
        /// Clusters seen fewer times than this become UNK.
        #[arg(long, default_value_t = 500)]
        min_count: u32,
        /// Frames farther than this from their centroid become UNK.
        #[arg(long, default_value_t = 1.75)]
        dist_threshold: f64,
        /// Output token sequences path (.autk).
        #[arg(long)]
        out: PathBuf,
        /// Output vocabulary path (.auvb).
        #[arg(long)]
        vocab: PathBuf,
    },
    /// Accumulate windowed token co-occurrence counts.
    Cooccur {
        #[arg(long)]
        tokens: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 10)]
        window: u32,
        /// Output co-occurrence table path (.auco).
        #[arg(long)]
        out: PathBuf,
        /// Weight all pairs equally instead of by inverse distance.
        #[arg(long)]
        uniform: bool,
    },
    /// Train embeddings on a co-occurrence table.
    TrainEmbeddings {
        #[arg(long)]
        cooc: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long, default_value_t = 50)]
        dim: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long)]
        seed: u64,
        /// Weighting-function saturation point.
        #[arg(long, default_value_t = 100.0)]
        x_max: f64,
        /// Weighting-function exponent.
        #[arg(long, default_value_t = 0.75)]
        alpha: f64,
        #[arg(long, default_value_t = 0.05)]
        learning_rate: f64,
        /// Output model path (.augv).
        #[arg(long)]
        out: PathBuf,
        /// Also export text vectors (word2vec-style) to this path.
        #[arg(long)]
        export: Option<PathBuf>,
    },
    /// Print the nearest neighbors of a token by cosine similarity.
    Neighbors {
        #[arg(long)]
        model: PathBuf,
        /// Vocabulary that names the tokens (c12, <UNK>, ...).
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        token: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Extract per-video feature vectors to a TSV.
    Features {
        #[arg(long, value_enum)]
        kind: KindArg,
        /// Frame corpus; required for static and dynamic features.
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Token sequences; required for pooled features.
        #[arg(long)]
        tokens: Option<PathBuf>,
        /// Embedding model; required for pooled features.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Vocabulary; required for pooled features.
        #[arg(long)]
        vocab: Option<PathBuf>,
        /// Quantization levels for dynamic features.
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validated ridge regression from a feature TSV to labels.
    Evaluate {
        #[arg(long)]
        features: PathBuf,
        /// Labels TSV: video_id<TAB>value.
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long)]
        seed: u64,
        /// Comma-separated ridge penalty grid searched per fold.
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0])]
        lambdas: Vec<f64>,
        /// Also report a label-resampling chance baseline.
        #[arg(long)]
        random_baseline: bool,
        /// Emit the report as JSON instead of TSV.
        #[arg(long)]
        json: bool,
        /// Group file (video_id<TAB>group); rows sharing a group stay in one fold.
        #[arg(long)]
        group_by: Option<PathBuf>,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic AU corpus with planted structure and labels.
    Synth {
        #[arg(long, default_value_t = 20)]
        n_states: usize,
        #[arg(long, default_value_t = 200)]
        n_videos: usize,
        /// Frames per video.
        #[arg(long, default_value_t = 300)]
        frames: usize,
        /// Per-AU Gaussian noise standard deviation.
        #[arg(long, default_value_t = 0.1)]
        sigma: f64,
        #[arg(long, default_value_t = 5.0)]
        fps: f64,
        /// Self-transition probability of the hidden state chain.
        #[arg(long, default_value_t = 0.9)]
        stay_prob: f64,
        #[arg(long)]
        seed: u64,
        /// Output corpus path (.aufc).
        #[arg(long)]
        out: PathBuf,
        /// Output labels TSV path.
        #[arg(long)]
        labels: PathBuf,
        /// Optional hidden-state truth TSV (video_id, label, state path).
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run every stage end to end and write a run manifest.
    Pipeline {
        /// CSV directory to ingest first (alternative to --corpus).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Existing frame corpus (alternative to --input).
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Labels TSV for the evaluation stage.
        #[arg(long)]
        labels: PathBuf,
        /// Directory receiving every artifact plus manifest.json.
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 40)]
        k: usize,
        #[arg(long, default_value_t = 25)]
        dim: usize,
        #[arg(long, default_value_t = 10)]
        window: u32,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// Desk-scale default; raise toward 500 for large corpora.
        #[arg(long, default_value_t = 50)]
        min_count: u32,
        #[arg(long, default_value_t = 1.75)]
        dist_threshold: f64,
        #[arg(long)]
        uniform: bool,
        #[arg(long, default_value_t = 4)]
        levels: usize,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        #[arg(long, value_delimiter = ',', default_values_t = [0.01, 0.1, 1.0, 10.0])]
        lambdas: Vec<f64>,
        /// Master seed shared by the clustering, training, and CV stages.
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0.90)]
        min_confidence: f64,
        #[arg(long, default_value_t = 5.0)]
        target_fps: f64,
    },
}

/// Exit-code contract: caller mistakes are 1, bad data is 2, failed math is 3.
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::UnknownToken(_) => 1,
        Error::Io { .. } | Error::Format { .. } | Error::Version { .. } => 2,
        Error::Numeric(_) | Error::Training { .. } => 3,
    }
}

fn dispatch(command: Command, workers: usize) -> au2vec_core::Result<()> {
    match command {
        Command::Ingest {
            input,
            out,
            min_confidence,
            target_fps,
        } => stages::run_ingest(&input, &out, min_confidence, target_fps),
        Command::Cluster {
            corpus,
            k,
            seed,
            out,
        } => stages::run_cluster(&corpus, k, seed, &out, workers),
        Command::Elbow {
            corpus,
            ks,
            seed,
            report,
        } => stages::run_elbow(&corpus, &ks, seed, &report, workers),
        Command::Tokenize {
            corpus,
            codebook,
            min_count,
            dist_threshold,
            out,
            vocab,
        } => stages::run_tokenize(
            &corpus,
            &codebook,
            min_count,
            dist_threshold,
            &out,
            &vocab,
            workers,
        ),
        Command::Cooccur {
            tokens,
            vocab,
            window,
            out,
            uniform,
        } => stages::run_cooccur(&tokens, &vocab, window, uniform, &out, workers),
        Command::TrainEmbeddings {
            cooc,
            vocab,
            dim,
            epochs,
            seed,
            x_max,
            alpha,
            learning_rate,
            out,
            export,
        } => stages::run_train(
            &cooc,
            &vocab,
            dim,
            epochs,
            seed,
            x_max,
            alpha,
            learning_rate,
            &out,
            export.as_deref(),
            workers,
        ),
        Command::Neighbors {
            model,
            vocab,
            token,
            n,
        } => stages::run_neighbors(&model, &vocab, &token, n),
        Command::Features {
            kind,
            corpus,
            tokens,
            model,
            vocab,
            levels,
            out,
        } => stages::run_features(
            kind.into(),
            &stages::FeatureInputs {
                corpus: corpus.as_deref(),
                tokens: tokens.as_deref(),
                model: model.as_deref(),
                vocab: vocab.as_deref(),
            },
            levels,
            &out,
            workers,
        ),
        Command::Evaluate {
            features,
            labels,
            folds,
            seed,
            lambdas,
            random_baseline,
            json,
            group_by,
            out,
        } => stages::run_evaluate(&stages::EvaluateArgs {
            features: &features,
            labels: &labels,
            folds,
            seed,
            lambdas,
            random_baseline,
            json,
            group_by: group_by.as_deref(),
            out: out.as_deref(),
        }),
        Command::Synth {
            n_states,
            n_videos,
            frames,
            sigma,
            fps,
            stay_prob,
            seed,
            out,
            labels,
            truth,
        } => stages::run_synth(
            &SynthConfig {
                n_states,
                n_videos,
                frames_per_video: frames,
                fps,
                noise_sigma: sigma,
                transition_stay_prob: stay_prob,
                seed,
            },
            &out,
            &labels,
            truth.as_deref(),
            workers,
        ),
        Command::Pipeline {
            input,
            corpus,
            labels,
            out_dir,
            k,
            dim,
            window,
            epochs,
            min_count,
            dist_threshold,
            uniform,
            levels,
            folds,
            lambdas,
            seed,
            min_confidence,
            target_fps,
        } => pipeline::run_pipeline(
            &pipeline::PipelineArgs {
                input,
                corpus,
                labels,
                out_dir,
                k,
                dim,
                window,
                epochs,
                min_count,
                dist_threshold,
                uniform,
                levels,
                folds,
                lambdas,
                seed,
                min_confidence,
                target_fps,
            },
            workers,
        ),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let ok = matches!(
                err.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            let _ = err.print();
            return if ok { ExitCode::SUCCESS } else { ExitCode::from(1) };
        }
    };
    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1));
    if workers == 0 {
        eprintln!("error: --workers must be at least 1");
        return ExitCode::from(1);
    }
    match dispatch(cli.command, workers) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
