//! Acceptance gate: nine checks covering oracle equivalence, gradient
//! correctness, rule boundaries, the desk-scale benchmark, metric oracles,
//! and on-disk determinism. Each test prints one `CRITERION n (...): PASS`
//! or `FAIL` line (visible under `--nocapture`); the assertions behind the
//! verdicts carry the details.

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use num::{BigInt, BigRational, ToPrimitive};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use au2vec_core::cluster::{self, Codebook, FitOptions, Point};
use au2vec_core::cooccur::{self, CooccurrenceTable, Weighting};
use au2vec_core::eval::{self, Dataset};
use au2vec_core::features::{self, FeatureVector};
use au2vec_core::glove::{self, EmbeddingModel, GloveConfig};
use au2vec_core::ingest::{self, AuFrame, AuSequence, NUM_AUS};
use au2vec_core::synth::{self, SynthConfig};
use au2vec_core::tokenize::{self, TokenSequence, END_TOKEN, START_TOKEN, UNK_TOKEN};

fn criterion(n: usize, name: &str, body: impl FnOnce()) {
    let outcome = catch_unwind(AssertUnwindSafe(body));
    let verdict = if outcome.is_ok() { "PASS" } else { "FAIL" };
    println!("CRITERION {n} ({name}): {verdict}");
    if let Err(cause) = outcome {
        std::panic::resume_unwind(cause);
    }
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_au2vec"))
}

fn run_ok(cmd: &mut Command) -> Output {
    let out = cmd.output().expect("binary should launch");
    assert!(
        out.status.success(),
        "command failed ({:?}): {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

// ---------------------------------------------------------------- criterion 1

/// Naive single-threaded Lloyd iteration, written independently of the
/// library: plain loops, nearest centroid by strict `<` (ties to the lowest
/// index), arithmetic means, and the same empty-cluster policy (hand each
/// empty slot the farthest remaining point). Returns the final centroids and
/// the mean point-to-centroid distance observed entering each iteration.
fn oracle_step(points: &[Point], centroids: &[Point]) -> (Vec<Point>, f64) {
    let k = centroids.len();
    let mut sums = vec![[0.0f64; NUM_AUS]; k];
    let mut counts = vec![0usize; k];
    let mut dist_sum = 0.0;
    for p in points {
        let (j, d2) = oracle_nearest(p, centroids);
        counts[j] += 1;
        for d in 0..NUM_AUS {
            sums[j][d] += p[d];
        }
        dist_sum += d2.sqrt();
    }
    let mut next = vec![[0.0f64; NUM_AUS]; k];
    for j in 0..k {
        if counts[j] > 0 {
            for d in 0..NUM_AUS {
                next[j][d] = sums[j][d] / counts[j] as f64;
            }
        }
    }
    if counts.iter().any(|&c| c == 0) {
        let mut dist: Vec<f64> = points.iter().map(|p| oracle_nearest(p, centroids).1).collect();
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = dist
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap();
            next[j] = points[far];
            dist[far] = f64::NEG_INFINITY;
        }
    }
    (next, dist_sum / points.len() as f64)
}

fn oracle_nearest(p: &Point, centroids: &[Point]) -> (usize, f64) {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let mut d = 0.0;
        for i in 0..NUM_AUS {
            d += (p[i] - c[i]) * (p[i] - c[i]);
        }
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    (best, best_d)
}

fn oracle_lloyd(
    points: &[Point],
    mut centroids: Vec<Point>,
    max_iter: usize,
    tol: f64,
) -> (Vec<Point>, Vec<f64>) {
    let mut trace = Vec::new();
    for _ in 0..max_iter {
        let (next, inertia) = oracle_step(points, &centroids);
        trace.push(inertia);
        let movement = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max);
        centroids = next;
        if movement < tol {
            break;
        }
    }
    (centroids, trace)
}

fn oracle_mean_distance(points: &[Point], centroids: &[Point]) -> f64 {
    points
        .iter()
        .map(|p| oracle_nearest(p, centroids).1.sqrt())
        .sum::<f64>()
        / points.len() as f64
}

#[test]
fn criterion_1_clustering_oracle() {
    criterion(1, "clustering matches a naive Lloyd oracle", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let opts = FitOptions { workers: 1, ..FitOptions::default() };
        for instance in 0..50 {
            let n: usize = rng.gen_range(20..=200);
            let k: usize = rng.gen_range(2..=5);
            let seed: u64 = rng.gen();
            let points: Vec<Point> = (0..n)
                .map(|_| {
                    let mut p = [0.0; NUM_AUS];
                    for v in &mut p {
                        *v = rng.gen::<f64>() * 5.0;
                    }
                    p
                })
                .collect();

            let fitted = cluster::fit_kmeans_points(&points, k, seed, &opts).unwrap();

            let init = cluster::kmeans_pp_init(&points, k, seed).unwrap();
            let (oracle_final, trace) = oracle_lloyd(&points, init, opts.max_iter, opts.tol);
            for w in trace.windows(2) {
                assert!(
                    w[1] <= w[0] + 1e-12,
                    "instance {instance}: inertia rose from {} to {}",
                    w[0],
                    w[1]
                );
            }
            let oracle_inertia = oracle_mean_distance(&points, &oracle_final);
            assert!(
                (fitted.inertia - oracle_inertia).abs() <= 1e-9,
                "instance {instance}: library inertia {} vs oracle {}",
                fitted.inertia,
                oracle_inertia
            );
        }
        assert!(
            start.elapsed() < Duration::from_secs(10),
            "clustering oracle overran its 10 s budget: {:?}",
            start.elapsed()
        );
    });
}

// ---------------------------------------------------------------- criterion 2

#[test]
fn criterion_2_cooccurrence_oracle() {
    criterion(2, "co-occurrence matches a nested-loop oracle and the closed form", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut sequences_checked = 0usize;
        while sequences_checked < 200 {
            let v: u32 = rng.gen_range(3..=20);
            let window: u32 = rng.gen_range(1..=10);
            let weighting = if rng.gen::<bool>() {
                Weighting::InverseDistance
            } else {
                Weighting::Uniform
            };
            let batch: usize = rng.gen_range(1..=10);
            let seqs: Vec<TokenSequence> = (0..batch)
                .map(|s| {
                    let len: usize = rng.gen_range(0..=50);
                    TokenSequence {
                        video_id: format!("seq_{s}"),
                        tokens: (0..len).map(|_| rng.gen_range(0..v)).collect(),
                    }
                })
                .collect();
            sequences_checked += seqs.len();

            let table = cooccur::build_table(&seqs, v, window, weighting, 1).unwrap();

            // O(L·W) oracle with the same left-to-right visit order, so the
            // per-cell floating-point sums must agree bit for bit.
            let mut oracle: BTreeMap<(u32, u32), f64> = BTreeMap::new();
            for seq in &seqs {
                let toks = &seq.tokens;
                for p in 0..toks.len() {
                    for q in p + 1..toks.len().min(p + window as usize + 1) {
                        let w = match weighting {
                            Weighting::InverseDistance => 1.0 / (q - p) as f64,
                            Weighting::Uniform => 1.0,
                        };
                        let key = (toks[p].min(toks[q]), toks[p].max(toks[q]));
                        *oracle.entry(key).or_insert(0.0) += w;
                    }
                }
            }
            let cells = table.cells_sorted();
            assert_eq!(cells.len(), oracle.len(), "cell count differs from oracle");
            for ((i, j, w), (&(oi, oj), &ow)) in cells.iter().zip(&oracle) {
                assert_eq!((*i, *j), (oi, oj), "cell keys diverge");
                assert_eq!(
                    w.to_bits(),
                    ow.to_bits(),
                    "cell ({i},{j}) weight {w} differs from oracle {ow}"
                );
            }

            // Total weight must satisfy Σ_{d=1..W} (L−d)⁺·w(d) per sequence.
            match weighting {
                Weighting::Uniform => {
                    // Whole-number pair counts stay exact in f64 at this scale.
                    let mut expected = 0u64;
                    for seq in &seqs {
                        let len = seq.tokens.len() as u64;
                        for d in 1..=window as u64 {
                            expected += len.saturating_sub(d);
                        }
                    }
                    assert_eq!(table.total_weight(), expected as f64);
                }
                Weighting::InverseDistance => {
                    // Exact-rational check: the closed form equals the full
                    // pair enumeration as rationals, no float rounding at all.
                    let zero = || BigRational::from_integer(BigInt::from(0));
                    let mut formula = zero();
                    let mut pair_walk = zero();
                    for seq in &seqs {
                        let len = seq.tokens.len();
                        for d in 1..=window as usize {
                            formula +=
                                BigRational::new(BigInt::from(len.saturating_sub(d)), BigInt::from(d));
                        }
                        for p in 0..len {
                            for q in p + 1..len.min(p + window as usize + 1) {
                                pair_walk += BigRational::new(BigInt::from(1u32), BigInt::from(q - p));
                            }
                        }
                    }
                    assert_eq!(formula, pair_walk, "closed form disagrees with pair enumeration");
                    let total = table.total_weight();
                    let exact = formula.to_f64().unwrap();
                    assert!(
                        (total - exact).abs() <= 1e-9 * exact.max(1.0),
                        "f64 total {total} drifted from exact {exact}"
                    );
                }
            }
        }
        assert!(
            start.elapsed() < Duration::from_secs(5),
            "co-occurrence oracle overran its 5 s budget: {:?}",
            start.elapsed()
        );
    });
}

// ---------------------------------------------------------------- criterion 3

fn signed(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    let mag = rng.gen_range(lo..hi);
    if rng.gen::<bool>() {
        mag
    } else {
        -mag
    }
}

#[test]
fn criterion_3_gradient_check() {
    criterion(3, "analytic gradients match central finite differences", || {
        let start = Instant::now();
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let step = 1e-6;
        let x_max = 100.0;
        let alpha = 0.75;
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-8);
        for instance in 0..100 {
            let v: usize = rng.gen_range(3..=10);
            let dim: usize = rng.gen_range(1..=5);
            let mut model = EmbeddingModel::init(v, dim, rng.gen());
            // Keep magnitudes away from zero so the relative-error test is
            // well conditioned at every coordinate.
            for w in model.w_main.iter_mut().chain(model.w_ctx.iter_mut()) {
                *w = signed(&mut rng, 0.1, 0.5);
            }
            for b in model.b_main.iter_mut().chain(model.b_ctx.iter_mut()) {
                *b = signed(&mut rng, 0.05, 0.3);
            }
            let i = rng.gen_range(0..v) as u32;
            let j = rng.gen_range(0..v) as u32;
            let score = model.score(i as usize, j as usize);
            // Alternate between the sub-saturation branch of the weighting
            // curve and its clamp at 1; either way the residual stays away
            // from zero so the gradients have usable magnitude.
            let x = if instance % 2 == 0 {
                (score + signed(&mut rng, 0.3, 1.5)).exp()
            } else {
                rng.gen_range(100.0..150.0)
            };
            let cells = [(i, j, x)];
            let (_, grads) = glove::loss_and_grad(&model, &cells, x_max, alpha).unwrap();
            let g = &grads[0];

            let fd = |hi_model: &EmbeddingModel, lo_model: &EmbeddingModel| {
                (glove::batch_loss(hi_model, &cells, x_max, alpha).unwrap()
                    - glove::batch_loss(lo_model, &cells, x_max, alpha).unwrap())
                    / (2.0 * step)
            };
            for d in 0..dim {
                let idx = i as usize * dim + d;
                let mut up = model.clone();
                up.w_main[idx] += step;
                let mut down = model.clone();
                down.w_main[idx] -= step;
                let numeric = fd(&up, &down);
                assert!(
                    rel(g.grad_w_main[d], numeric) < 1e-5,
                    "instance {instance}: w_main[{d}] analytic {} vs numeric {numeric}",
                    g.grad_w_main[d]
                );

                let idx = j as usize * dim + d;
                let mut up = model.clone();
                up.w_ctx[idx] += step;
                let mut down = model.clone();
                down.w_ctx[idx] -= step;
                let numeric = fd(&up, &down);
                assert!(
                    rel(g.grad_w_ctx[d], numeric) < 1e-5,
                    "instance {instance}: w_ctx[{d}] analytic {} vs numeric {numeric}",
                    g.grad_w_ctx[d]
                );
            }
            let mut up = model.clone();
            up.b_main[i as usize] += step;
            let mut down = model.clone();
            down.b_main[i as usize] -= step;
            let numeric = fd(&up, &down);
            assert!(
                rel(g.grad_b_main, numeric) < 1e-5,
                "instance {instance}: b_main analytic {} vs numeric {numeric}",
                g.grad_b_main
            );

            let mut up = model.clone();
            up.b_ctx[j as usize] += step;
            let mut down = model.clone();
            down.b_ctx[j as usize] -= step;
            let numeric = fd(&up, &down);
            assert!(
                rel(g.grad_b_ctx, numeric) < 1e-5,
                "instance {instance}: b_ctx analytic {} vs numeric {numeric}",
                g.grad_b_ctx
            );
        }
        assert!(
            start.elapsed() < Duration::from_secs(10),
            "gradient check overran its 10 s budget: {:?}",
            start.elapsed()
        );
    });
}

// ---------------------------------------------------------------- criterion 4

#[test]
fn criterion_4_planted_recovery() {
    criterion(4, "training recovers planted log-bilinear structure", || {
        let start = Instant::now();
        let v = 50usize;
        let dim = 10usize;
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let scale = 1.0 / (dim as f64).sqrt();
        let planted: Vec<Vec<f64>> = (0..v)
            .map(|_| (0..dim).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * scale).collect())
            .collect();
        let bias: Vec<f64> = (0..v).map(|_| (rng.gen::<f64>() * 2.0 - 1.0) * 0.4).collect();

        let mut table = CooccurrenceTable::new(v as u32, 10, Weighting::InverseDistance);
        for i in 0..v {
            for j in i..v {
                let score: f64 = planted[i]
                    .iter()
                    .zip(&planted[j])
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
                    + bias[i]
                    + bias[j];
                table.set_cell(i as u32, j as u32, score.exp()).unwrap();
            }
        }
        // 47 retained clusters plus the three specials give exactly 50 tokens.
        let vocab = tokenize::build_vocabulary(&vec![1u64; v - 3], 1, 1.75);
        assert_eq!(vocab.size(), v);

        let config = GloveConfig {
            dim,
            epochs: 200,
            seed: 4,
            workers: 1,
            deterministic: true,
            ..GloveConfig::default()
        };
        let model = glove::train(&table, &vocab, &config).unwrap();

        let mut learned = Vec::new();
        let mut target = Vec::new();
        for (i, j, x) in table.cells_sorted() {
            learned.push(model.score(i as usize, j as usize));
            target.push(x.ln());
        }
        let r = eval::pcc(&learned, &target).unwrap();
        assert!(r >= 0.99, "score/ln X correlation {r} below 0.99");
        assert!(
            start.elapsed() < Duration::from_secs(60),
            "planted recovery overran its 60 s budget: {:?}",
            start.elapsed()
        );
    });
}

// ---------------------------------------------------------------- criterion 5

#[test]
fn criterion_5_tokenizer_boundaries() {
    criterion(5, "vocabulary and distance rules are exact at their boundaries", || {
        // Frequency rule: strictly below the cutoff drops, exactly at stays.
        let vocab = tokenize::build_vocabulary(&[499, 500], 500, 1.75);
        assert_eq!(
            vocab.token_for_cluster(0),
            None,
            "count 499 must fall below a min-count of 500"
        );
        let kept = vocab
            .token_for_cluster(1)
            .expect("count exactly at the cutoff must stay");
        assert_eq!(kept, 3, "first retained cluster takes the id after the specials");

        // Distance rule at the default threshold: exactly 1.75 keeps the
        // cluster token, 1.76 relabels to UNK. One AU axis carries the whole
        // distance so the values are exact in binary floating point terms of
        // the assignment arithmetic.
        let near = [0.0; NUM_AUS];
        let mut far = [0.0; NUM_AUS];
        far[0] = 10.0;
        let codebook = Codebook {
            k: 2,
            centroids: vec![near, far],
            seed: 0,
            inertia: 0.0,
            iterations_run: 0,
        };
        let vocab = tokenize::build_vocabulary(&[1, 1], 1, 1.75);
        let frame = |t: f64, x: f64| {
            let mut au = [0.0; NUM_AUS];
            au[0] = x;
            AuFrame { timestamp: t, confidence: 1.0, au }
        };
        let seq = AuSequence {
            video_id: "boundary".into(),
            source_fps: 5.0,
            frames: vec![frame(0.0, 1.75), frame(0.2, 1.76)],
        };
        let toks = tokenize::tokenize_sequence(&seq, &codebook, &vocab);
        assert_eq!(
            toks.tokens,
            vec![START_TOKEN, 3, UNK_TOKEN, END_TOKEN],
            "distance 1.75 keeps its token, 1.76 becomes UNK"
        );

        // START/END bracket every sequence, including an empty one.
        let empty = AuSequence {
            video_id: "empty".into(),
            source_fps: 5.0,
            frames: vec![],
        };
        let toks = tokenize::tokenize_sequence(&empty, &codebook, &vocab);
        assert_eq!(toks.tokens, vec![START_TOKEN, END_TOKEN]);
    });
}

// ---------------------------------------------------------------- criterion 6

#[test]
fn criterion_6_end_to_end_benchmark() {
    criterion(6, "60k-frame pipeline under five minutes with a sane elbow", || {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();
        let corpus = root.join("bench.aufc");
        let labels = root.join("labels.tsv");
        let out_dir = root.join("run");

        let start = Instant::now();
        // 20 states, 200 videos x 300 frames at 5 fps = 60k frames.
        run_ok(bin().args([
            "synth",
            "--sigma",
            "1.3",
            "--seed",
            "100",
            "--out",
            corpus.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
        ]));
        run_ok(bin().args([
            "pipeline",
            "--corpus",
            corpus.to_str().unwrap(),
            "--labels",
            labels.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
            "--dist-threshold",
            "8",
            "--epochs",
            "300",
            "--seed",
            "100",
        ]));
        let elapsed = start.elapsed();
        for name in [
            "codebook.aukm",
            "vocab.auvb",
            "tokens.autk",
            "cooc.auco",
            "model.augv",
            "static.tsv",
            "dynamic.tsv",
            "pooled.tsv",
            "report.tsv",
            "manifest.json",
        ] {
            assert!(out_dir.join(name).is_file(), "pipeline did not produce {name}");
        }
        assert!(
            elapsed < Duration::from_secs(300),
            "synth + pipeline took {elapsed:?}, over the five-minute budget"
        );

        // The generator has 20 hidden states; the knee of the inertia curve
        // must land on 20 or its neighbor 40.
        let report = root.join("elbow.tsv");
        let out = run_ok(bin().args([
            "elbow",
            "--corpus",
            corpus.to_str().unwrap(),
            "--ks",
            "5,10,20,40,80",
            "--seed",
            "100",
            "--report",
            report.to_str().unwrap(),
        ]));
        let stderr = String::from_utf8_lossy(&out.stderr);
        let selected: usize = stderr
            .lines()
            .find_map(|l| l.split("selected k=").nth(1))
            .and_then(|rest| rest.split(|c: char| !c.is_ascii_digit()).next())
            .and_then(|digits| digits.parse().ok())
            .unwrap_or_else(|| panic!("no selected-k line in elbow output: {stderr}"));
        assert!(
            selected == 20 || selected == 40,
            "elbow selected k={selected}, expected 20 or 40"
        );
    });
}

// ---------------------------------------------------------------- criterion 7

fn cv_pcc(vectors: Vec<FeatureVector>, labels: &[(String, f64)], seed: u64) -> f64 {
    assert_eq!(vectors.len(), labels.len());
    let mut ids = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (vector, (id, label)) in vectors.into_iter().zip(labels) {
        assert_eq!(&vector.video_id, id, "feature order must follow label order");
        ids.push(vector.video_id);
        x.push(vector.values);
        y.push(*label);
    }
    let data = Dataset { ids, x, y, groups: None };
    eval::kfold_cv(&data, 10, &[0.01, 0.1, 1.0, 10.0], seed, "bench")
        .unwrap()
        .pcc
}

#[test]
fn criterion_7_embeddings_beat_static_features() {
    criterion(7, "pooled embeddings beat static AU features by 0.10 PCC", || {
        let mut gaps = Vec::new();
        for seed in 100..=104u64 {
            let out = synth::generate(
                &SynthConfig { noise_sigma: 1.3, seed, ..SynthConfig::default() },
                1,
            )
            .unwrap();
            let codebook = cluster::fit_kmeans(
                &out.corpus,
                40,
                seed,
                &FitOptions { workers: 1, ..FitOptions::default() },
            )
            .unwrap();
            let counts = tokenize::count_cluster_frequencies(&out.corpus, &codebook, 1);
            let vocab = tokenize::build_vocabulary(&counts, 50, 8.0);
            let tokens = tokenize::tokenize_corpus(&out.corpus, &codebook, &vocab, 1);
            let table =
                cooccur::build_table(&tokens, vocab.size() as u32, 10, Weighting::InverseDistance, 1)
                    .unwrap();
            let model = glove::train(
                &table,
                &vocab,
                &GloveConfig {
                    dim: 25,
                    epochs: 300,
                    seed,
                    workers: 1,
                    deterministic: true,
                    ..GloveConfig::default()
                },
            )
            .unwrap();

            let static_pcc =
                cv_pcc(features::static_features_all(&out.corpus, 1).unwrap(), &out.labels, seed);
            let pooled_pcc = cv_pcc(
                features::pooled_features_all(&tokens, &model, &vocab, 1).unwrap(),
                &out.labels,
                seed,
            );
            assert!(
                pooled_pcc > static_pcc,
                "seed {seed}: pooled PCC {pooled_pcc} did not beat static {static_pcc}"
            );
            gaps.push(pooled_pcc - static_pcc);
        }
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        eprintln!("mean pooled-vs-static PCC gap over 5 seeds: {mean:.4} (per seed: {gaps:?})");
        assert!(
            mean >= 0.10,
            "mean pooled-vs-static PCC gap {mean:.4} below 0.10 (per seed: {gaps:?})"
        );
    });
}

// ---------------------------------------------------------------- criterion 8

fn metric_oracles(pred: &[f64], truth: &[f64]) -> (f64, f64, f64) {
    let n = pred.len() as f64;
    let mp = pred.iter().sum::<f64>() / n;
    let mt = truth.iter().sum::<f64>() / n;
    let vp = pred.iter().map(|p| (p - mp) * (p - mp)).sum::<f64>() / n;
    let vt = truth.iter().map(|t| (t - mt) * (t - mt)).sum::<f64>() / n;
    let cov = pred.iter().zip(truth).map(|(p, t)| (p - mp) * (t - mt)).sum::<f64>() / n;
    let pcc = (cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0);
    let rmse = (pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt();
    let ccc = 2.0 * cov / (vp + vt + (mp - mt) * (mp - mt));
    (pcc, rmse, ccc)
}

#[test]
fn criterion_8_metric_oracles() {
    criterion(8, "metrics match direct formulas; chance baseline is uninformative", || {
        let mut rng = ChaCha8Rng::seed_from_u64(48);
        for _ in 0..50 {
            let n: usize = rng.gen_range(5..=100);
            let a: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * 20.0 - 10.0).collect();

            let (pcc_o, rmse_o, ccc_o) = metric_oracles(&a, &b);
            let pcc = eval::pcc(&a, &b).unwrap();
            let rmse = eval::rmse(&a, &b).unwrap();
            let ccc = eval::ccc(&a, &b).unwrap();
            assert!((pcc - pcc_o).abs() <= 1e-12, "pcc {pcc} vs oracle {pcc_o}");
            assert!((rmse - rmse_o).abs() <= 1e-12, "rmse {rmse} vs oracle {rmse_o}");
            assert!((ccc - ccc_o).abs() <= 1e-12, "ccc {ccc} vs oracle {ccc_o}");
            assert!(
                ccc.abs() <= pcc.abs() + 1e-12,
                "|CCC| {ccc} exceeded |PCC| {pcc}"
            );
        }

        // A label-resampling baseline against same-distribution truth has no
        // signal to find; averaged over 100 repeats it must sit near zero.
        let train: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() * 24.0).collect();
        let truth: Vec<f64> = (0..100).map(|_| rng.gen::<f64>() * 24.0).collect();
        let report = eval::random_baseline(&train, &truth, 7, 100).unwrap();
        assert!(
            report.pcc.abs() < 0.1,
            "random baseline PCC {} is suspiciously far from zero",
            report.pcc
        );
    });
}

// ---------------------------------------------------------------- criterion 9

/// File-name/digest pairs from a run manifest, ignoring the directory part
/// and the wall-clock durations (the one field allowed to differ).
fn manifest_digests(path: &Path) -> Vec<(String, String)> {
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    let mut out = Vec::new();
    for stage in value["stages"].as_array().unwrap() {
        for key in ["inputs", "outputs"] {
            for file in stage[key].as_array().unwrap() {
                let name = Path::new(file["path"].as_str().unwrap())
                    .file_name()
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.push((name, file["sha256"].as_str().unwrap().to_owned()));
            }
        }
    }
    out
}

#[test]
fn criterion_9_determinism_and_formats() {
    criterion(9, "single-worker runs are byte-reproducible and formats are strict", || {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path();

        // Identical generator invocations must be byte-identical.
        let corpus_a = root.join("a.aufc");
        let labels_a = root.join("a.tsv");
        let corpus_b = root.join("b.aufc");
        let labels_b = root.join("b.tsv");
        for (corpus, labels) in [(&corpus_a, &labels_a), (&corpus_b, &labels_b)] {
            run_ok(bin().args([
                "synth",
                "--n-states",
                "6",
                "--n-videos",
                "30",
                "--frames",
                "60",
                "--sigma",
                "0.3",
                "--seed",
                "17",
                "--out",
                corpus.to_str().unwrap(),
                "--labels",
                labels.to_str().unwrap(),
            ]));
        }
        assert_eq!(fs::read(&corpus_a).unwrap(), fs::read(&corpus_b).unwrap());
        assert_eq!(fs::read(&labels_a).unwrap(), fs::read(&labels_b).unwrap());

        // Two single-worker pipeline runs over the same corpus: every
        // artifact byte-identical; the manifest may differ only in durations.
        let run_a = root.join("run_a");
        let run_b = root.join("run_b");
        for out_dir in [&run_a, &run_b] {
            run_ok(bin().args([
                "--workers",
                "1",
                "pipeline",
                "--corpus",
                corpus_a.to_str().unwrap(),
                "--labels",
                labels_a.to_str().unwrap(),
                "--out-dir",
                out_dir.to_str().unwrap(),
                "--k",
                "8",
                "--dim",
                "6",
                "--epochs",
                "20",
                "--min-count",
                "5",
                "--folds",
                "5",
                "--seed",
                "3",
            ]));
        }
        let artifacts = [
            "codebook.aukm",
            "vocab.auvb",
            "tokens.autk",
            "cooc.auco",
            "model.augv",
            "static.tsv",
            "dynamic.tsv",
            "pooled.tsv",
            "report.tsv",
        ];
        for name in artifacts {
            assert_eq!(
                fs::read(run_a.join(name)).unwrap(),
                fs::read(run_b.join(name)).unwrap(),
                "{name} differs between identical single-worker runs"
            );
        }
        assert_eq!(
            manifest_digests(&run_a.join("manifest.json")),
            manifest_digests(&run_b.join("manifest.json")),
            "manifest digests differ between identical runs"
        );

        // Read-then-write round-trips reproduce every binary format exactly.
        let rt = root.join("roundtrip");
        fs::create_dir_all(&rt).unwrap();
        let assert_roundtrip = |original: &Path, rewritten: &Path| {
            assert_eq!(
                fs::read(original).unwrap(),
                fs::read(rewritten).unwrap(),
                "{} did not round-trip bit-exactly",
                original.file_name().unwrap().to_string_lossy()
            );
        };

        let corpus = ingest::read_corpus(&corpus_a).unwrap();
        let path = rt.join("c.aufc");
        ingest::write_corpus(&corpus, &path).unwrap();
        assert_roundtrip(&corpus_a, &path);

        let codebook = cluster::read_codebook(&run_a.join("codebook.aukm")).unwrap();
        let path = rt.join("c.aukm");
        cluster::write_codebook(&codebook, &path).unwrap();
        assert_roundtrip(&run_a.join("codebook.aukm"), &path);

        let vocab = tokenize::read_vocabulary(&run_a.join("vocab.auvb")).unwrap();
        let path = rt.join("v.auvb");
        tokenize::write_vocabulary(&vocab, &path).unwrap();
        assert_roundtrip(&run_a.join("vocab.auvb"), &path);

        let tokens = tokenize::read_tokens(&run_a.join("tokens.autk")).unwrap();
        let path = rt.join("t.autk");
        tokenize::write_tokens(&tokens, &path).unwrap();
        assert_roundtrip(&run_a.join("tokens.autk"), &path);

        let table = cooccur::read_table(&run_a.join("cooc.auco")).unwrap();
        let path = rt.join("x.auco");
        cooccur::write_table(&table, &path).unwrap();
        assert_roundtrip(&run_a.join("cooc.auco"), &path);

        let model = glove::read_model(&run_a.join("model.augv")).unwrap();
        let path = rt.join("m.augv");
        glove::write_model(&model, &path).unwrap();
        assert_roundtrip(&run_a.join("model.augv"), &path);

        // Corrupting the magic bytes of any artifact makes its consumer
        // refuse it with the bad-data exit code.
        let corrupt = |source: &Path| -> std::path::PathBuf {
            let mut bytes = fs::read(source).unwrap();
            bytes[0] ^= 0xFF;
            let bad = rt.join(format!("bad_{}", source.file_name().unwrap().to_string_lossy()));
            fs::write(&bad, bytes).unwrap();
            bad
        };
        let good_vocab = run_a.join("vocab.auvb");
        let good_tokens = run_a.join("tokens.autk");
        let scratch = rt.join("scratch.bin");
        let bad_corpus = corrupt(&corpus_a);
        let bad_codebook = corrupt(&run_a.join("codebook.aukm"));
        let bad_vocab = corrupt(&good_vocab);
        let bad_tokens = corrupt(&good_tokens);
        let bad_cooc = corrupt(&run_a.join("cooc.auco"));
        let bad_model = corrupt(&run_a.join("model.augv"));
        let consumers: Vec<Vec<String>> = vec![
            vec![
                "cluster".into(),
                "--corpus".into(),
                bad_corpus.display().to_string(),
                "--k".into(),
                "4".into(),
                "--seed".into(),
                "1".into(),
                "--out".into(),
                scratch.display().to_string(),
            ],
            vec![
                "tokenize".into(),
                "--corpus".into(),
                corpus_a.display().to_string(),
                "--codebook".into(),
                bad_codebook.display().to_string(),
                "--out".into(),
                scratch.display().to_string(),
                "--vocab".into(),
                rt.join("scratch2.bin").display().to_string(),
            ],
            vec![
                "cooccur".into(),
                "--tokens".into(),
                bad_tokens.display().to_string(),
                "--vocab".into(),
                good_vocab.display().to_string(),
                "--out".into(),
                scratch.display().to_string(),
            ],
            vec![
                "cooccur".into(),
                "--tokens".into(),
                good_tokens.display().to_string(),
                "--vocab".into(),
                bad_vocab.display().to_string(),
                "--out".into(),
                scratch.display().to_string(),
            ],
            vec![
                "train-embeddings".into(),
                "--cooc".into(),
                bad_cooc.display().to_string(),
                "--vocab".into(),
                good_vocab.display().to_string(),
                "--dim".into(),
                "4".into(),
                "--epochs".into(),
                "1".into(),
                "--seed".into(),
                "1".into(),
                "--out".into(),
                scratch.display().to_string(),
            ],
            vec![
                "neighbors".into(),
                "--model".into(),
                bad_model.display().to_string(),
                "--vocab".into(),
                good_vocab.display().to_string(),
                "--token".into(),
                "<UNK>".into(),
            ],
        ];
        for args in consumers {
            let out = bin().args(&args).output().expect("binary should launch");
            let stderr = String::from_utf8_lossy(&out.stderr);
            assert_eq!(
                out.status.code(),
                Some(2),
                "`{}` accepted a corrupted artifact: {stderr}",
                args.join(" ")
            );
            assert!(
                stderr.contains("magic"),
                "`{}` did not mention the bad magic bytes: {stderr}",
                args.join(" ")
            );
        }
    });
}
