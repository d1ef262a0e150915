//! K-means codebooks over pooled AU frames, the elbow sweep used to pick k,
//! and nearest-centroid assignment.
//!
//! Inertia throughout is the MEAN Euclidean distance from each point to its
//! closest centroid — not the sum, not squared. The Lloyd update still
//! minimizes squared distance internally; only the reported figure uses the
//! mean-distance convention, which is what the elbow curve plots.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::{FrameCorpus, NUM_AUS};
use crate::store::{ArtifactReader, ArtifactWriter};
use std::path::Path;

pub type Point = [f64; NUM_AUS];

const CODEBOOK_MAGIC: &[u8; 4] = b"AUKM";
pub(crate) const CODEBOOK_VERSION: u32 = 1;

/// A fitted set of centroids. `iterations_run` is a fit diagnostic and is
/// not persisted; reading a codebook file reports it as 0.
#[derive(Debug, Clone)]
pub struct Codebook {
    pub k: usize,
    pub centroids: Vec<Point>,
    pub seed: u64,
    pub inertia: f64,
    pub iterations_run: usize,
}

/// Inertia per swept k, in sweep order.
#[derive(Debug, Clone, PartialEq)]
pub struct ElbowCurve {
    pub points: Vec<(usize, f64)>,
}

impl ElbowCurve {
    /// k values where inertia rose relative to the previous (smaller) k.
    /// K-means is stochastic, so this can legitimately happen; reports flag
    /// it instead of asserting it away.
    pub fn monotonic_violations(&self) -> Vec<usize> {
        self.points
            .windows(2)
            .filter(|w| w[1].1 > w[0].1)
            .map(|w| w[1].0)
            .collect()
    }
}

/// Outcome of the automatic knee rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElbowChoice {
    pub k: usize,
    pub score: f64,
    /// No interior point actually bends (all second differences ~0 or
    /// negative); the returned k is just the tie rule talking.
    pub weak_knee: bool,
}

/// Fit parameters beyond (k, seed).
#[derive(Debug, Clone)]
pub struct FitOptions {
    pub max_iter: usize,
    pub tol: f64,
    /// Number of reduction shards. 1 reproduces the plain sequential
    /// accumulation order bit-for-bit; larger values let shards run on the
    /// thread pool and merge in shard order (still deterministic per value).
    pub workers: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 300,
            tol: 1e-6,
            workers: 1,
        }
    }
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    let mut acc = 0.0;
    for i in 0..NUM_AUS {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

fn nearest(point: &Point, centroids: &[Point]) -> (usize, f64) {
    debug_assert!(!centroids.is_empty());
    let mut best = 0;
    let mut best_d2 = sq_dist(point, &centroids[0]);
    for (j, c) in centroids.iter().enumerate().skip(1) {
        let d2 = sq_dist(point, c);
        if d2 < best_d2 {
            best = j;
            best_d2 = d2;
        }
    }
    (best, best_d2)
}

/// k-means++ D² seeding: first centroid uniform, each further centroid drawn
/// with probability proportional to squared distance from the chosen set.
pub fn kmeans_pp_init(points: &[Point], k: usize, seed: u64) -> Result<Vec<Point>> {
    if k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    if points.len() < k {
        return Err(Error::InvalidArgument(format!(
            "cannot place {k} centroids over {} points",
            points.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())]);

    // Squared distance from each point to its closest chosen centroid,
    // maintained incrementally.
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "fewer than {k} distinct points"
            )));
        }
        let target = rng.gen::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &w) in d2.iter().enumerate() {
            acc += w;
            if acc > target && w > 0.0 {
                pick = Some(i);
                break;
            }
        }
        // Rounding can leave the cursor short of the last positive weight.
        let pick = match pick {
            Some(i) => i,
            None => d2
                .iter()
                .rposition(|&w| w > 0.0)
                .expect("total was positive"),
        };
        let chosen = points[pick];
        for (i, w) in d2.iter_mut().enumerate() {
            let d = sq_dist(&points[i], &chosen);
            if d < *w {
                *w = d;
            }
        }
        centroids.push(chosen);
    }
    Ok(centroids)
}

/// Per-shard assignment totals.
struct ShardStats {
    sums: Vec<Point>,
    counts: Vec<usize>,
    dist_sum: f64,
}

fn shard_stats(points: &[Point], centroids: &[Point]) -> ShardStats {
    let k = centroids.len();
    let mut stats = ShardStats {
        sums: vec![[0.0; NUM_AUS]; k],
        counts: vec![0; k],
        dist_sum: 0.0,
    };
    for p in points {
        let (j, d2) = nearest(p, centroids);
        stats.counts[j] += 1;
        for (slot, v) in stats.sums[j].iter_mut().zip(p.iter()) {
            *slot += v;
        }
        stats.dist_sum += d2.sqrt();
    }
    stats
}

/// One Lloyd iteration: assign points to nearest centroids (ties to the
/// lowest index), return per-cluster means and the mean distance under the
/// INPUT centroids. Clusters that end up empty are re-seeded with the point
/// farthest from its assigned centroid (successive empties take successively
/// farther points), so k never shrinks.
pub fn lloyd_step(points: &[Point], centroids: &[Point], workers: usize) -> (Vec<Point>, f64) {
    debug_assert!(!centroids.is_empty());
    let k = centroids.len();
    if points.is_empty() {
        return (centroids.to_vec(), 0.0);
    }

    let workers = workers.max(1);
    let chunk = points.len().div_ceil(workers);
    let shards: Vec<ShardStats> = if workers == 1 {
        vec![shard_stats(points, centroids)]
    } else {
        points
            .par_chunks(chunk)
            .map(|shard| shard_stats(shard, centroids))
            .collect()
    };

    // Merge in shard order so a given worker count is deterministic.
    let mut sums = vec![[0.0; NUM_AUS]; k];
    let mut counts = vec![0usize; k];
    let mut dist_sum = 0.0;
    for shard in &shards {
        for j in 0..k {
            counts[j] += shard.counts[j];
            for d in 0..NUM_AUS {
                sums[j][d] += shard.sums[j][d];
            }
        }
        dist_sum += shard.dist_sum;
    }

    let mut new_centroids = vec![[0.0; NUM_AUS]; k];
    for j in 0..k {
        if counts[j] > 0 {
            for d in 0..NUM_AUS {
                new_centroids[j][d] = sums[j][d] / counts[j] as f64;
            }
        }
    }

    if counts.iter().any(|&c| c == 0) {
        // Rare path: recompute assignment distances sequentially and hand
        // each empty cluster the farthest remaining point.
        let mut dist: Vec<f64> = points.iter().map(|p| nearest(p, centroids).1).collect();
        for j in 0..k {
            if counts[j] > 0 {
                continue;
            }
            let far = dist
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .expect("points nonempty");
            new_centroids[j] = points[far];
            dist[far] = f64::NEG_INFINITY;
        }
    }

    (new_centroids, dist_sum / points.len() as f64)
}

/// Mean distance from each point to its nearest centroid, with the same
/// sharded reduction as `lloyd_step`.
pub fn mean_distance(points: &[Point], centroids: &[Point], workers: usize) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let workers = workers.max(1);
    let chunk = points.len().div_ceil(workers);
    let total: f64 = if workers == 1 {
        points.iter().map(|p| nearest(p, centroids).1.sqrt()).sum()
    } else {
        points
            .par_chunks(chunk)
            .map(|shard| -> f64 { shard.iter().map(|p| nearest(p, centroids).1.sqrt()).sum() })
            .collect::<Vec<f64>>()
            .into_iter()
            .sum()
    };
    total / points.len() as f64
}

/// Full fit: k-means++ seeding, then Lloyd until the largest centroid
/// movement drops below `tol` or `max_iter` is hit.
pub fn fit_kmeans_points(
    points: &[Point],
    k: usize,
    seed: u64,
    opts: &FitOptions,
) -> Result<Codebook> {
    let mut centroids = kmeans_pp_init(points, k, seed)?;
    let mut iterations_run = 0;
    for _ in 0..opts.max_iter {
        let (next, _) = lloyd_step(points, &centroids, opts.workers);
        let movement = centroids
            .iter()
            .zip(next.iter())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        iterations_run += 1;
        if movement < opts.tol {
            break;
        }
    }
    let inertia = mean_distance(points, &centroids, opts.workers);
    Ok(Codebook {
        k,
        centroids,
        seed,
        inertia,
        iterations_run,
    })
}

pub fn fit_kmeans(corpus: &FrameCorpus, k: usize, seed: u64, opts: &FitOptions) -> Result<Codebook> {
    let points: Vec<Point> = corpus.frames().map(|f| f.au).collect();
    fit_kmeans_points(&points, k, seed, opts)
}

/// One fit per k; ks must be strictly increasing.
pub fn elbow_sweep(
    corpus: &FrameCorpus,
    ks: &[usize],
    seed: u64,
    opts: &FitOptions,
) -> Result<ElbowCurve> {
    if ks.windows(2).any(|w| w[1] <= w[0]) || ks.is_empty() {
        return Err(Error::InvalidArgument(
            "elbow sweep needs a strictly increasing, nonempty k list".into(),
        ));
    }
    let points: Vec<Point> = corpus.frames().map(|f| f.au).collect();
    let mut curve = Vec::with_capacity(ks.len());
    for &k in ks {
        let codebook = fit_kmeans_points(&points, k, seed, opts)?;
        curve.push((k, codebook.inertia));
    }
    Ok(ElbowCurve { points: curve })
}

/// Knee rule: over interior points, score the drop in per-k inertia slope,
/// (I[i-1] − I[i])/Δk_left − (I[i] − I[i+1])/Δk_right, and take the argmax;
/// ties and flat curves fall to the smallest interior k, flagged weak.
pub fn select_elbow(curve: &ElbowCurve) -> Result<ElbowChoice> {
    let pts = &curve.points;
    if pts.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "elbow selection needs at least 3 curve points, got {}",
            pts.len()
        )));
    }
    let mut best: Option<ElbowChoice> = None;
    for i in 1..pts.len() - 1 {
        let (k_prev, i_prev) = pts[i - 1];
        let (k_here, i_here) = pts[i];
        let (k_next, i_next) = pts[i + 1];
        let left = (i_prev - i_here) / (k_here - k_prev) as f64;
        let right = (i_here - i_next) / (k_next - k_here) as f64;
        let score = left - right;
        if best.map_or(true, |b| score > b.score) {
            best = Some(ElbowChoice {
                k: k_here,
                score,
                weak_knee: false,
            });
        }
    }
    let mut choice = best.expect("≥ 1 interior point");
    choice.weak_knee = choice.score <= 1e-12;
    Ok(choice)
}

/// Nearest centroid for one frame; ties go to the lowest index.
pub fn assign(frame: &Point, codebook: &Codebook) -> (u32, f64) {
    let (j, d2) = nearest(frame, &codebook.centroids);
    (j as u32, d2.sqrt())
}

/// Assigns a batch of frames, preserving order. Pure per-frame work, so the
/// result is identical for any worker count.
pub fn assign_all(frames: &[Point], codebook: &Codebook, workers: usize) -> Vec<(u32, f64)> {
    if workers.max(1) == 1 || frames.len() < 2 {
        frames.iter().map(|f| assign(f, codebook)).collect()
    } else {
        frames.par_iter().map(|f| assign(f, codebook)).collect()
    }
}

pub fn write_codebook(codebook: &Codebook, path: &Path) -> Result<()> {
    let mut w = ArtifactWriter::create(path)?;
    w.write_header(CODEBOOK_MAGIC, CODEBOOK_VERSION)?;
    w.write_u32(codebook.k as u32)?;
    w.write_u32(NUM_AUS as u32)?;
    w.write_u64(codebook.seed)?;
    w.write_f64(codebook.inertia)?;
    for c in &codebook.centroids {
        for v in c {
            w.write_f64(*v)?;
        }
    }
    w.finish()
}

pub fn read_codebook(path: &Path) -> Result<Codebook> {
    let mut r = ArtifactReader::open(path)?;
    r.expect_header(CODEBOOK_MAGIC, CODEBOOK_VERSION)?;
    let k = r.read_u32()? as usize;
    let dim = r.read_u32()? as usize;
    if dim != NUM_AUS {
        return Err(Error::format(
            r.label(),
            format!("codebook dimension {dim} (expected {NUM_AUS})"),
        ));
    }
    if k == 0 {
        return Err(Error::format(r.label(), "codebook has k = 0"));
    }
    let seed = r.read_u64()?;
    let inertia = r.read_f64()?;
    let mut centroids = Vec::with_capacity(k);
    for _ in 0..k {
        let row = r.read_f64_vec(NUM_AUS)?;
        let mut c = [0.0; NUM_AUS];
        c.copy_from_slice(&row);
        if c.iter().any(|v| !v.is_finite()) {
            return Err(Error::format(r.label(), "non-finite centroid"));
        }
        centroids.push(c);
    }
    r.expect_eof()?;
    Ok(Codebook {
        k,
        centroids,
        seed,
        inertia,
        iterations_run: 0,
    })
}
