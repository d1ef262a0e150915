//! GloVe training over the co-occurrence table: weighted least squares on
//! log co-occurrence, minimized by per-parameter AdaGrad.
//!
//! Each stored cell (i ≤ j) is trained as two directed cells (i,j) and
//! (j,i) — once for the diagonal — so main and context roles both see every
//! pair. Multi-worker training is hogwild: workers update shared parameters
//! without locks and may overwrite each other; the single-worker
//! deterministic mode is the reproducibility target.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cooccur::CooccurrenceTable;
use crate::error::{Error, Result};
use crate::store::{ArtifactReader, ArtifactWriter};
use crate::tokenize::Vocabulary;

const MODEL_MAGIC: &[u8; 4] = b"AUGV";
pub(crate) const MODEL_VERSION: u32 = 1;

/// AdaGrad denominator fuzz.
const ADAGRAD_EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct GloveConfig {
    pub dim: usize,
    /// Co-occurrence weight where f(x) saturates at 1.
    pub x_max: f64,
    /// Exponent of the sub-saturation weighting curve.
    pub alpha: f64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub workers: usize,
    /// Forces the sequential update path even if `workers` > 1.
    pub deterministic: bool,
}

impl Default for GloveConfig {
    fn default() -> Self {
        GloveConfig {
            dim: 50,
            x_max: 100.0,
            alpha: 0.75,
            learning_rate: 0.05,
            epochs: 50,
            seed: 0,
            workers: 1,
            deterministic: true,
        }
    }
}

impl GloveConfig {
    fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::InvalidArgument("embedding dim must be ≥ 1".into()));
        }
        if !(self.x_max > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "x_max must be positive, got {}",
                self.x_max
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// Main/context vectors and biases, plus the AdaGrad state that trained
/// them. Only (V, dim, W, W̃, b, b̃) are persisted; accumulators and the
/// loss history stay in memory.
#[derive(Debug, Clone)]
pub struct EmbeddingModel {
    pub v: usize,
    pub dim: usize,
    pub w_main: Vec<f64>,
    pub w_ctx: Vec<f64>,
    pub b_main: Vec<f64>,
    pub b_ctx: Vec<f64>,
    pub acc_w_main: Vec<f64>,
    pub acc_w_ctx: Vec<f64>,
    pub acc_b_main: Vec<f64>,
    pub acc_b_ctx: Vec<f64>,
    /// Mean weighted loss per epoch, in training order.
    pub loss_history: Vec<f64>,
}

impl EmbeddingModel {
    /// Fresh model at the standard initialization: vectors uniform in
    /// [−0.5/dim, +0.5/dim] under `seed`, biases and accumulators zero.
    pub fn init(v: usize, dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| (rng.gen::<f64>() - 0.5) / dim as f64)
                .collect()
        };
        let w_main = fill(v * dim);
        let w_ctx = fill(v * dim);
        EmbeddingModel {
            v,
            dim,
            w_main,
            w_ctx,
            b_main: vec![0.0; v],
            b_ctx: vec![0.0; v],
            acc_w_main: vec![0.0; v * dim],
            acc_w_ctx: vec![0.0; v * dim],
            acc_b_main: vec![0.0; v],
            acc_b_ctx: vec![0.0; v],
            loss_history: Vec::new(),
        }
    }

    /// Model's score for a directed cell: Wᵢ·W̃ⱼ + bᵢ + b̃ⱼ.
    pub fn score(&self, i: usize, j: usize) -> f64 {
        let io = i * self.dim;
        let jo = j * self.dim;
        let mut dot = 0.0;
        for d in 0..self.dim {
            dot += self.w_main[io + d] * self.w_ctx[jo + d];
        }
        dot + self.b_main[i] + self.b_ctx[j]
    }

    /// W + W̃ for one token — the exported representation.
    pub fn combined(&self, token: usize) -> Vec<f64> {
        let o = token * self.dim;
        (0..self.dim)
            .map(|d| self.w_main[o + d] + self.w_ctx[o + d])
            .collect()
    }

    pub fn main_vector(&self, token: usize) -> &[f64] {
        &self.w_main[token * self.dim..(token + 1) * self.dim]
    }

    fn params_finite(&self) -> bool {
        self.w_main
            .iter()
            .chain(self.w_ctx.iter())
            .chain(self.b_main.iter())
            .chain(self.b_ctx.iter())
            .all(|v| v.is_finite())
    }
}

/// The GloVe cell weight f(x) = (x/x_max)^alpha, capped at 1.
pub fn weight_fn(x: f64, x_max: f64, alpha: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "co-occurrence weight must be positive, got {x}"
        )));
    }
    if x >= x_max {
        Ok(1.0)
    } else {
        Ok((x / x_max).powf(alpha))
    }
}

/// Loss and gradients of one directed cell, taken at the current parameters.
#[derive(Debug, Clone)]
pub struct CellGrad {
    pub i: u32,
    pub j: u32,
    pub loss: f64,
    pub grad_w_main: Vec<f64>,
    pub grad_w_ctx: Vec<f64>,
    pub grad_b_main: f64,
    pub grad_b_ctx: f64,
}

/// Evaluates a batch of directed cells without updating anything. Returns
/// the summed weighted loss and the per-cell gradients: for residual
/// r = score − ln x, the contributions are f·r² to the loss, 2f·r·W̃ⱼ wrt
/// Wᵢ, 2f·r·Wᵢ wrt W̃ⱼ, and 2f·r wrt either bias.
pub fn loss_and_grad(
    model: &EmbeddingModel,
    cells: &[(u32, u32, f64)],
    x_max: f64,
    alpha: f64,
) -> Result<(f64, Vec<CellGrad>)> {
    let mut total = 0.0;
    let mut grads = Vec::with_capacity(cells.len());
    for (idx, &(i, j, x)) in cells.iter().enumerate() {
        let f = weight_fn(x, x_max, alpha)?;
        let r = model.score(i as usize, j as usize) - x.ln();
        if !r.is_finite() {
            return Err(Error::Training {
                epoch: 0,
                cell: idx,
                message: format!("non-finite residual at cell ({i},{j})"),
            });
        }
        let g = 2.0 * f * r;
        let io = i as usize * model.dim;
        let jo = j as usize * model.dim;
        grads.push(CellGrad {
            i,
            j,
            loss: f * r * r,
            grad_w_main: (0..model.dim).map(|d| g * model.w_ctx[jo + d]).collect(),
            grad_w_ctx: (0..model.dim).map(|d| g * model.w_main[io + d]).collect(),
            grad_b_main: g,
            grad_b_ctx: g,
        });
        total += f * r * r;
    }
    Ok((total, grads))
}

/// Summed weighted loss only (used by finite-difference checks).
pub fn batch_loss(
    model: &EmbeddingModel,
    cells: &[(u32, u32, f64)],
    x_max: f64,
    alpha: f64,
) -> Result<f64> {
    let mut total = 0.0;
    for &(i, j, x) in cells {
        let f = weight_fn(x, x_max, alpha)?;
        let r = model.score(i as usize, j as usize) - x.ln();
        total += f * r * r;
    }
    Ok(total)
}

/// Expands the symmetric table into the directed training cells, sorted by
/// (i, j): each off-diagonal stored cell appears in both directions.
fn directed_cells(table: &CooccurrenceTable) -> Vec<(u32, u32, f64)> {
    let mut cells = Vec::with_capacity(table.len() * 2);
    for (i, j, w) in table.cells_sorted() {
        cells.push((i, j, w));
        if i != j {
            cells.push((j, i, w));
        }
    }
    cells.sort_by_key(|&(i, j, _)| (i, j));
    cells
}

/// One AdaGrad update against plain (single-worker) storage.
#[inline]
fn update_cell_seq(
    model: &mut EmbeddingModel,
    i: usize,
    j: usize,
    x: f64,
    f: f64,
    lr: f64,
) -> f64 {
    let dim = model.dim;
    let io = i * dim;
    let jo = j * dim;
    let mut dot = 0.0;
    for d in 0..dim {
        dot += model.w_main[io + d] * model.w_ctx[jo + d];
    }
    let r = dot + model.b_main[i] + model.b_ctx[j] - x.ln();
    let g = 2.0 * f * r;
    for d in 0..dim {
        // Both gradients read the pre-update values of dimension d.
        let gm = g * model.w_ctx[jo + d];
        let gc = g * model.w_main[io + d];
        model.acc_w_main[io + d] += gm * gm;
        model.acc_w_ctx[jo + d] += gc * gc;
        model.w_main[io + d] -= lr * gm / (model.acc_w_main[io + d] + ADAGRAD_EPS).sqrt();
        model.w_ctx[jo + d] -= lr * gc / (model.acc_w_ctx[jo + d] + ADAGRAD_EPS).sqrt();
    }
    model.acc_b_main[i] += g * g;
    model.b_main[i] -= lr * g / (model.acc_b_main[i] + ADAGRAD_EPS).sqrt();
    model.acc_b_ctx[j] += g * g;
    model.b_ctx[j] -= lr * g / (model.acc_b_ctx[j] + ADAGRAD_EPS).sqrt();
    f * r * r
}

/// f64 slice shared across hogwild workers as relaxed atomic bits. Updates
/// are load-compute-store without compare-and-swap, so concurrent writers
/// can lose increments — that is the documented hogwild trade.
struct SharedF64(Vec<AtomicU64>);

impl SharedF64 {
    fn from_vec(v: &[f64]) -> Self {
        SharedF64(v.iter().map(|&x| AtomicU64::new(x.to_bits())).collect())
    }

    fn to_vec(&self) -> Vec<f64> {
        self.0
            .iter()
            .map(|a| f64::from_bits(a.load(Ordering::Relaxed)))
            .collect()
    }

    #[inline]
    fn get(&self, idx: usize) -> f64 {
        f64::from_bits(self.0[idx].load(Ordering::Relaxed))
    }

    #[inline]
    fn set(&self, idx: usize, value: f64) {
        self.0[idx].store(value.to_bits(), Ordering::Relaxed);
    }
}

struct SharedModel {
    dim: usize,
    w_main: SharedF64,
    w_ctx: SharedF64,
    b_main: SharedF64,
    b_ctx: SharedF64,
    acc_w_main: SharedF64,
    acc_w_ctx: SharedF64,
    acc_b_main: SharedF64,
    acc_b_ctx: SharedF64,
}

impl SharedModel {
    fn update_cell(&self, i: usize, j: usize, x: f64, f: f64, lr: f64) -> f64 {
        let dim = self.dim;
        let io = i * dim;
        let jo = j * dim;
        let mut dot = 0.0;
        for d in 0..dim {
            dot += self.w_main.get(io + d) * self.w_ctx.get(jo + d);
        }
        let r = dot + self.b_main.get(i) + self.b_ctx.get(j) - x.ln();
        let g = 2.0 * f * r;
        for d in 0..dim {
            let wm = self.w_main.get(io + d);
            let wc = self.w_ctx.get(jo + d);
            let gm = g * wc;
            let gc = g * wm;
            let am = self.acc_w_main.get(io + d) + gm * gm;
            let ac = self.acc_w_ctx.get(jo + d) + gc * gc;
            self.acc_w_main.set(io + d, am);
            self.acc_w_ctx.set(jo + d, ac);
            self.w_main.set(io + d, wm - lr * gm / (am + ADAGRAD_EPS).sqrt());
            self.w_ctx.set(jo + d, wc - lr * gc / (ac + ADAGRAD_EPS).sqrt());
        }
        let ab = self.acc_b_main.get(i) + g * g;
        self.acc_b_main.set(i, ab);
        self.b_main.set(i, self.b_main.get(i) - lr * g / (ab + ADAGRAD_EPS).sqrt());
        let abc = self.acc_b_ctx.get(j) + g * g;
        self.acc_b_ctx.set(j, abc);
        self.b_ctx.set(j, self.b_ctx.get(j) - lr * g / (abc + ADAGRAD_EPS).sqrt());
        f * r * r
    }
}

/// Trains a model over the table. Directed cells are reshuffled every epoch
/// under `config.seed`; with `workers` = 1 (or `deterministic` set) the
/// whole run is bit-reproducible.
pub fn train(
    table: &CooccurrenceTable,
    vocab: &Vocabulary,
    config: &GloveConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    if table.v as usize != vocab.size() {
        return Err(Error::InvalidArgument(format!(
            "table vocabulary size {} does not match vocabulary {}",
            table.v,
            vocab.size()
        )));
    }
    let mut model = EmbeddingModel::init(table.v as usize, config.dim, config.seed);
    let mut cells = directed_cells(table);
    if cells.is_empty() {
        return Ok(model);
    }

    // Precompute f(x) once per directed cell; x never changes.
    let weights: Result<Vec<f64>> = cells
        .iter()
        .map(|&(_, _, x)| weight_fn(x, config.x_max, config.alpha))
        .collect();
    let mut cells_f: Vec<(u32, u32, f64, f64)> = cells
        .drain(..)
        .zip(weights?)
        .map(|((i, j, x), f)| (i, j, x, f))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let sequential = config.deterministic || config.workers <= 1;
    let n_cells = cells_f.len();

    if sequential {
        for epoch in 0..config.epochs {
            cells_f.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for (idx, &(i, j, x, f)) in cells_f.iter().enumerate() {
                let loss = update_cell_seq(
                    &mut model,
                    i as usize,
                    j as usize,
                    x,
                    f,
                    config.learning_rate,
                );
                if !loss.is_finite() {
                    return Err(Error::Training {
                        epoch,
                        cell: idx,
                        message: format!("non-finite loss at cell ({i},{j})"),
                    });
                }
                loss_sum += loss;
            }
            model.loss_history.push(loss_sum / n_cells as f64);
        }
    } else {
        let shared = SharedModel {
            dim: model.dim,
            w_main: SharedF64::from_vec(&model.w_main),
            w_ctx: SharedF64::from_vec(&model.w_ctx),
            b_main: SharedF64::from_vec(&model.b_main),
            b_ctx: SharedF64::from_vec(&model.b_ctx),
            acc_w_main: SharedF64::from_vec(&model.acc_w_main),
            acc_w_ctx: SharedF64::from_vec(&model.acc_w_ctx),
            acc_b_main: SharedF64::from_vec(&model.acc_b_main),
            acc_b_ctx: SharedF64::from_vec(&model.acc_b_ctx),
        };
        let chunk = n_cells.div_ceil(config.workers);
        for epoch in 0..config.epochs {
            cells_f.shuffle(&mut rng);
            let losses: Vec<Result<f64>> = std::thread::scope(|scope| {
                let handles: Vec<_> = cells_f
                    .chunks(chunk)
                    .map(|shard| {
                        let shared = &shared;
                        scope.spawn(move || -> Result<f64> {
                            let mut loss_sum = 0.0;
                            for (idx, &(i, j, x, f)) in shard.iter().enumerate() {
                                let loss = shared.update_cell(
                                    i as usize,
                                    j as usize,
                                    x,
                                    f,
                                    config.learning_rate,
                                );
                                if !loss.is_finite() {
                                    return Err(Error::Training {
                                        epoch,
                                        cell: idx,
                                        message: format!("non-finite loss at cell ({i},{j})"),
                                    });
                                }
                                loss_sum += loss;
                            }
                            Ok(loss_sum)
                        })
                    })
                    .collect();
                handles.into_iter().map(|h| h.join().unwrap()).collect()
            });
            let mut loss_sum = 0.0;
            for l in losses {
                loss_sum += l?;
            }
            model.loss_history.push(loss_sum / n_cells as f64);
        }
        model.w_main = shared.w_main.to_vec();
        model.w_ctx = shared.w_ctx.to_vec();
        model.b_main = shared.b_main.to_vec();
        model.b_ctx = shared.b_ctx.to_vec();
        model.acc_w_main = shared.acc_w_main.to_vec();
        model.acc_w_ctx = shared.acc_w_ctx.to_vec();
        model.acc_b_main = shared.acc_b_main.to_vec();
        model.acc_b_ctx = shared.acc_b_ctx.to_vec();
    }

    if !model.params_finite() {
        return Err(Error::Training {
            epoch: config.epochs.saturating_sub(1),
            cell: n_cells - 1,
            message: "non-finite parameters after final epoch".into(),
        });
    }
    Ok(model)
}

/// How export combines the two vector blocks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineMode {
    /// W + W̃ (the GloVe convention).
    Sum,
    /// W only.
    Main,
}

/// Writes one line per token: name then `dim` values with 6 significant
/// digits, space-separated.
pub fn export_embeddings(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    path: &Path,
    combine: CombineMode,
) -> Result<()> {
    use std::io::Write;
    if vocab.size() != model.v {
        return Err(Error::InvalidArgument(format!(
            "model V = {} does not match vocabulary size {}",
            model.v,
            vocab.size()
        )));
    }
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for token in 0..model.v {
        let name = vocab
            .token_name(token as u32)
            .expect("token < V has a name");
        let vector = match combine {
            CombineMode::Sum => model.combined(token),
            CombineMode::Main => model.main_vector(token).to_vec(),
        };
        write!(out, "{name}").map_err(|e| Error::io(path, e))?;
        for v in vector {
            write!(out, " {v:.5e}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(out).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0 // zero vectors point nowhere; call them unrelated
    } else {
        dot / (na * nb)
    }
}

/// Top-n tokens by cosine similarity of combined vectors, query excluded;
/// ties break toward the lower token id.
pub fn nearest_neighbors(
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    token_name: &str,
    n: usize,
) -> Result<Vec<(String, f64)>> {
    let query = vocab
        .token_by_name(token_name)
        .ok_or_else(|| Error::UnknownToken(token_name.to_string()))? as usize;
    if n >= model.v {
        return Err(Error::InvalidArgument(format!(
            "n = {n} must be smaller than the vocabulary size {}",
            model.v
        )));
    }
    let query_vec = model.combined(query);
    let mut scored: Vec<(usize, f64)> = (0..model.v)
        .filter(|&t| t != query)
        .map(|t| (t, cosine(&query_vec, &model.combined(t))))
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(n);
    Ok(scored
        .into_iter()
        .map(|(t, sim)| {
            (
                vocab.token_name(t as u32).expect("token < V has a name"),
                sim,
            )
        })
        .collect())
}

pub fn write_model(model: &EmbeddingModel, path: &Path) -> Result<()> {
    let mut w = ArtifactWriter::create(path)?;
    w.write_header(MODEL_MAGIC, MODEL_VERSION)?;
    w.write_u32(model.v as u32)?;
    w.write_u32(model.dim as u32)?;
    for block in [&model.w_main, &model.w_ctx, &model.b_main, &model.b_ctx] {
        for v in block.iter() {
            w.write_f64(*v)?;
        }
    }
    w.finish()
}

pub fn read_model(path: &Path) -> Result<EmbeddingModel> {
    let mut r = ArtifactReader::open(path)?;
    r.expect_header(MODEL_MAGIC, MODEL_VERSION)?;
    let v = r.read_u32()? as usize;
    let dim = r.read_u32()? as usize;
    if dim == 0 {
        return Err(Error::format(r.label(), "model dim is 0"));
    }
    let w_main = r.read_f64_vec(v * dim)?;
    let w_ctx = r.read_f64_vec(v * dim)?;
    let b_main = r.read_f64_vec(v)?;
    let b_ctx = r.read_f64_vec(v)?;
    r.expect_eof()?;
    for block in [&w_main, &w_ctx, &b_main, &b_ctx] {
        if block.iter().any(|x| !x.is_finite()) {
            return Err(Error::format(r.label(), "non-finite model parameter"));
        }
    }
    Ok(EmbeddingModel {
        v,
        dim,
        w_main,
        w_ctx,
        b_main,
        b_ctx,
        acc_w_main: vec![0.0; v * dim],
        acc_w_ctx: vec![0.0; v * dim],
        acc_b_main: vec![0.0; v],
        acc_b_ctx: vec![0.0; v],
        loss_history: Vec::new(),
    })
}
