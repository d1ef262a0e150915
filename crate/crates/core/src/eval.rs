//! Regression harness: correlation/error metrics, ridge with an internal
//! lambda search, grouped k-fold cross-validation, and a label-shuffling
//! random baseline.

use std::collections::HashMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::features::FeatureTable;

fn check_paired(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "{what}: length mismatch {} vs {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidArgument(format!("{what}: empty input")));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("{what}: non-finite value")));
    }
    Ok(())
}

fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Pearson correlation, population moments. Constant input on either side is
/// a numeric error rather than a silent 0 or NaN.
pub fn pcc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(pred, truth, "pcc")?;
    let (mp, vp) = moments(pred);
    let (mt, vt) = moments(truth);
    if vp <= 0.0 || vt <= 0.0 {
        return Err(Error::Numeric(
            "pcc undefined for constant input".into(),
        ));
    }
    let n = pred.len() as f64;
    let cov = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - mp) * (t - mt))
        .sum::<f64>()
        / n;
    Ok((cov / (vp.sqrt() * vt.sqrt())).clamp(-1.0, 1.0))
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(pred, truth, "rmse")?;
    let n = pred.len() as f64;
    Ok((pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
        .sqrt())
}

/// Concordance correlation: 2·cov / (var_p + var_t + (mean_p − mean_t)²),
/// population moments throughout. Shares the constant-input error with
/// [`pcc`].
pub fn ccc(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_paired(pred, truth, "ccc")?;
    let (mp, vp) = moments(pred);
    let (mt, vt) = moments(truth);
    if vp <= 0.0 || vt <= 0.0 {
        return Err(Error::Numeric(
            "ccc undefined for constant input".into(),
        ));
    }
    let n = pred.len() as f64;
    let cov = pred
        .iter()
        .zip(truth)
        .map(|(p, t)| (p - mp) * (t - mt))
        .sum::<f64>()
        / n;
    let dm = mp - mt;
    Ok(2.0 * cov / (vp + vt + dm * dm))
}

/// Ridge solution in the original feature space.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl RidgeModel {
    pub fn predict_one(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .weights
                .iter()
                .zip(x)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    pub fn predict(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict_one(x)).collect()
    }
}

/// Solves A·w = b in place by Gaussian elimination with partial pivoting.
fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Result<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        if a[pivot][col].abs() < 1e-12 {
            return Err(Error::Numeric(
                "singular system; use a ridge penalty > 0".into(),
            ));
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row][k] -= factor * a[col][k];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut w = vec![0.0; n];
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col][k] * w[k];
        }
        w[col] = acc / a[col][col];
    }
    Ok(w)
}

/// Ridge regression with internal standardization: features are centered
/// and scaled by their population std before the penalized solve, the
/// intercept is left unpenalized, and the returned model works on raw
/// features. Constant columns are dropped (zero weight).
pub fn ridge_fit(x: &[Vec<f64>], y: &[f64], lambda: f64) -> Result<RidgeModel> {
    if x.len() != y.len() {
        return Err(Error::InvalidArgument(format!(
            "ridge: {} rows vs {} labels",
            x.len(),
            y.len()
        )));
    }
    let n = x.len();
    if n == 0 {
        return Err(Error::InvalidArgument("ridge: empty training set".into()));
    }
    let d = x[0].len();
    if x.iter().any(|row| row.len() != d) {
        return Err(Error::InvalidArgument("ridge: ragged feature rows".into()));
    }
    if lambda < 0.0 || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("ridge: bad lambda {lambda}")));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("ridge: non-finite training value".into()));
    }

    let mut mean = vec![0.0; d];
    for row in x {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; d];
    for row in x {
        for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
            let diff = v - m;
            *s += diff * diff;
        }
    }
    for s in &mut std {
        *s = (*s / n as f64).sqrt();
    }

    // Columns that survive standardization (non-constant).
    let live: Vec<usize> = (0..d).filter(|&j| std[j] > 0.0).collect();
    let y_mean = y.iter().sum::<f64>() / n as f64;

    let w_z = if live.is_empty() {
        Vec::new()
    } else {
        let p = live.len();
        // Gram matrix of standardized features plus lambda on the diagonal.
        let mut gram = vec![vec![0.0; p]; p];
        let mut rhs = vec![0.0; p];
        let mut z = vec![0.0; p];
        for (row, &yv) in x.iter().zip(y) {
            for (zi, &j) in z.iter_mut().zip(&live) {
                *zi = (row[j] - mean[j]) / std[j];
            }
            for a in 0..p {
                rhs[a] += z[a] * (yv - y_mean);
                for b in a..p {
                    gram[a][b] += z[a] * z[b];
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                gram[a][b] = gram[b][a];
            }
            gram[a][a] += lambda;
        }
        solve_linear(gram, rhs)?
    };

    let mut weights = vec![0.0; d];
    let mut intercept = y_mean;
    for (&j, &wz) in live.iter().zip(&w_z) {
        weights[j] = wz / std[j];
        intercept -= wz * mean[j] / std[j];
    }
    if !intercept.is_finite() || weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Numeric("ridge: non-finite solution".into()));
    }
    Ok(RidgeModel { weights, intercept })
}

/// Aligned evaluation data: one row and one label per video.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<f64>,
    /// Optional fold-grouping key per row; rows sharing a key never split
    /// across folds.
    pub groups: Option<Vec<String>>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub n_test: usize,
    pub lambda: f64,
    pub pcc: f64,
    pub rmse: f64,
    pub ccc: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub target_name: String,
    pub n_samples: usize,
    pub pcc: f64,
    pub rmse: f64,
    pub ccc: f64,
    pub per_fold: Vec<FoldMetrics>,
}

/// Deterministic fold assignment: rows (or groups) are sorted by key, then
/// shuffled with the seed, then cut into `folds` contiguous parts whose
/// sizes differ by at most one.
fn fold_assignment(data: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    let n = data.len();
    let keys: Vec<String> = match &data.groups {
        Some(g) => {
            let mut distinct: Vec<String> = g.clone();
            distinct.sort();
            distinct.dedup();
            distinct
        }
        None => {
            let mut ids = data.ids.clone();
            ids.sort();
            ids
        }
    };
    if keys.len() < folds {
        return Err(Error::InvalidArgument(format!(
            "{} fold keys cannot fill {folds} folds",
            keys.len()
        )));
    }
    let mut order: Vec<usize> = (0..keys.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    // Contiguous cuts over the shuffled key order; the first (len % folds)
    // folds take one extra key.
    let base = keys.len() / folds;
    let extra = keys.len() % folds;
    let mut fold_of_key: HashMap<&str, usize> = HashMap::new();
    let mut cursor = 0;
    for fold in 0..folds {
        let take = base + usize::from(fold < extra);
        for &ki in &order[cursor..cursor + take] {
            fold_of_key.insert(keys[ki].as_str(), fold);
        }
        cursor += take;
    }

    let mut assignment = vec![0usize; n];
    for i in 0..n {
        let key = match &data.groups {
            Some(g) => g[i].as_str(),
            None => data.ids[i].as_str(),
        };
        assignment[i] = fold_of_key[key];
    }
    Ok(assignment)
}

/// Picks a lambda for one outer fold by an inner 80/20 split of its training
/// rows, scored by RMSE. Ties keep the earliest lambda in the grid.
fn pick_lambda(
    train_x: &[Vec<f64>],
    train_y: &[f64],
    lambdas: &[f64],
    rng_seed: u64,
) -> Result<f64> {
    debug_assert!(!lambdas.is_empty());
    if lambdas.len() == 1 {
        return Ok(lambdas[0]);
    }
    let n = train_x.len();
    let cut = n * 4 / 5;
    if cut == 0 || cut == n {
        // Too small to split; defer to the first grid entry.
        return Ok(lambdas[0]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    order.shuffle(&mut rng);
    let (fit_idx, val_idx) = order.split_at(cut);
    let fit_x: Vec<Vec<f64>> = fit_idx.iter().map(|&i| train_x[i].clone()).collect();
    let fit_y: Vec<f64> = fit_idx.iter().map(|&i| train_y[i]).collect();
    let val_x: Vec<Vec<f64>> = val_idx.iter().map(|&i| train_x[i].clone()).collect();
    let val_y: Vec<f64> = val_idx.iter().map(|&i| train_y[i]).collect();

    let mut best = lambdas[0];
    let mut best_rmse = f64::INFINITY;
    for &lambda in lambdas {
        let model = match ridge_fit(&fit_x, &fit_y, lambda) {
            Ok(m) => m,
            // A singular unpenalized solve just loses its grid slot.
            Err(Error::Numeric(_)) => continue,
            Err(e) => return Err(e),
        };
        let err = rmse(&model.predict(&val_x), &val_y)?;
        if err < best_rmse {
            best_rmse = err;
            best = lambda;
        }
    }
    Ok(best)
}

/// K-fold cross-validated ridge evaluation. Out-of-fold predictions are
/// pooled in the dataset's original row order and scored once overall, with
/// per-fold metrics alongside.
pub fn kfold_cv(
    data: &Dataset,
    folds: usize,
    lambdas: &[f64],
    seed: u64,
    target_name: &str,
) -> Result<EvalReport> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if lambdas.is_empty() {
        return Err(Error::InvalidArgument("empty lambda grid".into()));
    }
    if lambdas.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidArgument("lambdas must be finite and ≥ 0".into()));
    }
    let n = data.len();
    if data.x.len() != n || data.y.len() != n {
        return Err(Error::InvalidArgument("dataset fields disagree in length".into()));
    }
    if let Some(g) = &data.groups {
        if g.len() != n {
            return Err(Error::InvalidArgument("dataset fields disagree in length".into()));
        }
    }

    let assignment = fold_assignment(data, folds, seed)?;
    let mut pooled = vec![f64::NAN; n];
    let mut per_fold = Vec::with_capacity(folds);

    for fold in 0..folds {
        let test_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
        let train_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
        if test_idx.is_empty() || train_idx.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "fold {fold} has an empty train or test side"
            )));
        }
        let train_x: Vec<Vec<f64>> = train_idx.iter().map(|&i| data.x[i].clone()).collect();
        let train_y: Vec<f64> = train_idx.iter().map(|&i| data.y[i]).collect();
        let inner_seed = seed ^ 0x9E37_79B9_7F4A_7C15u64.wrapping_mul(fold as u64 + 1);
        let lambda = pick_lambda(&train_x, &train_y, lambdas, inner_seed)?;
        let model = ridge_fit(&train_x, &train_y, lambda)?;

        let test_x: Vec<Vec<f64>> = test_idx.iter().map(|&i| data.x[i].clone()).collect();
        let test_y: Vec<f64> = test_idx.iter().map(|&i| data.y[i]).collect();
        let pred = model.predict(&test_x);
        for (&i, &p) in test_idx.iter().zip(&pred) {
            pooled[i] = p;
        }
        per_fold.push(FoldMetrics {
            fold,
            n_test: test_idx.len(),
            lambda,
            pcc: pcc(&pred, &test_y)?,
            rmse: rmse(&pred, &test_y)?,
            ccc: ccc(&pred, &test_y)?,
        });
    }

    debug_assert!(pooled.iter().all(|p| p.is_finite()));
    Ok(EvalReport {
        target_name: target_name.to_string(),
        n_samples: n,
        pcc: pcc(&pooled, &data.y)?,
        rmse: rmse(&pooled, &data.y)?,
        ccc: ccc(&pooled, &data.y)?,
        per_fold,
    })
}

/// Chance floor: predictions are drawn from the empirical training-label
/// distribution (sampling with replacement), repeated `repeats` times, and
/// the metrics averaged. RMSE averages over every repeat; PCC and CCC
/// average only over repeats where they are defined (a degenerate draw is
/// skipped, not an error).
pub fn random_baseline(
    train_labels: &[f64],
    truth: &[f64],
    seed: u64,
    repeats: usize,
) -> Result<EvalReport> {
    if train_labels.is_empty() || truth.is_empty() {
        return Err(Error::InvalidArgument("random baseline: empty input".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("random baseline: repeats must be ≥ 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pcc_sum = 0.0;
    let mut pcc_n = 0usize;
    let mut ccc_sum = 0.0;
    let mut ccc_n = 0usize;
    let mut rmse_sum = 0.0;
    for _ in 0..repeats {
        let pred: Vec<f64> = (0..truth.len())
            .map(|_| train_labels[rng.gen_range(0..train_labels.len())])
            .collect();
        rmse_sum += rmse(&pred, truth)?;
        if let Ok(p) = pcc(&pred, truth) {
            pcc_sum += p;
            pcc_n += 1;
        }
        if let Ok(c) = ccc(&pred, truth) {
            ccc_sum += c;
            ccc_n += 1;
        }
    }
    if pcc_n == 0 || ccc_n == 0 {
        return Err(Error::Numeric(
            "random baseline: correlation undefined in every repeat".into(),
        ));
    }
    Ok(EvalReport {
        target_name: "random_baseline".into(),
        n_samples: truth.len(),
        pcc: pcc_sum / pcc_n as f64,
        rmse: rmse_sum / repeats as f64,
        ccc: ccc_sum / ccc_n as f64,
        per_fold: Vec::new(),
    })
}

/// Reads a headerless `video_id<TAB>label` file. A first line whose second
/// field does not parse as a number is treated as a header and skipped.
pub fn parse_labels_tsv(path: &Path) -> Result<Vec<(String, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let mut out = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default();
        let value = fields.next().ok_or_else(|| {
            Error::format(&label, format!("line {}: expected id<TAB>value", lineno + 1))
        })?;
        match value.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push((id.to_string(), v)),
            _ if lineno == 0 => continue, // header line
            _ => {
                return Err(Error::format(
                    &label,
                    format!("line {}: bad label {value:?}", lineno + 1),
                ))
            }
        }
    }
    if out.is_empty() {
        return Err(Error::format(&label, "no labels"));
    }
    let mut seen = HashMap::new();
    for (id, _) in &out {
        if seen.insert(id.as_str(), ()).is_some() {
            return Err(Error::format(&label, format!("duplicate video_id {id:?}")));
        }
    }
    Ok(out)
}

/// Joins a feature table with labels into a [`Dataset`], keeping the feature
/// table's row order. Every feature row must have a label; labels without a
/// feature row are ignored.
pub fn align(features: &FeatureTable, labels: &[(String, f64)]) -> Result<Dataset> {
    let by_id: HashMap<&str, f64> = labels.iter().map(|(id, v)| (id.as_str(), *v)).collect();
    let mut ids = Vec::with_capacity(features.rows.len());
    let mut x = Vec::with_capacity(features.rows.len());
    let mut y = Vec::with_capacity(features.rows.len());
    for (id, row) in &features.rows {
        let Some(&label) = by_id.get(id.as_str()) else {
            return Err(Error::InvalidArgument(format!("no label for video {id:?}")));
        };
        ids.push(id.clone());
        x.push(row.clone());
        y.push(label);
    }
    Ok(Dataset {
        ids,
        x,
        y,
        groups: None,
    })
}

/// One row per report: name, sample count, the three pooled metrics.
pub fn report_tsv(reports: &[EvalReport]) -> String {
    let mut out = String::from("target\tn\tpcc\trmse\tccc\n");
    for r in reports {
        out.push_str(&format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.6}\n",
            r.target_name, r.n_samples, r.pcc, r.rmse, r.ccc
        ));
    }
    out
}
