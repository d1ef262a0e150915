//! Per-video feature vectors for the regression comparison: raw-AU static
//! statistics, quantized dynamic statistics, and pooled token embeddings.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::glove::EmbeddingModel;
use crate::ingest::{AuSequence, FrameCorpus, AU_NAMES, NUM_AUS};
use crate::tokenize::{TokenSequence, Vocabulary, END_TOKEN, START_TOKEN};

/// Centroid magnitude below which a single-level channel counts as inactive.
/// A channel whose quantization collapses to one cluster has no "inactive
/// level 0" to compare against, so activity falls back to "is the signal
/// materially above zero".
const ACTIVE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Static,
    Dynamic,
    PooledEmbedding,
}

impl FeatureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FeatureKind::Static => "static",
            FeatureKind::Dynamic => "dynamic",
            FeatureKind::PooledEmbedding => "pooled_embedding",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub video_id: String,
    pub kind: FeatureKind,
    pub values: Vec<f64>,
}

/// Header names for a feature TSV of the given kind. `dim` only matters for
/// pooled embeddings.
pub fn column_names(kind: FeatureKind, dim: usize) -> Vec<String> {
    match kind {
        FeatureKind::Static => {
            let mut cols = Vec::with_capacity(NUM_AUS * 3);
            for stat in ["mean", "dmean", "std"] {
                for au in AU_NAMES {
                    cols.push(format!("{au}_{stat}"));
                }
            }
            cols
        }
        FeatureKind::Dynamic => {
            let mut cols = Vec::with_capacity(NUM_AUS * 5);
            for au in AU_NAMES {
                for stat in [
                    "act_ratio",
                    "act_level",
                    "act_length",
                    "change_ratio",
                    "fast_change_ratio",
                ] {
                    cols.push(format!("{au}_{stat}"));
                }
            }
            cols
        }
        FeatureKind::PooledEmbedding => (0..dim).map(|d| format!("emb_{d}")).collect(),
    }
}

/// 51 values per video: per-AU mean intensity, mean forward difference
/// (x[t+1] − x[t]), and population standard deviation — all means first,
/// then all derivative means, then all stds, each block in AU order.
pub fn static_features(seq: &AuSequence) -> Result<FeatureVector> {
    let n = seq.frames.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "static features need ≥ 2 frames, video {:?} has {n}",
            seq.video_id
        )));
    }
    let mut means = [0.0; NUM_AUS];
    for frame in &seq.frames {
        for (m, v) in means.iter_mut().zip(frame.au.iter()) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n as f64;
    }

    let mut dmeans = [0.0; NUM_AUS];
    for pair in seq.frames.windows(2) {
        for (d, (a, b)) in dmeans.iter_mut().zip(pair[0].au.iter().zip(pair[1].au.iter())) {
            *d += b - a;
        }
    }
    for d in &mut dmeans {
        *d /= (n - 1) as f64;
    }

    let mut stds = [0.0; NUM_AUS];
    for frame in &seq.frames {
        for (s, (v, m)) in stds.iter_mut().zip(frame.au.iter().zip(means.iter())) {
            let diff = v - m;
            *s += diff * diff;
        }
    }
    for s in &mut stds {
        *s = (*s / n as f64).sqrt();
    }

    let mut values = Vec::with_capacity(NUM_AUS * 3);
    values.extend_from_slice(&means);
    values.extend_from_slice(&dmeans);
    values.extend_from_slice(&stds);
    Ok(FeatureVector {
        video_id: seq.video_id.clone(),
        kind: FeatureKind::Static,
        values,
    })
}

/// 1-D k-means quantization of one channel. Returns each frame's level index
/// after ordering cluster centers ascending, plus the ordered centers. The
/// effective k is min(levels, distinct values), so constant channels yield a
/// single level.
fn quantize_channel(values: &[f64], levels: usize) -> (Vec<usize>, Vec<f64>) {
    let mut distinct: Vec<f64> = values.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup();
    let k = levels.min(distinct.len()).max(1);
    if k == 1 {
        return (vec![0; values.len()], vec![distinct[0]]);
    }

    // k-means++ over scalars, fixed seed: quantization is part of the
    // feature definition and must not wobble between runs.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut centers = vec![values[rng.gen_range(0..values.len())]];
    let mut d2: Vec<f64> = values
        .iter()
        .map(|v| (v - centers[0]) * (v - centers[0]))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
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
        let pick = pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap());
        let chosen = values[pick];
        for (i, w) in d2.iter_mut().enumerate() {
            let d = (values[i] - chosen) * (values[i] - chosen);
            if d < *w {
                *w = d;
            }
        }
        centers.push(chosen);
    }

    let assign = |centers: &[f64], v: f64| -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (j, c) in centers.iter().enumerate() {
            let d = (v - c) * (v - c);
            if d < best_d {
                best_d = d;
                best = j;
            }
        }
        best
    };

    for _ in 0..100 {
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for &v in values {
            let j = assign(&centers, v);
            sums[j] += v;
            counts[j] += 1;
        }
        let mut moved = 0.0f64;
        for j in 0..k {
            if counts[j] > 0 {
                let next = sums[j] / counts[j] as f64;
                moved = moved.max((next - centers[j]).abs());
                centers[j] = next;
            }
        }
        if moved < 1e-12 {
            break;
        }
    }

    centers.sort_by(|a, b| a.total_cmp(b));
    centers.dedup();
    let level_of: Vec<usize> = values.iter().map(|&v| assign(&centers, v)).collect();
    (level_of, centers)
}

/// 85 values per video: five activation/change statistics per AU channel,
/// computed on a `levels`-way quantization of each channel's signal.
/// Activation level and the run statistics use the raw intensities; the two
/// change ratios count level-index transitions.
pub fn tron_dynamic_features(seq: &AuSequence, levels: usize) -> Result<FeatureVector> {
    let n = seq.frames.len();
    if n < 2 {
        return Err(Error::InvalidArgument(format!(
            "dynamic features need ≥ 2 frames, video {:?} has {n}",
            seq.video_id
        )));
    }
    if levels == 0 {
        return Err(Error::InvalidArgument("levels must be ≥ 1".into()));
    }

    let mut values = Vec::with_capacity(NUM_AUS * 5);
    let mut channel = vec![0.0; n];
    for au in 0..NUM_AUS {
        for (slot, frame) in channel.iter_mut().zip(&seq.frames) {
            *slot = frame.au[au];
        }
        let (level_of, centers) = quantize_channel(&channel, levels);
        // With a multi-level fit, level 0 is the inactive band. A channel
        // that collapses to one level is active only if it sits above zero.
        let active: Vec<bool> = if centers.len() == 1 {
            vec![centers[0] > ACTIVE_EPS; n]
        } else {
            level_of.iter().map(|&l| l > 0).collect()
        };

        let n_active = active.iter().filter(|&&a| a).count();
        let activation_ratio = n_active as f64 / n as f64;
        let activation_level = if n_active > 0 {
            channel
                .iter()
                .zip(&active)
                .filter(|(_, &a)| a)
                .map(|(v, _)| v)
                .sum::<f64>()
                / n_active as f64
        } else {
            0.0
        };

        let mut runs = 0usize;
        let mut run_frames = 0usize;
        let mut in_run = false;
        for &a in &active {
            if a {
                if !in_run {
                    runs += 1;
                    in_run = true;
                }
                run_frames += 1;
            } else {
                in_run = false;
            }
        }
        let activation_length = if runs > 0 {
            run_frames as f64 / runs as f64
        } else {
            0.0
        };

        let mut changes = 0usize;
        let mut fast_changes = 0usize;
        for pair in level_of.windows(2) {
            if pair[0] != pair[1] {
                changes += 1;
                if pair[0].abs_diff(pair[1]) >= 2 {
                    fast_changes += 1;
                }
            }
        }
        let change_ratio = changes as f64 / (n - 1) as f64;
        let fast_change_ratio = fast_changes as f64 / (n - 1) as f64;

        values.extend_from_slice(&[
            activation_ratio,
            activation_level,
            activation_length,
            change_ratio,
            fast_change_ratio,
        ]);
    }
    Ok(FeatureVector {
        video_id: seq.video_id.clone(),
        kind: FeatureKind::Dynamic,
        values,
    })
}

/// Mean of combined embeddings over the sequence interior — START and END
/// are excluded, UNK participates like any token.
pub fn pooled_embedding_features(
    tokens: &TokenSequence,
    model: &EmbeddingModel,
    vocab: &Vocabulary,
) -> Result<FeatureVector> {
    if vocab.size() != model.v {
        return Err(Error::InvalidArgument(format!(
            "model V = {} does not match vocabulary size {}",
            model.v,
            vocab.size()
        )));
    }
    let interior: Vec<u32> = tokens
        .tokens
        .iter()
        .copied()
        .filter(|&t| t != START_TOKEN && t != END_TOKEN)
        .collect();
    if interior.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "video {:?} has no tokens between START and END",
            tokens.video_id
        )));
    }
    if let Some(&bad) = interior.iter().find(|&&t| t as usize >= model.v) {
        return Err(Error::InvalidArgument(format!(
            "token {bad} out of range for model V = {}",
            model.v
        )));
    }
    let mut values = vec![0.0; model.dim];
    for &t in &interior {
        for (slot, v) in values.iter_mut().zip(model.combined(t as usize)) {
            *slot += v;
        }
    }
    for v in &mut values {
        *v /= interior.len() as f64;
    }
    Ok(FeatureVector {
        video_id: tokens.video_id.clone(),
        kind: FeatureKind::PooledEmbedding,
        values,
    })
}

pub fn static_features_all(corpus: &FrameCorpus, workers: usize) -> Result<Vec<FeatureVector>> {
    if workers.max(1) == 1 {
        corpus.sequences.iter().map(static_features).collect()
    } else {
        corpus.sequences.par_iter().map(static_features).collect()
    }
}

pub fn tron_features_all(
    corpus: &FrameCorpus,
    levels: usize,
    workers: usize,
) -> Result<Vec<FeatureVector>> {
    if workers.max(1) == 1 {
        corpus
            .sequences
            .iter()
            .map(|s| tron_dynamic_features(s, levels))
            .collect()
    } else {
        corpus
            .sequences
            .par_iter()
            .map(|s| tron_dynamic_features(s, levels))
            .collect()
    }
}

pub fn pooled_features_all(
    tokens: &[TokenSequence],
    model: &EmbeddingModel,
    vocab: &Vocabulary,
    workers: usize,
) -> Result<Vec<FeatureVector>> {
    if workers.max(1) == 1 {
        tokens
            .iter()
            .map(|t| pooled_embedding_features(t, model, vocab))
            .collect()
    } else {
        tokens
            .par_iter()
            .map(|t| pooled_embedding_features(t, model, vocab))
            .collect()
    }
}

/// Parsed feature TSV: column names (without the leading `video_id`) and one
/// row of values per video.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub rows: Vec<(String, Vec<f64>)>,
}

/// Writes `video_id<TAB>columns...` with one row per feature vector. All
/// vectors must share one kind and length. Values print in shortest
/// round-trip form, so rereading reproduces them exactly.
pub fn write_features_tsv(features: &[FeatureVector], path: &Path) -> Result<()> {
    use std::io::Write;
    let Some(first) = features.first() else {
        return Err(Error::InvalidArgument(
            "refusing to write an empty feature table".into(),
        ));
    };
    if features
        .iter()
        .any(|f| f.kind != first.kind || f.values.len() != first.values.len())
    {
        return Err(Error::InvalidArgument(
            "feature vectors disagree in kind or length".into(),
        ));
    }
    let columns = column_names(first.kind, first.values.len());
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    write!(out, "video_id").map_err(|e| Error::io(path, e))?;
    for c in &columns {
        write!(out, "\t{c}").map_err(|e| Error::io(path, e))?;
    }
    writeln!(out).map_err(|e| Error::io(path, e))?;
    for f in features {
        write!(out, "{}", f.video_id).map_err(|e| Error::io(path, e))?;
        for v in &f.values {
            write!(out, "\t{v}").map_err(|e| Error::io(path, e))?;
        }
        writeln!(out).map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_features_tsv(path: &Path) -> Result<FeatureTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let label = path.display().to_string();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format(&label, "empty feature file"))?;
    let mut fields = header.split('\t');
    if fields.next() != Some("video_id") {
        return Err(Error::format(&label, "header must start with video_id"));
    }
    let columns: Vec<String> = fields.map(str::to_string).collect();
    if columns.is_empty() {
        return Err(Error::format(&label, "no feature columns"));
    }
    let mut rows = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let video_id = fields.next().unwrap_or_default().to_string();
        if video_id.is_empty() {
            return Err(Error::format(&label, format!("line {}: empty video_id", lineno + 2)));
        }
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| {
                    Error::format(&label, format!("line {}: bad value {f:?}", lineno + 2))
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != columns.len() {
            return Err(Error::format(
                &label,
                format!(
                    "line {}: {} values for {} columns",
                    lineno + 2,
                    values.len(),
                    columns.len()
                ),
            ));
        }
        rows.push((video_id, values));
    }
    Ok(FeatureTable { columns, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::AuFrame;

    fn seq_from_channels(rows: &[[f64; NUM_AUS]]) -> AuSequence {
        AuSequence {
            video_id: "v".into(),
            source_fps: 5.0,
            frames: rows
                .iter()
                .enumerate()
                .map(|(i, au)| AuFrame {
                    timestamp: i as f64 / 5.0,
                    confidence: 1.0,
                    au: *au,
                })
                .collect(),
        }
    }

    fn seq_single_channel(values: &[f64]) -> AuSequence {
        let rows: Vec<[f64; NUM_AUS]> = values
            .iter()
            .map(|&v| {
                let mut au = [0.0; NUM_AUS];
                au[0] = v;
                au
            })
            .collect();
        seq_from_channels(&rows)
    }

    #[test]
    fn static_constant_channel() {
        let seq = seq_single_channel(&[2.0, 2.0, 2.0]);
        let f = static_features(&seq).unwrap();
        assert_eq!(f.values.len(), 51);
        assert_eq!(f.values[0], 2.0); // AU01 mean
        assert_eq!(f.values[NUM_AUS], 0.0); // AU01 dmean
        assert_eq!(f.values[2 * NUM_AUS], 0.0); // AU01 std
    }

    #[test]
    fn static_hand_arithmetic() {
        let seq = seq_single_channel(&[0.0, 1.0, 2.0, 3.0]);
        let f = static_features(&seq).unwrap();
        assert_eq!(f.values[0], 1.5);
        assert_eq!(f.values[NUM_AUS], 1.0);
        assert!((f.values[2 * NUM_AUS] - 1.25f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn static_all_zero() {
        let seq = seq_single_channel(&[0.0, 0.0]);
        let f = static_features(&seq).unwrap();
        assert_eq!(f.values, vec![0.0; 51]);
    }

    #[test]
    fn static_needs_two_frames() {
        assert!(static_features(&seq_single_channel(&[1.0])).is_err());
    }

    #[test]
    fn static_reversal_flips_derivative_mean() {
        let seq = seq_single_channel(&[0.0, 0.5, 2.0, 3.5]);
        let mut rev = seq.clone();
        rev.frames.reverse();
        for (i, f) in rev.frames.iter_mut().enumerate() {
            f.timestamp = i as f64 / 5.0;
        }
        let a = static_features(&seq).unwrap();
        let b = static_features(&rev).unwrap();
        assert_eq!(a.values[0], b.values[0]); // mean unchanged
        assert_eq!(a.values[NUM_AUS], -b.values[NUM_AUS]); // dmean flips
        assert_eq!(a.values[2 * NUM_AUS], b.values[2 * NUM_AUS]); // std unchanged
    }

    #[test]
    fn tron_all_zero_channel() {
        let seq = seq_single_channel(&[0.0, 0.0, 0.0, 0.0]);
        let f = tron_dynamic_features(&seq, 4).unwrap();
        assert_eq!(f.values, vec![0.0; 85]);
    }

    #[test]
    fn tron_alternating_channel() {
        let seq = seq_single_channel(&[0.0, 5.0, 0.0, 5.0, 0.0, 5.0]);
        let f = tron_dynamic_features(&seq, 2).unwrap();
        let au01 = &f.values[0..5];
        assert_eq!(au01, &[0.5, 5.0, 1.0, 1.0, 0.0]);
    }

    #[test]
    fn tron_constant_active_channel() {
        let t = 7;
        let seq = seq_single_channel(&vec![4.0; t]);
        let f = tron_dynamic_features(&seq, 4).unwrap();
        let au01 = &f.values[0..5];
        assert_eq!(au01, &[1.0, 4.0, t as f64, 0.0, 0.0]);
    }

    #[test]
    fn tron_fast_change_needs_two_level_jump() {
        // Three well-separated bands; jumps 0→2 are "fast".
        let seq = seq_single_channel(&[0.0, 2.5, 5.0, 0.0, 5.0, 2.5]);
        let f = tron_dynamic_features(&seq, 3).unwrap();
        let change = f.values[3];
        let fast = f.values[4];
        assert_eq!(change, 1.0); // every adjacent pair changes level
        assert_eq!(fast, 2.0 / 5.0); // 5.0→0.0 and 0.0→5.0
        assert!(fast <= change);
    }

    #[test]
    fn tron_ratios_bounded() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let vals: Vec<f64> = (0..30).map(|_| rng.gen::<f64>() * 5.0).collect();
            let f = tron_dynamic_features(&seq_single_channel(&vals), 4).unwrap();
            for au in 0..NUM_AUS {
                let s = &f.values[au * 5..au * 5 + 5];
                assert!((0.0..=1.0).contains(&s[0]), "ratio {}", s[0]);
                assert!((0.0..=1.0).contains(&s[3]));
                assert!((0.0..=1.0).contains(&s[4]));
                assert!(s[4] <= s[3], "fast {} > change {}", s[4], s[3]);
                assert!(s.iter().all(|v| v.is_finite()));
            }
        }
    }

    fn toy_model(v: usize, dim: usize) -> EmbeddingModel {
        let mut m = EmbeddingModel::init(v, dim, 3);
        m.w_ctx = vec![0.0; v * dim];
        m
    }

    fn toks(tokens: Vec<u32>) -> TokenSequence {
        TokenSequence {
            video_id: "v".into(),
            tokens,
        }
    }

    #[test]
    fn pooled_identical_tokens() {
        let vocab = crate::tokenize::build_vocabulary(&[1, 1], 1, 1.75);
        let model = toy_model(5, 3);
        let f = pooled_embedding_features(&toks(vec![0, 3, 3, 3, 1]), &model, &vocab).unwrap();
        assert_eq!(f.values, model.combined(3));
    }

    #[test]
    fn pooled_opposite_vectors_cancel() {
        let vocab = crate::tokenize::build_vocabulary(&[1, 1], 1, 1.75);
        let mut model = toy_model(5, 2);
        model.w_main[3 * 2] = 0.7;
        model.w_main[3 * 2 + 1] = -0.4;
        model.w_main[4 * 2] = -0.7;
        model.w_main[4 * 2 + 1] = 0.4;
        let f = pooled_embedding_features(&toks(vec![0, 3, 4, 1]), &model, &vocab).unwrap();
        assert!(f.values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn pooled_matches_scalar_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        let vocab = crate::tokenize::build_vocabulary(&[1, 1, 1, 1], 1, 1.75);
        let model = EmbeddingModel::init(7, 6, 12);
        let mut tokens = vec![0u32];
        tokens.extend((0..25).map(|_| rng.gen_range(2..7u32)));
        tokens.push(1);
        let f = pooled_embedding_features(&toks(tokens.clone()), &model, &vocab).unwrap();

        let interior = &tokens[1..tokens.len() - 1];
        for d in 0..6 {
            let mut acc = 0.0;
            for &t in interior {
                acc += model.w_main[t as usize * 6 + d] + model.w_ctx[t as usize * 6 + d];
            }
            acc /= interior.len() as f64;
            assert!((f.values[d] - acc).abs() <= 1e-12);
        }
    }

    #[test]
    fn pooled_rejects_empty_interior() {
        let vocab = crate::tokenize::build_vocabulary(&[], 1, 1.75);
        let model = toy_model(3, 2);
        assert!(pooled_embedding_features(&toks(vec![0, 1]), &model, &vocab).is_err());
    }

    #[test]
    fn unk_counts_toward_pooled_mean() {
        let vocab = crate::tokenize::build_vocabulary(&[1], 1, 1.75);
        let mut model = toy_model(4, 2);
        model.w_main = vec![9.0, 9.0, 9.0, 9.0, 1.0, 0.0, 3.0, 0.0];
        let f = pooled_embedding_features(&toks(vec![0, 2, 3, 1]), &model, &vocab).unwrap();
        assert_eq!(f.values, vec![2.0, 0.0]); // mean of UNK (1,0) and c0 (3,0)
    }

    #[test]
    fn tsv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        let seqs = vec![
            seq_single_channel(&[0.0, 1.0, 2.0, 3.0]),
            seq_single_channel(&[5.0, 4.0, 3.0, 2.0]),
        ];
        let mut features: Vec<FeatureVector> = seqs
            .iter()
            .map(|s| static_features(s).unwrap())
            .collect();
        features[1].video_id = "w".into();
        write_features_tsv(&features, &path).unwrap();
        let table = read_features_tsv(&path).unwrap();
        assert_eq!(table.columns.len(), 51);
        assert_eq!(table.columns[0], "AU01_mean");
        assert_eq!(table.columns[NUM_AUS], "AU01_dmean");
        assert_eq!(table.rows.len(), 2);
        assert_eq!(table.rows[0].0, "v");
        assert_eq!(table.rows[0].1, features[0].values);
        assert_eq!(table.rows[1].1, features[1].values);
    }

    #[test]
    fn tsv_write_rejects_mixed_kinds() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        let a = static_features(&seq_single_channel(&[0.0, 1.0])).unwrap();
        let b = tron_dynamic_features(&seq_single_channel(&[0.0, 1.0]), 2).unwrap();
        assert!(write_features_tsv(&[a, b], &path).is_err());
    }

    #[test]
    fn tsv_read_rejects_ragged_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.tsv");
        std::fs::write(&path, "video_id\ta\tb\nv\t1.0\n").unwrap();
        assert!(read_features_tsv(&path).is_err());
    }

    #[test]
    fn workers_do_not_change_features() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let sequences: Vec<AuSequence> = (0..5)
            .map(|i| {
                let mut s = seq_single_channel(
                    &(0..30).map(|_| rng.gen::<f64>() * 5.0).collect::<Vec<_>>(),
                );
                s.video_id = format!("v{i}");
                s
            })
            .collect();
        let corpus = FrameCorpus { sequences };
        assert_eq!(
            static_features_all(&corpus, 1).unwrap(),
            static_features_all(&corpus, 4).unwrap()
        );
        assert_eq!(
            tron_features_all(&corpus, 4, 1).unwrap(),
            tron_features_all(&corpus, 4, 4).unwrap()
        );
    }
}
