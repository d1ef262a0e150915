//! OpenFace CSV ingestion: parse per-frame AU intensities, drop low-confidence
//! frames, decimate to a target frame rate, and persist the result as a
//! binary frame corpus.

use std::collections::HashSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::store::{ArtifactReader, ArtifactWriter};

/// Number of action-unit intensity channels per frame.
pub const NUM_AUS: usize = 17;

/// Fixed channel order. Every `[f64; NUM_AUS]` in the crate uses this order.
pub const AU_NAMES: [&str; NUM_AUS] = [
    "AU01", "AU02", "AU04", "AU05", "AU06", "AU07", "AU09", "AU10", "AU12", "AU14", "AU15",
    "AU17", "AU20", "AU23", "AU25", "AU26", "AU45",
];

const CORPUS_MAGIC: &[u8; 4] = b"AUFC";
pub(crate) const CORPUS_VERSION: u32 = 1;

/// Frame rate assumed when a sequence is too short to infer one from
/// timestamps (fewer than two frames).
const FALLBACK_FPS: f64 = 5.0;

/// One video frame: when it happened, how sure the tracker was, and the 17
/// AU intensities in `AU_NAMES` order, each in [0,5].
#[derive(Debug, Clone, PartialEq)]
pub struct AuFrame {
    pub timestamp: f64,
    pub confidence: f64,
    pub au: [f64; NUM_AUS],
}

/// All retained frames of one video, ordered by strictly increasing
/// timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct AuSequence {
    pub video_id: String,
    pub source_fps: f64,
    pub frames: Vec<AuFrame>,
}

/// A set of sequences with distinct video ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameCorpus {
    pub sequences: Vec<AuSequence>,
}

impl FrameCorpus {
    pub fn total_frames(&self) -> usize {
        self.sequences.iter().map(|s| s.frames.len()).sum()
    }

    /// Iterator over every frame in corpus order.
    pub fn frames(&self) -> impl Iterator<Item = &AuFrame> {
        self.sequences.iter().flat_map(|s| s.frames.iter())
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for seq in &self.sequences {
            if seq.video_id.is_empty() {
                return Err(Error::InvalidArgument("empty video_id in corpus".into()));
            }
            if !seen.insert(seq.video_id.as_str()) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate video_id {:?} in corpus",
                    seq.video_id
                )));
            }
        }
        Ok(())
    }
}

/// Result of parsing one CSV file. `clamped` counts cells that were pulled
/// back into range (AU intensities into [0,5], confidence into [0,1]).
#[derive(Debug, Clone)]
pub struct ParseOutcome {
    pub sequence: AuSequence,
    pub clamped: usize,
}

/// Parses OpenFace per-frame CSV output.
///
/// Requires `timestamp`, `confidence`, `success` and the 17 `AUxx_r` columns;
/// header names are whitespace-trimmed before matching (OpenFace pads each
/// name with a space). Rows with `success` != 1 are dropped. Out-of-range
/// values are clamped and counted rather than rejected, since OpenFace
/// occasionally emits intensities slightly above 5.
pub fn parse_openface_csv(bytes: &[u8], video_id: &str) -> Result<ParseOutcome> {
    if bytes.iter().all(|b| b.is_ascii_whitespace()) {
        return Err(Error::format(video_id, "empty CSV file"));
    }
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let headers = reader
        .headers()
        .map_err(|e| Error::format(video_id, format!("bad CSV header: {e}")))?
        .clone();

    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::format(video_id, format!("missing required column {name:?}")))
    };
    let ts_col = find("timestamp")?;
    let conf_col = find("confidence")?;
    let success_col = find("success")?;
    let mut au_cols = [0usize; NUM_AUS];
    for (slot, name) in au_cols.iter_mut().zip(AU_NAMES.iter()) {
        *slot = find(&format!("{name}_r"))?;
    }

    let mut clamped = 0usize;
    let mut frames = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record =
            record.map_err(|e| Error::format(video_id, format!("data row {row}: {e}")))?;
        let cell = |col: usize, name: &str| -> Result<f64> {
            let raw = record.get(col).ok_or_else(|| {
                Error::format(video_id, format!("data row {row}: missing {name} cell"))
            })?;
            let value: f64 = raw.parse().map_err(|_| {
                Error::format(
                    video_id,
                    format!("data row {row}: {name} value {raw:?} is not a number"),
                )
            })?;
            if !value.is_finite() {
                return Err(Error::format(
                    video_id,
                    format!("data row {row}: {name} value {raw:?} is not finite"),
                ));
            }
            Ok(value)
        };

        if cell(success_col, "success")? != 1.0 {
            continue;
        }
        let timestamp = cell(ts_col, "timestamp")?;
        let mut confidence = cell(conf_col, "confidence")?;
        if !(0.0..=1.0).contains(&confidence) {
            confidence = confidence.clamp(0.0, 1.0);
            clamped += 1;
        }
        let mut au = [0.0; NUM_AUS];
        for (i, slot) in au.iter_mut().enumerate() {
            let v = cell(au_cols[i], &format!("{}_r", AU_NAMES[i]))?;
            if (0.0..=5.0).contains(&v) {
                *slot = v;
            } else {
                *slot = v.clamp(0.0, 5.0);
                clamped += 1;
            }
        }
        if let Some(prev) = frames.last() {
            let prev: &AuFrame = prev;
            if timestamp <= prev.timestamp {
                return Err(Error::format(
                    video_id,
                    format!("data row {row}: timestamp {timestamp} does not increase"),
                ));
            }
        }
        frames.push(AuFrame {
            timestamp,
            confidence,
            au,
        });
    }

    let source_fps = infer_fps(&frames);
    Ok(ParseOutcome {
        sequence: AuSequence {
            video_id: video_id.to_string(),
            source_fps,
            frames,
        },
        clamped,
    })
}

/// Median of consecutive timestamp gaps, inverted. OpenFace does not record
/// the frame rate, and the median shrugs off gaps left by dropped frames.
fn infer_fps(frames: &[AuFrame]) -> f64 {
    if frames.len() < 2 {
        return FALLBACK_FPS;
    }
    let mut deltas: Vec<f64> = frames
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .collect();
    deltas.sort_by(|a, b| a.total_cmp(b));
    let mid = deltas.len() / 2;
    let median = if deltas.len() % 2 == 1 {
        deltas[mid]
    } else {
        0.5 * (deltas[mid - 1] + deltas[mid])
    };
    if median > 0.0 {
        1.0 / median
    } else {
        FALLBACK_FPS
    }
}

/// Keeps exactly the frames with confidence ≥ `min_confidence` (the
/// threshold itself survives; only strictly-below goes).
pub fn filter_confidence(seq: &AuSequence, min_confidence: f64) -> AuSequence {
    AuSequence {
        video_id: seq.video_id.clone(),
        source_fps: seq.source_fps,
        frames: seq
            .frames
            .iter()
            .filter(|f| f.confidence >= min_confidence)
            .cloned()
            .collect(),
    }
}

/// Decimates to roughly `target_fps` by keeping every `s`-th frame,
/// `s = round(source_fps / target_fps)`. Real frames only — no resampling.
/// The output fps is `source_fps / s`, which is close to but not necessarily
/// equal to the target (24 → 5 gives stride 5 and 4.8 fps out).
pub fn downsample(seq: &AuSequence, target_fps: f64) -> Result<AuSequence> {
    if target_fps <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "target fps must be positive, got {target_fps}"
        )));
    }
    if target_fps > seq.source_fps {
        return Err(Error::InvalidArgument(format!(
            "target fps {target_fps} exceeds source fps {} for video {:?}",
            seq.source_fps, seq.video_id
        )));
    }
    let stride = (seq.source_fps / target_fps).round().max(1.0) as usize;
    Ok(AuSequence {
        video_id: seq.video_id.clone(),
        source_fps: seq.source_fps / stride as f64,
        frames: seq.frames.iter().step_by(stride).cloned().collect(),
    })
}

pub fn write_corpus(corpus: &FrameCorpus, path: &Path) -> Result<()> {
    corpus.check_unique_ids()?;
    let mut w = ArtifactWriter::create(path)?;
    w.write_header(CORPUS_MAGIC, CORPUS_VERSION)?;
    w.write_u64(corpus.sequences.len() as u64)?;
    for seq in &corpus.sequences {
        w.write_string(&seq.video_id)?;
        w.write_f64(seq.source_fps)?;
        w.write_u64(seq.frames.len() as u64)?;
        for frame in &seq.frames {
            w.write_f64(frame.timestamp)?;
            w.write_f64(frame.confidence)?;
            for v in &frame.au {
                w.write_f64(*v)?;
            }
        }
    }
    w.finish()
}

pub fn read_corpus(path: &Path) -> Result<FrameCorpus> {
    let mut r = ArtifactReader::open(path)?;
    r.expect_header(CORPUS_MAGIC, CORPUS_VERSION)?;
    let n_sequences = r.read_u64()? as usize;
    let mut sequences = Vec::with_capacity(n_sequences.min(1 << 20));
    for _ in 0..n_sequences {
        let video_id = r.read_string()?;
        let source_fps = r.read_f64()?;
        let n_frames = r.read_u64()? as usize;
        let mut frames = Vec::with_capacity(n_frames.min(1 << 24));
        for _ in 0..n_frames {
            let timestamp = r.read_f64()?;
            let confidence = r.read_f64()?;
            let values = r.read_f64_vec(NUM_AUS)?;
            let mut au = [0.0; NUM_AUS];
            au.copy_from_slice(&values);
            frames.push(AuFrame {
                timestamp,
                confidence,
                au,
            });
        }
        sequences.push(AuSequence {
            video_id,
            source_fps,
            frames,
        });
    }
    r.expect_eof()?;
    let corpus = FrameCorpus { sequences };
    corpus
        .check_unique_ids()
        .map_err(|e| Error::format(path.display().to_string(), e.to_string()))?;
    Ok(corpus)
}
