//! From frames to tokens: assign each frame to its nearest centroid, relabel
//! rare-cluster and far-from-centroid frames as UNK, and wrap every video in
//! START/END markers.

use std::collections::HashMap;
use std::path::Path;

use crate::cluster::{assign, assign_all, Codebook};
use crate::error::{Error, Result};
use crate::ingest::{AuSequence, FrameCorpus};
use crate::store::{ArtifactReader, ArtifactWriter};

pub const START_TOKEN: u32 = 0;
pub const END_TOKEN: u32 = 1;
pub const UNK_TOKEN: u32 = 2;

/// Cluster ids recorded for the specials in the vocabulary file, which
/// otherwise stores real (non-negative) cluster ids.
const SPECIAL_CLUSTER_IDS: [i64; 3] = [-1, -2, -3];

const VOCAB_MAGIC: &[u8; 4] = b"AUVB";
pub(crate) const VOCAB_VERSION: u32 = 1;
const TOKENS_MAGIC: &[u8; 4] = b"AUTK";
pub(crate) const TOKENS_VERSION: u32 = 1;

/// A retained cluster: its id in the codebook, its token id, and how many
/// frames of the reference corpus landed on it.
#[derive(Debug, Clone, PartialEq)]
pub struct VocabEntry {
    pub cluster_id: u32,
    pub token_id: u32,
    pub count: u64,
}

/// Token ids 0..2 are START/END/UNK; retained clusters get 3.. in ascending
/// cluster-id order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    retained: Vec<VocabEntry>,
    by_cluster: HashMap<u32, u32>,
    pub min_count: u32,
    pub dist_threshold: f64,
}

impl Vocabulary {
    /// Total token count V, specials included.
    pub fn size(&self) -> usize {
        3 + self.retained.len()
    }

    pub fn entries(&self) -> &[VocabEntry] {
        &self.retained
    }

    pub fn token_for_cluster(&self, cluster_id: u32) -> Option<u32> {
        self.by_cluster.get(&cluster_id).copied()
    }

    pub fn cluster_for_token(&self, token_id: u32) -> Option<u32> {
        if token_id < 3 {
            return None;
        }
        self.retained
            .get(token_id as usize - 3)
            .map(|e| e.cluster_id)
    }

    /// Printable name: `<START>`, `<END>`, `<UNK>`, or `c<cluster_id>`.
    pub fn token_name(&self, token_id: u32) -> Option<String> {
        match token_id {
            START_TOKEN => Some("<START>".into()),
            END_TOKEN => Some("<END>".into()),
            UNK_TOKEN => Some("<UNK>".into()),
            t => self.cluster_for_token(t).map(|c| format!("c{c}")),
        }
    }

    pub fn token_by_name(&self, name: &str) -> Option<u32> {
        match name {
            "<START>" => Some(START_TOKEN),
            "<END>" => Some(END_TOKEN),
            "<UNK>" => Some(UNK_TOKEN),
            _ => {
                let cluster: u32 = name.strip_prefix('c')?.parse().ok()?;
                self.token_for_cluster(cluster)
            }
        }
    }

    fn from_entries(retained: Vec<VocabEntry>, min_count: u32, dist_threshold: f64) -> Self {
        let by_cluster = retained
            .iter()
            .map(|e| (e.cluster_id, e.token_id))
            .collect();
        Vocabulary {
            retained,
            by_cluster,
            min_count,
            dist_threshold,
        }
    }
}

/// One tokenized video: `[START, frame tokens..., END]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenSequence {
    pub video_id: String,
    pub tokens: Vec<u32>,
}

/// Raw nearest-centroid occupancy over the corpus, indexed by cluster id.
/// This is counted before any UNK relabeling, so it sums to the frame count.
pub fn count_cluster_frequencies(
    corpus: &FrameCorpus,
    codebook: &Codebook,
    workers: usize,
) -> Vec<u64> {
    let frames: Vec<_> = corpus.frames().map(|f| f.au).collect();
    let mut counts = vec![0u64; codebook.k];
    for (cluster, _) in assign_all(&frames, codebook, workers) {
        counts[cluster as usize] += 1;
    }
    counts
}

/// Clusters seen at least `min_count` times become vocabulary entries;
/// the rest will tokenize to UNK. Strictly-below is dropped, so a count of
/// exactly `min_count` stays in.
pub fn build_vocabulary(counts: &[u64], min_count: u32, dist_threshold: f64) -> Vocabulary {
    let mut retained = Vec::new();
    for (cluster_id, &count) in counts.iter().enumerate() {
        if count >= min_count as u64 {
            retained.push(VocabEntry {
                cluster_id: cluster_id as u32,
                token_id: 3 + retained.len() as u32,
                count,
            });
        }
    }
    Vocabulary::from_entries(retained, min_count, dist_threshold)
}

/// Tokenizes one sequence. A frame becomes UNK when its nearest cluster was
/// dropped from the vocabulary or its distance to that centroid exceeds
/// `dist_threshold` (strictly — a frame at exactly the threshold keeps its
/// token). The two rules share one UNK symbol, so their order is moot.
pub fn tokenize_sequence(
    seq: &AuSequence,
    codebook: &Codebook,
    vocab: &Vocabulary,
) -> TokenSequence {
    let mut tokens = Vec::with_capacity(seq.frames.len() + 2);
    tokens.push(START_TOKEN);
    for frame in &seq.frames {
        let (cluster, distance) = assign(&frame.au, codebook);
        let token = match vocab.token_for_cluster(cluster) {
            Some(t) if distance <= vocab.dist_threshold => t,
            _ => UNK_TOKEN,
        };
        tokens.push(token);
    }
    tokens.push(END_TOKEN);
    TokenSequence {
        video_id: seq.video_id.clone(),
        tokens,
    }
}

/// Tokenizes every sequence, preserving corpus order. Sequences are
/// independent, so the output does not depend on the worker count.
pub fn tokenize_corpus(
    corpus: &FrameCorpus,
    codebook: &Codebook,
    vocab: &Vocabulary,
    workers: usize,
) -> Vec<TokenSequence> {
    use rayon::prelude::*;
    if workers.max(1) == 1 || corpus.sequences.len() < 2 {
        corpus
            .sequences
            .iter()
            .map(|s| tokenize_sequence(s, codebook, vocab))
            .collect()
    } else {
        corpus
            .sequences
            .par_iter()
            .map(|s| tokenize_sequence(s, codebook, vocab))
            .collect()
    }
}

pub fn write_vocabulary(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let mut w = ArtifactWriter::create(path)?;
    w.write_header(VOCAB_MAGIC, VOCAB_VERSION)?;
    w.write_u32(vocab.size() as u32)?;
    w.write_u32(vocab.min_count)?;
    w.write_f64(vocab.dist_threshold)?;
    for (token_id, cluster_id) in SPECIAL_CLUSTER_IDS.iter().enumerate() {
        w.write_u32(token_id as u32)?;
        w.write_i64(*cluster_id)?;
        w.write_u64(0)?; // specials are markers, not clusters; no raw count
    }
    for e in &vocab.retained {
        w.write_u32(e.token_id)?;
        w.write_i64(e.cluster_id as i64)?;
        w.write_u64(e.count)?;
    }
    w.finish()
}

pub fn read_vocabulary(path: &Path) -> Result<Vocabulary> {
    let mut r = ArtifactReader::open(path)?;
    r.expect_header(VOCAB_MAGIC, VOCAB_VERSION)?;
    let v = r.read_u32()? as usize;
    if v < 3 {
        return Err(Error::format(r.label(), format!("vocabulary size {v} < 3")));
    }
    let min_count = r.read_u32()?;
    let dist_threshold = r.read_f64()?;
    let mut retained = Vec::with_capacity(v - 3);
    let mut last_cluster: Option<u32> = None;
    for expect_token in 0..v as u32 {
        let token_id = r.read_u32()?;
        let cluster_id = r.read_i64()?;
        let count = r.read_u64()?;
        if token_id != expect_token {
            return Err(Error::format(
                r.label(),
                format!("token ids not contiguous: found {token_id}, expected {expect_token}"),
            ));
        }
        if expect_token < 3 {
            if cluster_id != SPECIAL_CLUSTER_IDS[expect_token as usize] {
                return Err(Error::format(
                    r.label(),
                    format!("special token {expect_token} has cluster id {cluster_id}"),
                ));
            }
            continue;
        }
        let cluster_id = u32::try_from(cluster_id).map_err(|_| {
            Error::format(
                r.label(),
                format!("negative cluster id {cluster_id} on non-special token {token_id}"),
            )
        })?;
        if last_cluster.is_some_and(|prev| cluster_id <= prev) {
            return Err(Error::format(r.label(), "cluster ids not ascending"));
        }
        if count < min_count as u64 {
            return Err(Error::format(
                r.label(),
                format!("cluster {cluster_id} retained with count {count} < min_count {min_count}"),
            ));
        }
        last_cluster = Some(cluster_id);
        retained.push(VocabEntry {
            cluster_id,
            token_id,
            count,
        });
    }
    r.expect_eof()?;
    Ok(Vocabulary::from_entries(retained, min_count, dist_threshold))
}

pub fn write_tokens(sequences: &[TokenSequence], path: &Path) -> Result<()> {
    let mut w = ArtifactWriter::create(path)?;
    w.write_header(TOKENS_MAGIC, TOKENS_VERSION)?;
    w.write_u64(sequences.len() as u64)?;
    for seq in sequences {
        w.write_string(&seq.video_id)?;
        w.write_u64(seq.tokens.len() as u64)?;
        for &t in &seq.tokens {
            w.write_u32(t)?;
        }
    }
    w.finish()
}

pub fn read_tokens(path: &Path) -> Result<Vec<TokenSequence>> {
    let mut r = ArtifactReader::open(path)?;
    r.expect_header(TOKENS_MAGIC, TOKENS_VERSION)?;
    let n = r.read_u64()? as usize;
    let mut sequences = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let video_id = r.read_string()?;
        let len = r.read_u64()? as usize;
        if len < 2 {
            return Err(Error::format(
                r.label(),
                format!("token sequence {video_id:?} has length {len} < 2"),
            ));
        }
        let mut tokens = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            tokens.push(r.read_u32()?);
        }
        if tokens[0] != START_TOKEN || *tokens.last().unwrap() != END_TOKEN {
            return Err(Error::format(
                r.label(),
                format!("token sequence {video_id:?} is not START..END delimited"),
            ));
        }
        sequences.push(TokenSequence { video_id, tokens });
    }
    r.expect_eof()?;
    Ok(sequences)
}
