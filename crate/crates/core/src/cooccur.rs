//! Sparse symmetric co-occurrence counts over token sequences.
//!
//! Each unordered token pair within `window` positions of each other (inside
//! one sequence — windows never cross videos) accumulates weight 1/distance,
//! or 1 in uniform mode. Cells are stored once with i ≤ j and mirrored on
//! read.

use std::collections::HashMap;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::store::{ArtifactReader, ArtifactWriter};
use crate::tokenize::TokenSequence;

const TABLE_MAGIC: &[u8; 4] = b"AUCO";
pub(crate) const TABLE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Weighting {
    /// GloVe-style 1/d per pair at distance d.
    InverseDistance,
    /// Flat 1 per pair inside the window.
    Uniform,
}

impl Weighting {
    fn code(self) -> u8 {
        match self {
            Weighting::InverseDistance => 0,
            Weighting::Uniform => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Weighting::InverseDistance),
            1 => Some(Weighting::Uniform),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct CooccurrenceTable {
    pub v: u32,
    pub window: u32,
    pub weighting: Weighting,
    cells: HashMap<(u32, u32), f64>,
}

impl CooccurrenceTable {
    pub fn new(v: u32, window: u32, weighting: Weighting) -> Self {
        CooccurrenceTable {
            v,
            window,
            weighting,
            cells: HashMap::new(),
        }
    }

    /// Adds every in-window pair of `seq` to the table. Pairs are visited
    /// left-to-right (each position against the next `window` positions), so
    /// a given sequence order always produces identical floating-point sums.
    pub fn accumulate(&mut self, seq: &TokenSequence) -> Result<()> {
        let tokens = &seq.tokens;
        if let Some(&bad) = tokens.iter().find(|&&t| t >= self.v) {
            return Err(Error::InvalidArgument(format!(
                "token {bad} out of range for vocabulary size {} in {:?}",
                self.v, seq.video_id
            )));
        }
        let window = self.window as usize;
        for p in 0..tokens.len() {
            let hi = tokens.len().min(p + window + 1);
            for q in p + 1..hi {
                let w = match self.weighting {
                    Weighting::InverseDistance => 1.0 / (q - p) as f64,
                    Weighting::Uniform => 1.0,
                };
                let key = if tokens[p] <= tokens[q] {
                    (tokens[p], tokens[q])
                } else {
                    (tokens[q], tokens[p])
                };
                *self.cells.entry(key).or_insert(0.0) += w;
            }
        }
        Ok(())
    }

    /// Writes one cell directly (symmetric key), replacing any prior value.
    /// Accumulation from sequences is the normal path; this exists for
    /// synthetic tables with planted weights.
    pub fn set_cell(&mut self, i: u32, j: u32, weight: f64) -> Result<()> {
        if i >= self.v || j >= self.v {
            return Err(Error::InvalidArgument(format!(
                "cell ({i},{j}) out of range for vocabulary size {}",
                self.v
            )));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "cell weight must be positive and finite, got {weight}"
            )));
        }
        let key = if i <= j { (i, j) } else { (j, i) };
        self.cells.insert(key, weight);
        Ok(())
    }

    /// Symmetric lookup; absent cells read 0.
    pub fn cell(&self, i: u32, j: u32) -> f64 {
        let key = if i <= j { (i, j) } else { (j, i) };
        self.cells.get(&key).copied().unwrap_or(0.0)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Sum over stored cells — one term per unordered pair accumulation.
    pub fn total_weight(&self) -> f64 {
        self.cells.values().sum()
    }

    /// Stored cells in (i, j) order.
    pub fn cells_sorted(&self) -> Vec<(u32, u32, f64)> {
        let mut out: Vec<(u32, u32, f64)> =
            self.cells.iter().map(|(&(i, j), &w)| (i, j, w)).collect();
        out.sort_by_key(|&(i, j, _)| (i, j));
        out
    }
}

/// Cell-wise sum of tables with identical (V, window, weighting).
///
/// In deterministic mode every contribution is sorted by (i, j, weight bits)
/// before summing, so any permutation of the input tables gives bit-identical
/// results. The plain mode folds tables in the order given.
pub fn merge(tables: Vec<CooccurrenceTable>, deterministic: bool) -> Result<CooccurrenceTable> {
    let Some(first) = tables.first() else {
        return Err(Error::InvalidArgument("cannot merge zero tables".into()));
    };
    let (v, window, weighting) = (first.v, first.window, first.weighting);
    if tables
        .iter()
        .any(|t| t.v != v || t.window != window || t.weighting != weighting)
    {
        return Err(Error::InvalidArgument(
            "cannot merge tables with differing V/window/weighting".into(),
        ));
    }

    let mut out = CooccurrenceTable::new(v, window, weighting);
    if deterministic {
        let mut contributions: Vec<(u32, u32, f64)> = tables
            .iter()
            .flat_map(|t| t.cells.iter().map(|(&(i, j), &w)| (i, j, w)))
            .collect();
        contributions.sort_by_key(|&(i, j, w)| (i, j, w.to_bits()));
        for (i, j, w) in contributions {
            *out.cells.entry((i, j)).or_insert(0.0) += w;
        }
    } else {
        for t in tables {
            for (key, w) in t.cells {
                *out.cells.entry(key).or_insert(0.0) += w;
            }
        }
    }
    Ok(out)
}

/// Builds the table for a whole token corpus. Sequences are split into
/// `workers` contiguous shards accumulated independently, then folded in
/// shard order — so each worker count is deterministic, and workers = 1 is
/// exactly the sequential single-pass accumulation.
pub fn build_table(
    sequences: &[TokenSequence],
    v: u32,
    window: u32,
    weighting: Weighting,
    workers: usize,
) -> Result<CooccurrenceTable> {
    let workers = workers.max(1);
    if workers == 1 || sequences.len() < 2 {
        let mut table = CooccurrenceTable::new(v, window, weighting);
        for seq in sequences {
            table.accumulate(seq)?;
        }
        return Ok(table);
    }
    let chunk = sequences.len().div_ceil(workers);
    let shards: Vec<Result<CooccurrenceTable>> = sequences
        .par_chunks(chunk)
        .map(|shard| {
            let mut table = CooccurrenceTable::new(v, window, weighting);
            for seq in shard {
                table.accumulate(seq)?;
            }
            Ok(table)
        })
        .collect();
    let mut out = CooccurrenceTable::new(v, window, weighting);
    for shard in shards {
        let shard = shard?;
        for (key, w) in shard.cells {
            *out.cells.entry(key).or_insert(0.0) += w;
        }
    }
    Ok(out)
}

pub fn write_table(table: &CooccurrenceTable, path: &Path) -> Result<()> {
    let mut w = ArtifactWriter::create(path)?;
    w.write_header(TABLE_MAGIC, TABLE_VERSION)?;
    w.write_u32(table.v)?;
    w.write_u32(table.window)?;
    w.write_u8(table.weighting.code())?;
    let cells = table.cells_sorted();
    w.write_u64(cells.len() as u64)?;
    for (i, j, weight) in cells {
        w.write_u32(i)?;
        w.write_u32(j)?;
        w.write_f64(weight)?;
    }
    w.finish()
}

pub fn read_table(path: &Path) -> Result<CooccurrenceTable> {
    let mut r = ArtifactReader::open(path)?;
    r.expect_header(TABLE_MAGIC, TABLE_VERSION)?;
    let v = r.read_u32()?;
    let window = r.read_u32()?;
    let weighting = Weighting::from_code(r.read_u8()?)
        .ok_or_else(|| Error::format(r.label(), "unknown weighting code"))?;
    let n = r.read_u64()? as usize;
    let mut table = CooccurrenceTable::new(v, window, weighting);
    table.cells.reserve(n.min(1 << 24));
    let mut last: Option<(u32, u32)> = None;
    for _ in 0..n {
        let i = r.read_u32()?;
        let j = r.read_u32()?;
        let weight = r.read_f64()?;
        if i > j || j >= v {
            return Err(Error::format(
                r.label(),
                format!("cell ({i},{j}) violates i ≤ j < V = {v}"),
            ));
        }
        if last.is_some_and(|prev| (i, j) <= prev) {
            return Err(Error::format(r.label(), "cells not sorted by (i, j)"));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::format(
                r.label(),
                format!("cell ({i},{j}) has non-positive weight {weight}"),
            ));
        }
        last = Some((i, j));
        table.cells.insert((i, j), weight);
    }
    r.expect_eof()?;
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenize::{END_TOKEN, START_TOKEN};

    fn seq(tokens: Vec<u32>) -> TokenSequence {
        TokenSequence {
            video_id: "v".into(),
            tokens,
        }
    }

    #[test]
    fn hand_enumerated_cells() {
        // Positions: START=0, a=1, b=2, a=3, END=4, with a=3, b=4 as ids.
        let (a, b) = (3u32, 4u32);
        let mut table = CooccurrenceTable::new(5, 10, Weighting::InverseDistance);
        table
            .accumulate(&seq(vec![START_TOKEN, a, b, a, END_TOKEN]))
            .unwrap();
        assert_eq!(table.cell(a, b), 2.0); // distances 1 and 1
        assert_eq!(table.cell(b, a), 2.0); // mirrored read
        assert_eq!(table.cell(a, a), 0.5); // positions 1 and 3
        assert_eq!(table.cell(START_TOKEN, END_TOKEN), 0.25);
        assert_eq!(table.cell(START_TOKEN, a), 1.0 + 1.0 / 3.0);
        assert_eq!(table.cell(b, END_TOKEN), 0.5);
        assert_eq!(table.cell(START_TOKEN, b), 0.5);
        assert_eq!(table.cell(a, END_TOKEN), 1.0 + 1.0 / 3.0);
    }

    #[test]
    fn window_one_keeps_adjacent_only() {
        let mut table = CooccurrenceTable::new(4, 1, Weighting::InverseDistance);
        table
            .accumulate(&seq(vec![START_TOKEN, 3, END_TOKEN]))
            .unwrap();
        assert_eq!(table.len(), 2);
        assert_eq!(table.cell(START_TOKEN, 3), 1.0);
        assert_eq!(table.cell(3, END_TOKEN), 1.0);
        assert_eq!(table.cell(START_TOKEN, END_TOKEN), 0.0);
    }

    #[test]
    fn window_zero_accumulates_nothing() {
        let mut table = CooccurrenceTable::new(4, 0, Weighting::InverseDistance);
        table
            .accumulate(&seq(vec![START_TOKEN, 3, 3, END_TOKEN]))
            .unwrap();
        assert!(table.is_empty());
    }

    #[test]
    fn out_of_range_token_rejected() {
        let mut table = CooccurrenceTable::new(3, 5, Weighting::InverseDistance);
        let err = table.accumulate(&seq(vec![0, 7, 1])).unwrap_err();
        assert!(err.to_string().contains("7"), "{err}");
    }

    #[test]
    fn windows_do_not_cross_sequences() {
        let mut table = CooccurrenceTable::new(6, 10, Weighting::InverseDistance);
        table.accumulate(&seq(vec![0, 3, 1])).unwrap();
        table.accumulate(&seq(vec![0, 4, 1])).unwrap();
        assert_eq!(table.cell(3, 4), 0.0);
    }

    #[test]
    fn uniform_weighting_counts_pairs() {
        let mut table = CooccurrenceTable::new(5, 10, Weighting::Uniform);
        table
            .accumulate(&seq(vec![START_TOKEN, 3, 4, 3, END_TOKEN]))
            .unwrap();
        // 5 tokens, window covers all pairs: C(5,2) = 10 unit weights.
        assert_eq!(table.total_weight(), 10.0);
        assert_eq!(table.cell(3, 4), 2.0);
    }

    #[test]
    fn merge_identity_with_empty() {
        let mut a = CooccurrenceTable::new(5, 10, Weighting::InverseDistance);
        a.accumulate(&seq(vec![0, 3, 4, 1])).unwrap();
        let empty = CooccurrenceTable::new(5, 10, Weighting::InverseDistance);
        let merged = merge(vec![a.clone(), empty], false).unwrap();
        assert_eq!(merged.cells_sorted(), a.cells_sorted());
    }

    #[test]
    fn deterministic_merge_is_order_invariant() {
        let mut a = CooccurrenceTable::new(6, 10, Weighting::InverseDistance);
        let mut b = CooccurrenceTable::new(6, 10, Weighting::InverseDistance);
        a.accumulate(&seq(vec![0, 3, 4, 5, 1])).unwrap();
        b.accumulate(&seq(vec![0, 5, 5, 3, 1])).unwrap();
        let ab = merge(vec![a.clone(), b.clone()], true).unwrap();
        let ba = merge(vec![b, a], true).unwrap();
        let bits =
            |t: &CooccurrenceTable| -> Vec<(u32, u32, u64)> {
                t.cells_sorted()
                    .into_iter()
                    .map(|(i, j, w)| (i, j, w.to_bits()))
                    .collect()
            };
        assert_eq!(bits(&ab), bits(&ba));
    }

    #[test]
    fn merge_rejects_mismatched_config() {
        let a = CooccurrenceTable::new(5, 10, Weighting::InverseDistance);
        let b = CooccurrenceTable::new(5, 9, Weighting::InverseDistance);
        assert!(merge(vec![a.clone(), b], false).is_err());
        let c = CooccurrenceTable::new(5, 10, Weighting::Uniform);
        assert!(merge(vec![a, c], false).is_err());
    }

    fn random_sequences(n: usize, max_len: usize, v: u32, seed: u64) -> Vec<TokenSequence> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let body = rng.gen_range(0..=max_len.saturating_sub(2));
                let mut tokens = vec![START_TOKEN];
                tokens.extend((0..body).map(|_| rng.gen_range(2..v)));
                tokens.push(END_TOKEN);
                TokenSequence {
                    video_id: format!("v{i}"),
                    tokens,
                }
            })
            .collect()
    }

    #[test]
    fn sharded_build_matches_single_pass() {
        let seqs = random_sequences(40, 60, 12, 3);
        let single = build_table(&seqs, 12, 8, Weighting::InverseDistance, 1).unwrap();
        let sharded = build_table(&seqs, 12, 8, Weighting::InverseDistance, 4).unwrap();
        assert_eq!(single.len(), sharded.len());
        for (i, j, w) in single.cells_sorted() {
            assert!(
                (sharded.cell(i, j) - w).abs() <= 1e-12,
                "cell ({i},{j}) differs"
            );
        }
    }

    #[test]
    fn total_weight_closed_form() {
        for (len, window) in [(5usize, 2u32), (30, 10), (12, 30), (2, 1)] {
            let tokens: Vec<u32> = std::iter::once(START_TOKEN)
                .chain((0..len - 2).map(|i| 3 + (i as u32 % 3)))
                .chain(std::iter::once(END_TOKEN))
                .collect();
            let mut table = CooccurrenceTable::new(6, window, Weighting::InverseDistance);
            table.accumulate(&seq(tokens)).unwrap();
            let mut expect = 0.0;
            for d in 1..=window as usize {
                if len > d {
                    expect += (len - d) as f64 / d as f64;
                }
            }
            assert!(
                (table.total_weight() - expect).abs() < 1e-9,
                "L={len} W={window}: {} vs {expect}",
                table.total_weight()
            );
        }
    }

    #[test]
    fn roundtrip_empty_and_small() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.auco");

        let empty = CooccurrenceTable::new(4, 10, Weighting::InverseDistance);
        write_table(&empty, &path).unwrap();
        let back = read_table(&path).unwrap();
        assert!(back.is_empty());
        assert_eq!((back.v, back.window, back.weighting), (4, 10, empty.weighting));

        let mut small = CooccurrenceTable::new(5, 10, Weighting::Uniform);
        small.accumulate(&seq(vec![0, 3, 4, 1])).unwrap();
        write_table(&small, &path).unwrap();
        let back = read_table(&path).unwrap();
        assert_eq!(back.cells_sorted(), small.cells_sorted());
        assert_eq!(back.weighting, Weighting::Uniform);
    }

    #[test]
    fn reserialization_is_byte_identical() {
        let seqs = random_sequences(50, 50, 40, 8);
        let table = build_table(&seqs, 40, 10, Weighting::InverseDistance, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.auco");
        let p2 = dir.path().join("b.auco");
        write_table(&table, &p1).unwrap();
        write_table(&read_table(&p1).unwrap(), &p2).unwrap();
        assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    }

    #[test]
    fn read_rejects_unsorted_and_bad_weights() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.auco");
        let mut table = CooccurrenceTable::new(5, 10, Weighting::InverseDistance);
        table.accumulate(&seq(vec![0, 3, 4, 1])).unwrap();
        write_table(&table, &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        // Flip the first cell's i/j to violate i ≤ j ordering checks.
        let header = 4 + 4 + 4 + 4 + 1 + 8;
        bytes[header] = 200;
        std::fs::write(&path, &bytes).unwrap();
        assert!(read_table(&path).is_err());
    }
}
