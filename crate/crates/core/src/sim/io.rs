//! Batch export formats.
//!
//! Binary: a 32-byte little-endian header
//!
//! | offset | size | field                   |
//! |--------|------|-------------------------|
//! | 0      | 4    | magic `CLTB`            |
//! | 4      | 4    | version (u32) = 1       |
//! | 8      | 8    | n (u64)                 |
//! | 16     | 8    | count (u64)             |
//! | 24     | 8    | seed (u64)              |
//!
//! followed by `count * ceil(n / 64)` little-endian u64 words, trajectory by
//! trajectory, bit `t % 64` of word `t / 64` holding `I_t`.
//!
//! CSV (small batches): header `trajectory,count,sequence`, one row per
//! trajectory, `sequence` a string of `0`/`1` characters of length `n`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{words_per_trajectory, TrajectoryBatch};

pub const MAGIC: &[u8; 4] = b"CLTB";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 32;

pub fn write_binary<W: Write>(batch: &TrajectoryBatch, mut w: W) -> Result<()> {
    if batch.first_index() != 0 {
        return Err(Error::Format(format!(
            "binary export needs a batch starting at trajectory 0, this one starts at {}",
            batch.first_index()
        )));
    }
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&VERSION.to_le_bytes());
    header[8..16].copy_from_slice(&(batch.n() as u64).to_le_bytes());
    header[16..24].copy_from_slice(&(batch.count() as u64).to_le_bytes());
    header[24..32].copy_from_slice(&batch.seed().to_le_bytes());
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(batch.words().len() * 8);
    for word in batch.words() {
        buf.extend_from_slice(&word.to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

pub fn to_bytes(batch: &TrajectoryBatch) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    write_binary(batch, &mut out)?;
    Ok(out)
}

pub fn read_binary<R: Read>(mut r: R) -> Result<TrajectoryBatch> {
    let mut header = [0u8; HEADER_LEN];
    r.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format("bad magic, not a trajectory batch".into()));
    }
    let u64_at = |o: usize| u64::from_le_bytes(header[o..o + 8].try_into().unwrap());
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format(format!(
            "unsupported batch version {version}"
        )));
    }
    let (n, count, seed) = (u64_at(8) as usize, u64_at(16) as usize, u64_at(24));
    if n == 0 {
        return Err(Error::Format("batch header has n = 0".into()));
    }
    let total = words_per_trajectory(n)
        .checked_mul(count)
        .ok_or_else(|| Error::Format("batch header sizes overflow".into()))?;
    let mut bytes = vec![0u8; total * 8];
    r.read_exact(&mut bytes)?;
    let words: Vec<u64> = bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    check_padding(&words, n)?;
    Ok(TrajectoryBatch::from_parts(n, seed, 0, words))
}

fn check_padding(words: &[u64], n: usize) -> Result<()> {
    let rest = n % 64;
    if rest == 0 {
        return Ok(());
    }
    let wpt = words_per_trajectory(n);
    let mask = !((1u64 << rest) - 1);
    if words.chunks(wpt).any(|w| w[wpt - 1] & mask != 0) {
        return Err(Error::Format(
            "bits set beyond the trajectory length".into(),
        ));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    trajectory: u64,
    count: u32,
    sequence: String,
}

pub fn write_csv<W: Write>(batch: &TrajectoryBatch, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for i in 0..batch.count() {
        let sequence = (0..batch.n())
            .map(|t| if batch.get(i, t) { '1' } else { '0' })
            .collect();
        out.serialize(CsvRow {
            trajectory: batch.first_index() + i as u64,
            count: batch.counts()[i],
            sequence,
        })?;
    }
    out.flush()?;
    Ok(())
}

/// Reads the CSV form; the seed is not part of it and must be supplied.
pub fn read_csv<R: Read>(r: R, seed: u64) -> Result<TrajectoryBatch> {
    let mut sequences = Vec::new();
    for (line, row) in csv::Reader::from_reader(r)
        .deserialize::<CsvRow>()
        .enumerate()
    {
        let row = row?;
        let seq: Vec<bool> = row
            .sequence
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Format(format!(
                    "row {}: invalid character {other:?} in sequence",
                    line + 2
                ))),
            })
            .collect::<Result<_>>()?;
        let ones = seq.iter().filter(|b| **b).count() as u32;
        if ones != row.count {
            return Err(Error::Format(format!(
                "row {}: count {} disagrees with sequence ({ones})",
                line + 2,
                row.count
            )));
        }
        sequences.push(seq);
    }
    TrajectoryBatch::from_sequences(&sequences, seed)
        .map_err(|e| Error::Format(format!("CSV batch: {e}")))
}
