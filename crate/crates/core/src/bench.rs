//! Storage and batch-latency measurements over single-reading ledgers.
//!
//! Absolute numbers depend on the machine and on this ledger's encoding; what
//! carries over from deployment measurements is the shape: storage linear in
//! the transaction count, and verify-inclusive batch time growing with it.

use std::fmt::Write as _;
use std::path::Path;
use std::time::{Duration, Instant};

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;
use crate::ledger::{Ledger, Transaction};
use crate::private_chain::{Metric, PrivateNode, SensorReading};

pub const BATCH: usize = 100;
pub const BENCH_SEED: u64 = 0x7CA9_2024;
pub const BENCH_CHANNEL: &str = "bench";
pub const BENCH_SENSOR: &str = "bench-sensor";
pub const DEFAULT_LEVELS: [u64; 12] = [0, 5, 10, 50, 100, 500, 1000, 5000, 10_000, 50_000, 100_000, 500_000];
pub const REPETITIONS: usize = 3;
pub const CSV_HEADER: &str = "transactions,occupied_mb,batch_seconds";

pub const REPORT_NOTE: &str = "Absolute sizes and timings are specific to this machine and ledger encoding \
and are not comparable to deployment measurements; the reproducible claims are linear storage growth and \
verify-inclusive batch time that grows with the ledger. A zero time at N=0 in published tables reads as \
'not measured'; here every level is measured.";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("levels must be sorted ascending without duplicates")]
    UnsortedLevels,
    #[error("writing {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchPoint {
    pub n_existing: u64,
    pub occupied_bytes: u64,
    /// Median wall time of one 100-transaction batch; `None` when not measured.
    pub batch_seconds: Option<f64>,
}

fn check_levels(levels: &[u64]) -> Result<(), BenchError> {
    if levels.windows(2).all(|w| w[0] < w[1]) {
        Ok(())
    } else {
        Err(BenchError::UnsortedLevels)
    }
}

/// Deterministic single-reading transactions: temperature on a 0.01 grid in
/// [5, 35), one per second starting at `first_ts`.
pub struct ReadingSource {
    rng: SplitMix64,
    next_ts: u64,
}

impl ReadingSource {
    pub fn new(seed: u64, first_ts: u64) -> Self {
        ReadingSource {
            rng: SplitMix64::seed_from_u64(seed),
            next_ts: first_ts,
        }
    }

    pub fn next_tx(&mut self) -> Transaction {
        let hundredths = 500 + (self.rng.next_u64() % 3000) as i128;
        let reading = SensorReading {
            sensor_id: BENCH_SENSOR.to_owned(),
            metric: Metric::TemperatureC,
            value: Decimal::from_scaled(hundredths, 2),
            timestamp: self.next_ts,
        };
        self.next_ts += 1;
        reading.to_transaction(BENCH_CHANNEL)
    }

    pub fn take(&mut self, n: u64) -> Vec<Transaction> {
        (0..n).map(|_| self.next_tx()).collect()
    }
}

/// A node holding `n` readings committed in blocks of 100.
pub fn prebuilt_node(n: u64) -> PrivateNode {
    let mut node = PrivateNode::new(BENCH_CHANNEL, [BENCH_SENSOR], BATCH).expect("batch is positive");
    let mut source = ReadingSource::new(BENCH_SEED, 1);
    let mut remaining = n;
    while remaining > 0 {
        let chunk = remaining.min(BATCH as u64);
        for tx in source.take(chunk) {
            node.submit(tx).expect("generated readings are valid");
        }
        node.commit_all().expect("readings carry no context ops");
        remaining -= chunk;
    }
    node
}

/// Ledger bytes after storing N readings, for each level.
pub fn bench_memory(levels: &[u64]) -> Result<Vec<BenchPoint>, BenchError> {
    check_levels(levels)?;
    Ok(levels
        .iter()
        .map(|&n| BenchPoint {
            n_existing: n,
            occupied_bytes: prebuilt_node(n).ledger().size_bytes(),
            batch_seconds: None,
        })
        .collect())
}

/// Times submit + commit of one 100-transaction batch on top of N existing
/// readings, plus a full chain verification when `verify_mode` is set.
/// Median of three runs; node cloning and batch generation are untimed.
pub fn bench_batch_time(levels: &[u64], verify_mode: bool) -> Result<Vec<BenchPoint>, BenchError> {
    check_levels(levels)?;
    let mut points = Vec::with_capacity(levels.len());
    for &n in levels {
        let base = prebuilt_node(n);
        let mut samples: Vec<Duration> = (0..REPETITIONS)
            .map(|_| {
                let mut node = base.clone();
                let batch = ReadingSource::new(BENCH_SEED ^ 0xBA7C, n + 1).take(BATCH as u64);
                let started = Instant::now();
                for tx in batch {
                    node.submit(tx).expect("fresh readings are valid");
                }
                node.commit_all().expect("readings carry no context ops");
                if verify_mode {
                    assert!(node.ledger().verify_chain().ok, "benchmark ledger failed verification");
                }
                started.elapsed()
            })
            .collect();
        samples.sort();
        points.push(BenchPoint {
            n_existing: n,
            occupied_bytes: base.ledger().size_bytes(),
            batch_seconds: Some(samples[REPETITIONS / 2].as_secs_f64()),
        });
    }
    Ok(points)
}

pub fn csv_string(points: &[BenchPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let mb = Decimal::from_scaled(((p.occupied_bytes as i128) + 500) / 1000, 3);
        let secs = p.batch_seconds.map(|s| format!("{s:.6}")).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", p.n_existing, mb, secs);
    }
    out
}

pub fn emit_csv(points: &[BenchPoint], path: &Path) -> Result<(), BenchError> {
    std::fs::write(path, csv_string(points)).map_err(|source| BenchError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Ordinary least squares of occupied bytes on transaction count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// `None` with fewer than two distinct x values.
pub fn linear_fit(xy: &[(f64, f64)]) -> Option<LinearFit> {
    let n = xy.len() as f64;
    let mx = xy.iter().map(|p| p.0).sum::<f64>() / n;
    let my = xy.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xy.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if xy.len() < 2 || sxx == 0.0 {
        return None;
    }
    let sxy: f64 = xy.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = xy.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = xy.iter().map(|p| (p.1 - (intercept + slope * p.0)).powi(2)).sum();
    Some(LinearFit {
        slope,
        intercept,
        r_squared: if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy },
        points: xy.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub min_level: u64,
    pub memory: Option<LinearFit>,
    pub verify_mode: bool,
    pub note: String,
}

/// Memory fit over points with `n_existing >= min_level`.
pub fn fit_report(points: &[BenchPoint], min_level: u64, verify_mode: bool) -> FitReport {
    let xy: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.n_existing >= min_level)
        .map(|p| (p.n_existing as f64, p.occupied_bytes as f64))
        .collect();
    FitReport {
        min_level,
        memory: linear_fit(&xy),
        verify_mode,
        note: REPORT_NOTE.to_owned(),
    }
}

/// Ratio of storage at two levels, if both were measured.
pub fn storage_ratio(points: &[BenchPoint], hi: u64, lo: u64) -> Option<f64> {
    let at = |n| {
        points
            .iter()
            .find(|p| p.n_existing == n)
            .map(|p| p.occupied_bytes as f64)
    };
    Some(at(hi)? / at(lo)?)
}

pub fn capped_levels(max_level: u64) -> Vec<u64> {
    DEFAULT_LEVELS.iter().copied().filter(|&n| n <= max_level).collect()
}

/// Total size of an independently built ledger with the same content, used
/// as a cross-check on `size_bytes`.
pub fn encoded_len_sum(ledger: &Ledger) -> u64 {
    ledger
        .blocks()
        .iter()
        .map(|b| {
            let mut buf = Vec::new();
            b.encode(&mut buf);
            buf.len() as u64
        })
        .sum()
}
