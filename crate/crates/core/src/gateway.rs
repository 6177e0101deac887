//! The edge gateway: turns an epoch of raw readings into a compact summary,
//! anchors it on the public chain and only then resets the private ledger.
//!
//! Rollover runs strictly in this order:
//!
//! 1. collect the epoch's readings from the private ledger;
//! 2. drop out-of-scale values ([`filter_out_of_scale`]);
//! 3. compute per-metric statistics ([`summarize`]);
//! 4. bind the statistics to the ledger head and state digest
//!    ([`EpochSummary`]);
//! 5. submit the anchor and wait for it to be confirmed;
//! 6. reset the private node, its new genesis committing to the anchor.
//!
//! A failure in step 5 leaves the private node as it was. Anything pruned can
//! later be checked against its anchor with [`verify_pruned_epoch`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical;
use crate::decimal::{f64_as_decimal, Decimal};
use crate::digest::Digest;
use crate::ledger::{Ledger, TxKind, VerifyFailure};
use crate::private_chain::{self, Metric, PrivateChainError, PrivateNode, SensorReading};
use crate::public_chain::{AnchorLookup, AnchorPublisher, AnchorRecord, PublicChainError};
use crate::world_state::{WorldState, WorldStateError};

/// Top-level document key whose array length is reported as the number of
/// cultural operations.
pub const CULTURAL_OPERATIONS_KEY: &str = "Cultural Operations";

/// 30 days.
pub const DEFAULT_EPOCH_LENGTH: u64 = 30 * 24 * 3600;

/// Relative tolerance when recomputed statistics are compared.
pub const STATS_RELATIVE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("more than one validity range for {0}")]
    DuplicateRange(Metric),
    #[error("validity range for {metric} has min {min} above max {max}")]
    InvalidRange { metric: Metric, min: Decimal, max: Decimal },
    #[error("{0} transactions still pending; commit or drop them before rollover")]
    NonEmptyMempool(usize),
    #[error("gateway for {expected:?} cannot roll over channel {got:?}")]
    WrongChannel { expected: String, got: String },
    #[error("window [{start}, {end}) is empty")]
    InvalidWindow { start: u64, end: u64 },
    #[error("epoch window must start at {expected}, got {got}")]
    NonContiguousWindow { expected: u64, got: u64 },
    #[error("{0} committed readings fall outside the epoch window")]
    ReadingsOutsideWindow(usize),
    #[error("anchor publication failed, private ledger kept: {0}")]
    PublishFailed(#[source] PublicChainError),
    #[error(transparent)]
    PrivateChain(#[from] PrivateChainError),
    #[error(transparent)]
    WorldState(#[from] WorldStateError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidityRange {
    pub metric: Metric,
    pub min_valid: Decimal,
    pub max_valid: Decimal,
}

impl ValidityRange {
    pub fn new(metric: Metric, min_valid: Decimal, max_valid: Decimal) -> Result<Self, GatewayError> {
        if min_valid > max_valid {
            return Err(GatewayError::InvalidRange {
                metric,
                min: min_valid,
                max: max_valid,
            });
        }
        Ok(ValidityRange {
            metric,
            min_valid,
            max_valid,
        })
    }

    /// Inclusive on both ends.
    pub fn contains(&self, value: &Decimal) -> bool {
        &self.min_valid <= value && value <= &self.max_valid
    }
}

/// Plausible physical limits for each metric.
pub fn default_ranges() -> Vec<ValidityRange> {
    let r = |metric, lo: &str, hi: &str| ValidityRange {
        metric,
        min_valid: lo.parse().unwrap(),
        max_valid: hi.parse().unwrap(),
    };
    vec![
        r(Metric::TemperatureC, "-20", "60"),
        r(Metric::HumidityPct, "0", "100"),
        r(Metric::RainPct, "0", "100"),
        r(Metric::WindSpeedMs, "0", "60"),
    ]
}

fn range_index(ranges: &[ValidityRange]) -> Result<BTreeMap<Metric, &ValidityRange>, GatewayError> {
    let mut by_metric = BTreeMap::new();
    for range in ranges {
        if range.min_valid > range.max_valid {
            return Err(GatewayError::InvalidRange {
                metric: range.metric,
                min: range.min_valid.clone(),
                max: range.max_valid.clone(),
            });
        }
        if by_metric.insert(range.metric, range).is_some() {
            return Err(GatewayError::DuplicateRange(range.metric));
        }
    }
    Ok(by_metric)
}

/// Splits readings into `(kept, excluded)`, preserving order. Metrics without
/// a range are always kept.
pub fn filter_out_of_scale(
    readings: &[SensorReading],
    ranges: &[ValidityRange],
) -> Result<(Vec<SensorReading>, Vec<SensorReading>), GatewayError> {
    let by_metric = range_index(ranges)?;
    Ok(readings
        .iter()
        .cloned()
        .partition(|r| by_metric.get(&r.metric).is_none_or(|range| range.contains(&r.value))))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricStats {
    pub metric: Metric,
    pub count: u64,
    #[serde(with = "f64_as_decimal")]
    pub mean: f64,
    /// Population standard deviation.
    #[serde(with = "f64_as_decimal")]
    pub std_dev: f64,
    pub min: Decimal,
    pub max: Decimal,
}

impl MetricStats {
    /// Same metric, count and extrema, and mean/std within `tol` relative.
    pub fn approx_eq(&self, other: &MetricStats, tol: f64) -> bool {
        self.metric == other.metric
            && self.count == other.count
            && self.min == other.min
            && self.max == other.max
            && rel_close(self.mean, other.mean, tol)
            && rel_close(self.std_dev, other.std_dev, tol)
    }
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    a == b || (a - b).abs() <= tol * a.abs().max(b.abs())
}

struct Accumulator {
    count: u64,
    mean: f64,
    m2: f64,
    min: Decimal,
    max: Decimal,
}

/// Per-metric count, mean, population standard deviation and exact extrema,
/// in [`Metric`] order. Metrics without readings are omitted.
pub fn summarize(readings: &[SensorReading]) -> Vec<MetricStats> {
    let mut groups: BTreeMap<Metric, Accumulator> = BTreeMap::new();
    for reading in readings {
        let x = reading.value.to_f64();
        let acc = groups.entry(reading.metric).or_insert_with(|| Accumulator {
            count: 0,
            mean: 0.0,
            m2: 0.0,
            min: reading.value.clone(),
            max: reading.value.clone(),
        });
        // Welford's update.
        acc.count += 1;
        let delta = x - acc.mean;
        acc.mean += delta / acc.count as f64;
        acc.m2 += delta * (x - acc.mean);
        if reading.value < acc.min {
            acc.min = reading.value.clone();
        }
        if reading.value > acc.max {
            acc.max = reading.value.clone();
        }
    }
    groups
        .into_iter()
        .map(|(metric, acc)| {
            let std_dev = if acc.count == 1 {
                0.0
            } else {
                (acc.m2.max(0.0) / acc.count as f64).sqrt()
            };
            MetricStats {
                metric,
                count: acc.count,
                mean: acc.mean.clamp(acc.min.to_f64(), acc.max.to_f64()),
                std_dev,
                min: acc.min,
                max: acc.max,
            }
        })
        .collect()
}

/// Total length of the top-level `"Cultural Operations"` arrays.
pub fn cultural_operations(state: &WorldState) -> u64 {
    state
        .documents()
        .filter_map(|d| d.body.get(CULTURAL_OPERATIONS_KEY)?.as_array())
        .map(|ops| ops.len() as u64)
        .sum()
}

/// What the gateway publishes for one epoch of one channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EpochSummary {
    pub channel_id: String,
    pub epoch_index: u64,
    pub window_start: u64,
    pub window_end: u64,
    /// The validity ranges the filter applied, so the exclusion is reproducible.
    pub ranges: Vec<ValidityRange>,
    pub stats: Vec<MetricStats>,
    pub excluded_count: u64,
    pub cultural_operations: u64,
    pub ledger_head_hash: Digest,
    pub ledger_height: u64,
    pub state_digest: Digest,
}

impl EpochSummary {
    pub fn canonical_bytes(&self) -> Vec<u8> {
        canonical::to_canonical_vec(self).expect("summaries serialize without floats")
    }

    /// The value an anchor commits to.
    pub fn digest(&self) -> Digest {
        Digest::of(&self.canonical_bytes())
    }

    pub fn stats_for(&self, metric: Metric) -> Option<&MetricStats> {
        self.stats.iter().find(|s| s.metric == metric)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GatewayEventKind {
    AnchorSubmitted,
    AnchorConfirmed,
    LedgerReset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayEvent {
    pub kind: GatewayEventKind,
    pub channel_id: String,
    pub epoch_index: u64,
    /// Public-chain height the event refers to (inclusion or confirmation).
    pub public_height: Option<u64>,
}

/// Result of a successful rollover.
#[derive(Debug, Clone)]
pub struct Rollover {
    pub summary: EpochSummary,
    pub anchor: AnchorRecord,
    pub node: PrivateNode,
    /// The pre-reset ledger, kept for later verification.
    pub archived: Ledger,
}

/// Edge computing unit for one channel: a private-chain reader and a
/// public-chain client.
#[derive(Debug, Clone)]
pub struct Gateway {
    identity: String,
    channel_id: String,
    ranges: Vec<ValidityRange>,
    next_epoch: u64,
    next_window_start: Option<u64>,
    events: Vec<GatewayEvent>,
}

impl Gateway {
    pub fn new(identity: &str, channel_id: &str, ranges: Vec<ValidityRange>) -> Result<Self, GatewayError> {
        range_index(&ranges)?;
        Ok(Gateway {
            identity: identity.to_owned(),
            channel_id: channel_id.to_owned(),
            ranges,
            next_epoch: 0,
            next_window_start: None,
            events: Vec::new(),
        })
    }

    pub fn identity(&self) -> &str {
        &self.identity
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn ranges(&self) -> &[ValidityRange] {
        &self.ranges
    }

    pub fn next_epoch(&self) -> u64 {
        self.next_epoch
    }

    pub fn events(&self) -> &[GatewayEvent] {
        &self.events
    }

    fn record(&mut self, kind: GatewayEventKind, epoch_index: u64, public_height: Option<u64>) {
        self.events.push(GatewayEvent {
            kind,
            channel_id: self.channel_id.clone(),
            epoch_index,
            public_height,
        });
    }

    /// Builds the summary for `[window_start, window_end)` without publishing.
    pub fn summarize_epoch(
        &self,
        node: &PrivateNode,
        window_start: u64,
        window_end: u64,
    ) -> Result<EpochSummary, GatewayError> {
        if node.channel_id() != self.channel_id {
            return Err(GatewayError::WrongChannel {
                expected: self.channel_id.clone(),
                got: node.channel_id().to_owned(),
            });
        }
        if node.mempool_len() > 0 {
            return Err(GatewayError::NonEmptyMempool(node.mempool_len()));
        }
        if window_start >= window_end {
            return Err(GatewayError::InvalidWindow {
                start: window_start,
                end: window_end,
            });
        }
        if let Some(expected) = self.next_window_start {
            if expected != window_start {
                return Err(GatewayError::NonContiguousWindow {
                    expected,
                    got: window_start,
                });
            }
        }

        let readings = node.readings_in_window(window_start, window_end)?;
        let total = node
            .ledger()
            .blocks()
            .iter()
            .flat_map(|b| &b.transactions)
            .filter(|t| t.kind == TxKind::RawReading)
            .count();
        if total != readings.len() {
            return Err(GatewayError::ReadingsOutsideWindow(total - readings.len()));
        }

        let (kept, excluded) = filter_out_of_scale(&readings, &self.ranges)?;
        let (ledger_height, ledger_head_hash) = node.ledger().head();
        Ok(EpochSummary {
            channel_id: self.channel_id.clone(),
            epoch_index: self.next_epoch,
            window_start,
            window_end,
            ranges: self.ranges.clone(),
            stats: summarize(&kept),
            excluded_count: excluded.len() as u64,
            cultural_operations: cultural_operations(node.state()),
            ledger_head_hash,
            ledger_height,
            state_digest: node.state().state_digest(),
        })
    }

    /// Summarize, publish, wait for confirmation, then reset. Nothing is
    /// reset unless the anchor is confirmed.
    pub fn rollover_epoch<P: AnchorPublisher + ?Sized>(
        &mut self,
        node: &PrivateNode,
        window_start: u64,
        window_end: u64,
        publisher: &mut P,
    ) -> Result<Rollover, GatewayError> {
        let summary = self.summarize_epoch(node, window_start, window_end)?;
        let epoch = summary.epoch_index;

        let submitted = publisher
            .submit_anchor(&summary, &self.identity)
            .map_err(GatewayError::PublishFailed)?;
        self.record(GatewayEventKind::AnchorSubmitted, epoch, submitted.included_height);

        let anchor = publisher
            .await_confirmation(&self.channel_id, epoch)
            .map_err(GatewayError::PublishFailed)?;
        if !anchor.confirmed || anchor.summary_digest != summary.digest() {
            return Err(GatewayError::PublishFailed(PublicChainError::NotConfirmed {
                channel_id: self.channel_id.clone(),
                epoch_index: epoch,
            }));
        }
        self.record(GatewayEventKind::AnchorConfirmed, epoch, anchor.included_height);

        let fresh = node.reset_with_anchor(anchor.summary_digest)?;
        self.record(GatewayEventKind::LedgerReset, epoch, None);
        self.next_epoch += 1;
        self.next_window_start = Some(window_end);

        Ok(Rollover {
            summary,
            anchor,
            node: fresh,
            archived: node.ledger().clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "check")]
pub enum PruneCheckFailure {
    /// (a) the archived ledger fails chain verification.
    ChainInvalid {
        height: Option<u64>,
        reason: Option<VerifyFailure>,
    },
    /// (b) head or channel differs from the summary.
    HeadMismatch,
    /// (b) replayed world state disagrees with the summary.
    StateMismatch,
    /// The archive's genesis does not commit to the previous epoch's anchor.
    PredecessorLink,
    /// The archive cannot be decoded into readings or state.
    ArchiveUnreadable { detail: String },
    /// (c) recomputed statistics or exclusion count differ.
    StatsMismatch,
    /// (d) no confirmed anchor for this channel and epoch.
    AnchorMissing,
    /// (d) the confirmed anchor commits to different summary bytes.
    AnchorDigestMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrunedEpochCheck {
    pub ok: bool,
    pub failures: Vec<PruneCheckFailure>,
}

/// Checks that an archived (pruned) ledger still backs its published summary.
pub fn verify_pruned_epoch<L: AnchorLookup + ?Sized>(
    archived: &Ledger,
    summary: &EpochSummary,
    public: &L,
) -> PrunedEpochCheck {
    let mut failures = Vec::new();

    let report = archived.verify_chain();
    if !report.ok {
        failures.push(PruneCheckFailure::ChainInvalid {
            height: report.first_bad_height,
            reason: report.reason,
        });
    }

    let (height, head) = archived.head();
    if archived.chain_id() != summary.channel_id || height != summary.ledger_height || head != summary.ledger_head_hash
    {
        failures.push(PruneCheckFailure::HeadMismatch);
    }

    match WorldState::replay(archived) {
        Ok(state) => {
            if state.state_digest() != summary.state_digest
                || cultural_operations(&state) != summary.cultural_operations
            {
                failures.push(PruneCheckFailure::StateMismatch);
            }
        }
        Err(e) => failures.push(PruneCheckFailure::ArchiveUnreadable { detail: e.to_string() }),
    }

    let expected_link = match summary.epoch_index {
        0 => None,
        k => public
            .confirmed_anchor(&summary.channel_id, k - 1)
            .map(|a| a.summary_digest),
    };
    if archived.genesis_anchor() != expected_link || (summary.epoch_index > 0 && expected_link.is_none()) {
        failures.push(PruneCheckFailure::PredecessorLink);
    }

    match recompute(archived, summary) {
        Ok(true) => {}
        Ok(false) => failures.push(PruneCheckFailure::StatsMismatch),
        Err(detail) => failures.push(PruneCheckFailure::ArchiveUnreadable { detail }),
    }

    match public.confirmed_anchor(&summary.channel_id, summary.epoch_index) {
        None => failures.push(PruneCheckFailure::AnchorMissing),
        Some(anchor) => {
            if anchor.summary_digest != summary.digest() {
                failures.push(PruneCheckFailure::AnchorDigestMismatch);
            }
        }
    }

    PrunedEpochCheck {
        ok: failures.is_empty(),
        failures,
    }
}

fn recompute(archived: &Ledger, summary: &EpochSummary) -> Result<bool, String> {
    let readings = private_chain::readings_in_window(archived, summary.window_start, summary.window_end)
        .map_err(|e| e.to_string())?;
    let all = private_chain::readings_in_window(archived, 0, u64::MAX).map_err(|e| e.to_string())?;
    if all.len() != readings.len() {
        return Ok(false);
    }
    let (kept, excluded) = filter_out_of_scale(&readings, &summary.ranges).map_err(|e| e.to_string())?;
    let stats = summarize(&kept);
    Ok(excluded.len() as u64 == summary.excluded_count
        && stats.len() == summary.stats.len()
        && stats
            .iter()
            .zip(&summary.stats)
            .all(|(a, b)| a.approx_eq(b, STATS_RELATIVE_TOLERANCE)))
}

/// Summary as a JSON value (used for traces and reports).
pub fn summary_json(summary: &EpochSummary) -> Value {
    serde_json::to_value(summary).expect("summary serializes")
}
