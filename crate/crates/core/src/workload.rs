//! Deterministic sensor workloads and the end-to-end scenario runner.
//!
//! Randomness comes from SplitMix64 only, seeded per (field seed, stream,
//! window start), so any implementation of the same algorithm reproduces the
//! same readings. Values are drawn on a 0.01 grid from integer arithmetic to
//! avoid float formatting differences.

use std::collections::BTreeSet;
use std::error::Error as StdError;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canonical;
use crate::decimal::Decimal;
use crate::digest::Digest;
use crate::gateway::{
    self, default_ranges, filter_out_of_scale, verify_pruned_epoch, EpochSummary, Gateway, GatewayEvent,
    GatewayEventKind, PrunedEpochCheck, ValidityRange, CULTURAL_OPERATIONS_KEY, DEFAULT_EPOCH_LENGTH,
};
use crate::ledger::{Ledger, Transaction};
use crate::private_chain::{Metric, PrivateChainError, PrivateNode, SensorReading, DEFAULT_BATCH_SIZE};
use crate::public_chain::{PublicChain, DEFAULT_CONFIRMATIONS};
use crate::world_state::{ContextOp, ContextOpKind, PathExpr, WorldStateError};

/// 2024-01-01T00:00:00Z
pub const DEFAULT_START_TIME: u64 = 1_704_067_200;

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;
const READING_STREAM: u64 = 1;
const CONTEXT_STREAM: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum WorkloadError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("window [{start}, {end}) is empty")]
    InvalidWindow { start: u64, end: u64 },
    #[error(transparent)]
    PrivateChain(#[from] PrivateChainError),
    #[error(transparent)]
    ContextOp(#[from] WorldStateError),
    #[error("{channel_id} epoch {epoch_index}: {source}")]
    Step {
        channel_id: String,
        epoch_index: u64,
        #[source]
        source: Box<dyn StdError + Send + Sync>,
    },
}

impl WorkloadError {
    fn step(channel_id: &str, epoch_index: u64, source: impl StdError + Send + Sync + 'static) -> Self {
        WorkloadError::Step {
            channel_id: channel_id.to_owned(),
            epoch_index,
            source: Box::new(source),
        }
    }
}

/// Deterministic stream for one purpose within one window.
pub fn stream_rng(seed: u64, stream: u64, window_start: u64) -> SplitMix64 {
    let mut mixer = SplitMix64::seed_from_u64(seed ^ stream.wrapping_mul(GOLDEN) ^ window_start.rotate_left(32));
    SplitMix64::seed_from_u64(mixer.next_u64())
}

/// Uniform in `[0, 1)` from the top 53 bits.
pub fn unit_f64(rng: &mut SplitMix64) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Product {
    Asparagus,
    Pomegranate,
    Almond,
    Tomato,
    DurumWheat,
}

impl Product {
    pub const ALL: [Product; 5] = [
        Product::Asparagus,
        Product::Pomegranate,
        Product::Almond,
        Product::Tomato,
        Product::DurumWheat,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Product::Asparagus => "asparagus",
            Product::Pomegranate => "pomegranate",
            Product::Almond => "almond",
            Product::Tomato => "tomato",
            Product::DurumWheat => "durum_wheat",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    /// Inclusive bounds with at most two fraction digits.
    Uniform { lo: Decimal, hi: Decimal },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    pub sensor_id: String,
    pub metric: Metric,
    /// Seconds between samples.
    pub sampling_interval: u64,
    pub distribution: Distribution,
}

impl SensorSpec {
    /// Default sampling and distribution for a metric: temperature U(5,35)
    /// hourly, humidity U(20,90) hourly, rain U(0,100) daily, wind U(0,20)
    /// hourly.
    pub fn default_for(sensor_id: &str, metric: Metric) -> Self {
        let (lo, hi, interval) = match metric {
            Metric::TemperatureC => ("5", "35", 3600),
            Metric::HumidityPct => ("20", "90", 3600),
            Metric::RainPct => ("0", "100", 86_400),
            Metric::WindSpeedMs => ("0", "20", 3600),
        };
        SensorSpec {
            sensor_id: sensor_id.to_owned(),
            metric,
            sampling_interval: interval,
            distribution: Distribution::Uniform {
                lo: lo.parse().unwrap(),
                hi: hi.parse().unwrap(),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldConfig {
    pub channel_id: String,
    pub product: Product,
    pub sensors: Vec<SensorSpec>,
    /// Probability that a sample is replaced by an out-of-scale spike.
    pub fault_rate: Decimal,
    pub seed: u64,
}

impl FieldConfig {
    pub fn operator_id(&self) -> String {
        format!("operator-{}", self.channel_id)
    }

    pub fn gateway_id(&self) -> String {
        format!("gateway-{}", self.channel_id)
    }

    pub fn doc_id(&self) -> String {
        format!("lot-{}", self.channel_id)
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let bad = |msg: String| Err(WorkloadError::InvalidConfig(format!("{}: {msg}", self.channel_id)));
        if self.channel_id.is_empty() {
            return Err(WorkloadError::InvalidConfig("empty channel_id".into()));
        }
        let p = self.fault_rate.to_f64();
        if !(0.0..=1.0).contains(&p) {
            return bad(format!("fault_rate {} outside [0, 1]", self.fault_rate));
        }
        let mut ids = BTreeSet::new();
        for s in &self.sensors {
            if s.sampling_interval == 0 {
                return bad(format!("sensor {} has a zero sampling interval", s.sensor_id));
            }
            if !ids.insert(&s.sensor_id) {
                return bad(format!("duplicate sensor id {}", s.sensor_id));
            }
            let Distribution::Uniform { lo, hi } = &s.distribution;
            match (lo.to_scaled(2), hi.to_scaled(2)) {
                (Some(l), Some(h)) if l <= h => {}
                _ => return bad(format!("sensor {} needs lo <= hi with at most 2 decimals", s.sensor_id)),
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub fields: Vec<FieldConfig>,
    #[serde(default = "default_epoch_length")]
    pub epoch_length: u64,
    pub epochs: u64,
    #[serde(default = "default_ranges")]
    pub ranges: Vec<ValidityRange>,
    #[serde(default = "default_validators")]
    pub public_validators: usize,
    #[serde(default = "default_start_time")]
    pub start_time: u64,
    #[serde(default = "default_confirmations")]
    pub confirmations_required: u64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_epoch_length() -> u64 {
    DEFAULT_EPOCH_LENGTH
}
fn default_validators() -> usize {
    3
}
fn default_start_time() -> u64 {
    DEFAULT_START_TIME
}
fn default_confirmations() -> u64 {
    DEFAULT_CONFIRMATIONS
}
fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

impl ScenarioConfig {
    /// Five fields, one per product, three sensors each, two 30-day epochs.
    pub fn default_five_field() -> Self {
        let fields = Product::ALL
            .iter()
            .enumerate()
            .map(|(i, &product)| {
                let channel_id = format!("field-{}", product.as_str());
                let third = if i % 2 == 0 {
                    Metric::RainPct
                } else {
                    Metric::WindSpeedMs
                };
                let sensors = [Metric::TemperatureC, Metric::HumidityPct, third]
                    .iter()
                    .map(|&m| SensorSpec::default_for(&format!("{channel_id}/{}", m.as_str()), m))
                    .collect();
                FieldConfig {
                    channel_id,
                    product,
                    sensors,
                    fault_rate: "0.01".parse().unwrap(),
                    seed: 1000 + i as u64,
                }
            })
            .collect();
        ScenarioConfig {
            fields,
            epoch_length: DEFAULT_EPOCH_LENGTH,
            epochs: 2,
            ranges: default_ranges(),
            public_validators: default_validators(),
            start_time: DEFAULT_START_TIME,
            confirmations_required: DEFAULT_CONFIRMATIONS,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self, WorkloadError> {
        let cfg: ScenarioConfig =
            serde_json::from_slice(bytes).map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical::to_canonical_vec(self).expect("configs hold no floats")
    }

    /// Replaces every field seed with one derived from `base`.
    pub fn override_seeds(&mut self, base: u64) {
        let mut rng = SplitMix64::seed_from_u64(base);
        for field in &mut self.fields {
            field.seed = rng.next_u64();
        }
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        let invalid = |m: &str| Err(WorkloadError::InvalidConfig(m.to_owned()));
        if self.fields.is_empty() {
            return invalid("at least one field required");
        }
        if self.epochs == 0 {
            return invalid("epochs must be at least 1");
        }
        if self.epoch_length == 0 {
            return invalid("epoch_length must be positive");
        }
        if self.public_validators == 0 {
            return invalid("at least one public validator required");
        }
        if self.confirmations_required == 0 || self.batch_size == 0 {
            return invalid("confirmations_required and batch_size must be positive");
        }
        let mut channels = BTreeSet::new();
        for f in &self.fields {
            f.validate()?;
            if !channels.insert(&f.channel_id) {
                return invalid(&format!("duplicate channel {}", f.channel_id));
            }
        }
        Gateway::new("validate", "validate", self.ranges.clone())
            .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
        Ok(())
    }

    pub fn window(&self, epoch: u64) -> (u64, u64) {
        let start = self.start_time + epoch * self.epoch_length;
        (start, start + self.epoch_length)
    }
}

fn spike_for(metric: Metric, ranges: &[ValidityRange]) -> Decimal {
    ranges
        .iter()
        .find(|r| r.metric == metric)
        .cloned()
        .or_else(|| default_ranges().into_iter().find(|r| r.metric == metric))
        .expect("every metric has a default range")
        .max_valid
        .times_ten()
}

/// One reading per sensor per sampling interval in `[window_start,
/// window_end)`, ordered by timestamp then sensor. With probability
/// `fault_rate` a sample is replaced by ten times the metric's `max_valid`.
pub fn generate_readings(
    cfg: &FieldConfig,
    ranges: &[ValidityRange],
    window_start: u64,
    window_end: u64,
) -> Result<Vec<SensorReading>, WorkloadError> {
    if window_start >= window_end {
        return Err(WorkloadError::InvalidWindow {
            start: window_start,
            end: window_end,
        });
    }
    cfg.validate()?;
    let fault_rate = cfg.fault_rate.to_f64();
    let mut out = Vec::new();
    for (index, sensor) in cfg.sensors.iter().enumerate() {
        let mut rng = stream_rng(cfg.seed, READING_STREAM + ((index as u64) << 8), window_start);
        let Distribution::Uniform { lo, hi } = &sensor.distribution;
        let lo = lo.to_scaled(2).expect("validated");
        let span = (hi.to_scaled(2).expect("validated") - lo + 1) as u64;
        let spike = spike_for(sensor.metric, ranges);
        for t in (window_start..window_end).step_by(sensor.sampling_interval as usize) {
            let faulty = unit_f64(&mut rng) < fault_rate;
            let draw = lo + (rng.next_u64() % span) as i128;
            out.push(SensorReading {
                sensor_id: sensor.sensor_id.clone(),
                metric: sensor.metric,
                value: if faulty {
                    spike.clone()
                } else {
                    Decimal::from_scaled(draw, 2)
                },
                timestamp: t,
            });
        }
    }
    // Stable: equal timestamps keep sensor order.
    out.sort_by_key(|r| r.timestamp);
    Ok(out)
}

const OPERATIONS: [&str; 6] = [
    "sowing",
    "irrigation",
    "fertilization",
    "pruning",
    "treatment",
    "harvest",
];

#[derive(Debug, Clone, PartialEq)]
pub struct TimedOp {
    pub timestamp: u64,
    pub op: ContextOp,
}

/// The field operator's document updates for one window: product and plant
/// density at the start, one to four cultural operations, and a density
/// revision at mid-window.
pub fn generate_context_ops(
    cfg: &FieldConfig,
    window_start: u64,
    window_end: u64,
) -> Result<Vec<TimedOp>, WorkloadError> {
    if window_start >= window_end {
        return Err(WorkloadError::InvalidWindow {
            start: window_start,
            end: window_end,
        });
    }
    let mut rng = stream_rng(cfg.seed, CONTEXT_STREAM, window_start);
    let doc = cfg.doc_id();
    let key = |k: &str| PathExpr::key(k).expect("non-empty key");
    let density = |rng: &mut SplitMix64| json!(Decimal::from_scaled(100 + (rng.next_u64() % 900) as i128, 2));
    let span = window_end - window_start;

    let mut ops = vec![
        TimedOp {
            timestamp: window_start,
            op: ContextOp::update(&doc, key("Product"), json!(cfg.product.as_str())),
        },
        TimedOp {
            timestamp: window_start,
            op: ContextOp::update(&doc, key("Plant density"), density(&mut rng)),
        },
    ];
    let count = 1 + rng.next_u64() % 4;
    for _ in 0..count {
        let at = window_start + rng.next_u64() % span;
        let name = OPERATIONS[(rng.next_u64() % OPERATIONS.len() as u64) as usize];
        ops.push(TimedOp {
            timestamp: at,
            op: ContextOp::append(
                &doc,
                key(CULTURAL_OPERATIONS_KEY),
                json!({"operation": name, "timestamp": at}),
            ),
        });
    }
    ops.push(TimedOp {
        timestamp: window_start + span / 2,
        op: ContextOp::update(&doc, key("Plant density"), density(&mut rng)),
    });
    ops.sort_by_key(|o| o.timestamp);
    Ok(ops)
}

/// Counts from ingesting one window into a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub readings: u64,
    pub context_ops: u64,
    pub appended_operations: u64,
    pub blocks: u64,
}

/// Generates one window of readings and operator updates, submits them in
/// timestamp order and commits until the mempool is empty.
pub fn ingest_epoch(
    node: &mut PrivateNode,
    cfg: &FieldConfig,
    ranges: &[ValidityRange],
    window_start: u64,
    window_end: u64,
) -> Result<IngestStats, WorkloadError> {
    let readings = generate_readings(cfg, ranges, window_start, window_end)?;
    let ops = generate_context_ops(cfg, window_start, window_end)?;
    let operator = cfg.operator_id();

    let mut txs: Vec<Transaction> = readings.iter().map(|r| r.to_transaction(&cfg.channel_id)).collect();
    for op in &ops {
        txs.push(op.op.to_transaction(&cfg.channel_id, op.timestamp, &operator)?);
    }
    // Stable: readings precede operator updates sharing a timestamp.
    txs.sort_by_key(|t| t.timestamp);

    for tx in txs {
        node.submit(tx)?;
    }
    let blocks = node.commit_all()?;
    Ok(IngestStats {
        readings: readings.len() as u64,
        context_ops: ops.len() as u64,
        appended_operations: ops.iter().filter(|o| o.op.op == ContextOpKind::AppendToArray).count() as u64,
        blocks: blocks.len() as u64,
    })
}

pub fn new_field_node(cfg: &FieldConfig, batch_size: usize) -> Result<PrivateNode, WorkloadError> {
    let authors = cfg
        .sensors
        .iter()
        .map(|s| s.sensor_id.clone())
        .chain([cfg.operator_id()]);
    Ok(PrivateNode::new(&cfg.channel_id, authors, batch_size)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch_index: u64,
    pub window_start: u64,
    pub window_end: u64,
    pub generated_readings: u64,
    pub kept_readings: u64,
    pub excluded_readings: u64,
    pub context_ops: u64,
    pub appended_operations: u64,
    pub private_blocks: u64,
    pub archived_size_bytes: u64,
    pub reset_size_bytes: u64,
    pub summary: EpochSummary,
    pub summary_digest: Digest,
    pub anchor_height: Option<u64>,
    pub verification: PrunedEpochCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldReport {
    pub channel_id: String,
    pub product: Product,
    pub epochs: Vec<EpochReport>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub seq: u64,
    #[serde(flatten)]
    pub event: GatewayEvent,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicChainReport {
    pub height: u64,
    pub head_hash: Digest,
    pub confirmed_anchors: u64,
    pub registry_digest: Digest,
    pub registry_matches_ledger: bool,
    pub chain_ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub fields: Vec<FieldReport>,
    pub events: Vec<TraceEntry>,
    pub public_chain: PublicChainReport,
    pub all_verified: bool,
}

impl ScenarioReport {
    pub fn to_canonical_json(&self) -> Vec<u8> {
        canonical::to_canonical_vec(self).expect("reports hold no floats")
    }

    pub fn digest(&self) -> Digest {
        Digest::of(&self.to_canonical_json())
    }

    /// Publish-before-prune holds for every field and epoch: the confirmation
    /// of epoch k precedes the reset of epoch k in the trace.
    pub fn publish_precedes_reset(&self) -> bool {
        self.fields.iter().all(|f| {
            f.epochs.iter().all(|e| {
                let seq_of = |kind| {
                    self.events
                        .iter()
                        .find(|t| {
                            t.event.kind == kind
                                && t.event.channel_id == f.channel_id
                                && t.event.epoch_index == e.epoch_index
                        })
                        .map(|t| t.seq)
                };
                matches!(
                    (seq_of(GatewayEventKind::AnchorConfirmed), seq_of(GatewayEventKind::LedgerReset)),
                    (Some(c), Some(r)) if c < r
                )
            })
        })
    }
}

#[derive(Debug, Clone)]
pub struct ArchivedEpoch {
    pub channel_id: String,
    pub epoch_index: u64,
    pub ledger: Ledger,
}

impl ArchivedEpoch {
    pub fn file_name(&self) -> String {
        archive_file_name(&self.channel_id, self.epoch_index)
    }
}

pub fn archive_file_name(channel_id: &str, epoch_index: u64) -> String {
    format!("{channel_id}.epoch-{epoch_index}.tcgw")
}

/// Everything a run produces: the report plus the artifacts it describes.
#[derive(Debug, Clone)]
pub struct ScenarioOutcome {
    pub report: ScenarioReport,
    pub archives: Vec<ArchivedEpoch>,
    pub nodes: Vec<PrivateNode>,
    pub public: PublicChain,
}

/// Runs every field through every epoch: ingest, roll over (publish before
/// prune), then verify each pruned epoch against the public chain.
///
/// Fields ingest in parallel; rollovers reach the public chain in
/// (epoch, channel_id) order so runs are reproducible.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<ScenarioOutcome, WorkloadError> {
    cfg.validate()?;
    let mut fields: Vec<&FieldConfig> = cfg.fields.iter().collect();
    fields.sort_by(|a, b| a.channel_id.cmp(&b.channel_id));

    let mut public = PublicChain::with_validator_count(cfg.public_validators, cfg.confirmations_required)
        .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
    let mut nodes = Vec::with_capacity(fields.len());
    let mut gateways = Vec::with_capacity(fields.len());
    for f in &fields {
        public.register_gateway(&f.gateway_id());
        nodes.push(new_field_node(f, cfg.batch_size)?);
        gateways.push(
            Gateway::new(&f.gateway_id(), &f.channel_id, cfg.ranges.clone())
                .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?,
        );
    }

    let mut reports: Vec<FieldReport> = fields
        .iter()
        .map(|f| FieldReport {
            channel_id: f.channel_id.clone(),
            product: f.product,
            epochs: Vec::new(),
        })
        .collect();
    let mut archives = Vec::new();
    let mut events = Vec::new();

    for epoch in 0..cfg.epochs {
        let (start, end) = cfg.window(epoch);

        let ingested: Vec<Result<IngestStats, WorkloadError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = nodes
                .iter_mut()
                .zip(&fields)
                .map(|(node, f)| scope.spawn(move || ingest_epoch(node, f, &cfg.ranges, start, end)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("ingest worker panicked"))
                .collect()
        });

        for (i, (f, stats)) in fields.iter().zip(ingested).enumerate() {
            let stats = stats.map_err(|e| WorkloadError::step(&f.channel_id, epoch, e))?;
            let readings = nodes[i]
                .readings_in_window(start, end)
                .map_err(|e| WorkloadError::step(&f.channel_id, epoch, e))?;
            let (kept, excluded) = filter_out_of_scale(&readings, &cfg.ranges)
                .map_err(|e| WorkloadError::step(&f.channel_id, epoch, e))?;
            let archived_size = nodes[i].ledger().size_bytes();

            let before = gateways[i].events().len();
            let rollover = gateways[i]
                .rollover_epoch(&nodes[i], start, end, &mut public)
                .map_err(|e| WorkloadError::step(&f.channel_id, epoch, e))?;
            for event in &gateways[i].events()[before..] {
                events.push(TraceEntry {
                    seq: events.len() as u64,
                    event: event.clone(),
                });
            }

            reports[i].epochs.push(EpochReport {
                epoch_index: epoch,
                window_start: start,
                window_end: end,
                generated_readings: stats.readings,
                kept_readings: kept.len() as u64,
                excluded_readings: excluded.len() as u64,
                context_ops: stats.context_ops,
                appended_operations: stats.appended_operations,
                private_blocks: stats.blocks,
                archived_size_bytes: archived_size,
                reset_size_bytes: rollover.node.ledger().size_bytes(),
                summary_digest: rollover.summary.digest(),
                anchor_height: rollover.anchor.included_height,
                summary: rollover.summary,
                verification: PrunedEpochCheck {
                    ok: false,
                    failures: Vec::new(),
                },
            });
            archives.push(ArchivedEpoch {
                channel_id: f.channel_id.clone(),
                epoch_index: epoch,
                ledger: rollover.archived,
            });
            nodes[i] = rollover.node;
        }
    }

    for archive in &archives {
        let field = reports
            .iter_mut()
            .find(|r| r.channel_id == archive.channel_id)
            .expect("archive belongs to a field");
        let epoch = &mut field.epochs[archive.epoch_index as usize];
        epoch.verification = verify_pruned_epoch(&archive.ledger, &epoch.summary, &public);
    }

    let rebuilt = PublicChain::rebuild_registry(public.ledger(), public.confirmations_required())
        .map_err(|e| WorkloadError::InvalidConfig(e.to_string()))?;
    let (height, head_hash) = public.ledger().head();
    let public_chain = PublicChainReport {
        height,
        head_hash,
        confirmed_anchors: public.registry().values().flatten().filter(|r| r.confirmed).count() as u64,
        registry_digest: public.registry_digest(),
        registry_matches_ledger: PublicChain::registry_digest_of(&rebuilt) == public.registry_digest(),
        chain_ok: public.ledger().verify_chain().ok,
    };
    let all_verified = public_chain.chain_ok
        && public_chain.registry_matches_ledger
        && reports.iter().flat_map(|f| &f.epochs).all(|e| e.verification.ok);

    Ok(ScenarioOutcome {
        report: ScenarioReport {
            fields: reports,
            events,
            public_chain,
            all_verified,
        },
        archives,
        nodes,
        public,
    })
}

/// Human-readable per-epoch table.
pub fn summary_table(report: &ScenarioReport) -> String {
    let mut out = format!(
        "{:<20} {:>5} {:>9} {:>8} {:>6} {:>10} {:>12} {:>8}\n",
        "channel", "epoch", "readings", "excluded", "c.ops", "temp mean", "archived B", "verified"
    );
    for field in &report.fields {
        for e in &field.epochs {
            let temp = e
                .summary
                .stats_for(Metric::TemperatureC)
                .map_or("-".to_owned(), |s| format!("{:.3}", s.mean));
            out.push_str(&format!(
                "{:<20} {:>5} {:>9} {:>8} {:>6} {:>10} {:>12} {:>8}\n",
                field.channel_id,
                e.epoch_index,
                e.generated_readings,
                e.excluded_readings,
                e.summary.cultural_operations,
                temp,
                e.archived_size_bytes,
                if e.verification.ok { "ok" } else { "FAIL" }
            ));
        }
    }
    out.push_str(&format!(
        "public chain height {} | confirmed anchors {} | all verified: {}\n",
        report.public_chain.height, report.public_chain.confirmed_anchors, report.all_verified
    ));
    out
}

/// Summary JSON is re-exported for consumers building their own reports.
pub use gateway::summary_json;

#[cfg(test)]
mod tests {
    use super::*;

    fn field() -> FieldConfig {
        ScenarioConfig::default_five_field().fields[0].clone()
    }

    #[test]
    fn splitmix_reference_stream() {
        // First outputs of SplitMix64 seeded with 0.
        let mut rng = SplitMix64::seed_from_u64(0);
        assert_eq!(rng.next_u64(), 0xe220_a839_7b1d_cdaf);
        assert_eq!(rng.next_u64(), 0x6e78_9e6a_a1b9_65f4);
    }

    #[test]
    fn hourly_sensor_yields_24_per_day() {
        let mut cfg = field();
        cfg.sensors.truncate(1);
        let rs = generate_readings(&cfg, &default_ranges(), 0, 86_400).unwrap();
        assert_eq!(rs.len(), 24);
        assert!(rs.windows(2).all(|w| w[1].timestamp - w[0].timestamp == 3600));
    }

    #[test]
    fn same_seed_same_bytes() {
        let cfg = field();
        let a = generate_readings(&cfg, &default_ranges(), 100, 100 + 7 * 86_400).unwrap();
        let b = generate_readings(&cfg, &default_ranges(), 100, 100 + 7 * 86_400).unwrap();
        assert_eq!(
            canonical::to_canonical_vec(&a).unwrap(),
            canonical::to_canonical_vec(&b).unwrap()
        );
        let mut other = cfg.clone();
        other.seed += 1;
        assert_ne!(
            a,
            generate_readings(&other, &default_ranges(), 100, 100 + 7 * 86_400).unwrap()
        );
    }

    #[test]
    fn zero_fault_rate_excludes_nothing() {
        let mut cfg = field();
        cfg.fault_rate = "0".parse().unwrap();
        let rs = generate_readings(&cfg, &default_ranges(), 0, 30 * 86_400).unwrap();
        let (_, excluded) = filter_out_of_scale(&rs, &default_ranges()).unwrap();
        assert!(excluded.is_empty());
    }

    #[test]
    fn spikes_are_ten_times_max() {
        let mut cfg = field();
        cfg.fault_rate = "1".parse().unwrap();
        let rs = generate_readings(&cfg, &default_ranges(), 0, 3600).unwrap();
        let temp = rs.iter().find(|r| r.metric == Metric::TemperatureC).unwrap();
        assert_eq!(temp.value.as_str(), "600");
    }

    #[test]
    fn invalid_inputs() {
        assert!(matches!(
            generate_readings(&field(), &default_ranges(), 5, 5),
            Err(WorkloadError::InvalidWindow { .. })
        ));
        let mut cfg = field();
        cfg.sensors[0].sampling_interval = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = field();
        cfg.fault_rate = "1.5".parse().unwrap();
        assert!(cfg.validate().is_err());
        let mut sc = ScenarioConfig::default_five_field();
        sc.epochs = 0;
        assert!(sc.validate().is_err());
        assert!(ScenarioConfig::from_json(b"{not json").is_err());
    }

    #[test]
    fn config_json_round_trip_with_defaults() {
        let cfg = ScenarioConfig::default_five_field();
        assert_eq!(ScenarioConfig::from_json(&cfg.to_canonical_json()).unwrap(), cfg);
        let minimal = serde_json::json!({"fields": serde_json::to_value(&cfg.fields).unwrap(), "epochs": 2});
        assert_eq!(ScenarioConfig::from_json(minimal.to_string().as_bytes()).unwrap(), cfg);
    }

    #[test]
    fn context_ops_are_deterministic_and_bounded() {
        let cfg = field();
        let a = generate_context_ops(&cfg, 0, 1000).unwrap();
        assert_eq!(a, generate_context_ops(&cfg, 0, 1000).unwrap());
        let appends = a.iter().filter(|o| o.op.op == ContextOpKind::AppendToArray).count();
        assert!((1..=4).contains(&appends));
        assert!(a.iter().all(|o| (0..1000).contains(&o.timestamp)));
    }

    #[test]
    fn small_scenario_end_to_end() {
        let mut cfg = ScenarioConfig::default_five_field();
        cfg.fields.truncate(2);
        cfg.epoch_length = 3 * 86_400;
        cfg.epochs = 3;
        let out = run_scenario(&cfg).unwrap();
        assert!(out.report.all_verified, "{}", summary_table(&out.report));
        assert!(out.report.publish_precedes_reset());
        assert_eq!(out.archives.len(), 6);
        assert_eq!(out.report.public_chain.confirmed_anchors, 6);
        for f in &out.report.fields {
            for e in &f.epochs {
                assert_eq!(e.kept_readings + e.excluded_readings, e.generated_readings);
                assert!(e.reset_size_bytes < e.archived_size_bytes);
            }
            let epochs: Vec<u64> = out
                .public
                .query_channel(&f.channel_id)
                .iter()
                .map(|a| a.epoch_index)
                .collect();
            assert_eq!(epochs, [0, 1, 2]);
        }
        let again = run_scenario(&cfg).unwrap();
        assert_eq!(again.report.digest(), out.report.digest());
    }
}
