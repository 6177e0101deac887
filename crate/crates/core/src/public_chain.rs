//! Simulated public chain that stores epoch anchors.
//!
//! Validators take turns producing blocks (round-robin). An anchor counts as
//! confirmed once `confirmations_required` further blocks sit on top of the
//! block that included it. When no traffic is pending, the producer seals a
//! heartbeat block so anchors still gain depth.
//!
//! Gateways talk to the chain only through [`AnchorPublisher`] and
//! [`AnchorLookup`]; the owner of the [`PublicChain`] value serializes all
//! requests.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::canonical;
use crate::digest::Digest;
use crate::gateway::{EpochSummary, CULTURAL_OPERATIONS_KEY};
use crate::ledger::{Block, Ledger, LedgerError, Transaction, TxKind};
use crate::world_state::Document;

pub const PUBLIC_CHAIN_ID: &str = "public";
pub const DEFAULT_CONFIRMATIONS: u64 = 2;

#[derive(Debug, thiserror::Error)]
pub enum PublicChainError {
    #[error("an anchor for {channel_id} epoch {epoch_index} already exists")]
    DuplicateEpoch { channel_id: String, epoch_index: u64 },
    #[error("{0:?} is not a registered gateway")]
    UnknownGateway(String),
    #[error("anchor for {channel_id} epoch {epoch_index} was not confirmed")]
    NotConfirmed { channel_id: String, epoch_index: u64 },
    #[error("anchor rejected: {0}")]
    Rejected(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("malformed anchor transaction at height {height}: {detail}")]
    MalformedAnchor { height: u64, detail: String },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// Public record of one epoch summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRecord {
    pub channel_id: String,
    pub epoch_index: u64,
    pub summary_digest: Digest,
    pub summary: EpochSummary,
    pub submitted_by: String,
    /// Height of the including block; `None` while pending.
    pub included_height: Option<u64>,
    pub confirmed: bool,
}

/// On-chain payload of an `Anchor` transaction.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AnchorPayload {
    channel_id: String,
    epoch_index: u64,
    summary: EpochSummary,
    summary_digest: Digest,
    submitted_by: String,
}

/// Write side used by gateways.
pub trait AnchorPublisher {
    /// Queues an anchor for `summary`.
    fn submit_anchor(&mut self, summary: &EpochSummary, author: &str) -> Result<AnchorRecord, PublicChainError>;

    /// Blocks until the anchor for `(channel_id, epoch_index)` is confirmed.
    fn await_confirmation(&mut self, channel_id: &str, epoch_index: u64) -> Result<AnchorRecord, PublicChainError>;
}

/// Read side used by verifiers.
pub trait AnchorLookup {
    fn confirmed_anchor(&self, channel_id: &str, epoch_index: u64) -> Option<AnchorRecord>;
}

#[derive(Debug, Clone)]
pub struct PublicChain {
    validators: Vec<String>,
    ledger: Ledger,
    pending: Vec<Transaction>,
    confirmations_required: u64,
    registry: BTreeMap<String, Vec<AnchorRecord>>,
    gateways: BTreeSet<String>,
    producers: Vec<String>,
    clock: u64,
}

impl PublicChain {
    pub fn new(validators: Vec<String>, confirmations_required: u64) -> Result<Self, PublicChainError> {
        if validators.is_empty() {
            return Err(PublicChainError::InvalidArgument(
                "at least one validator required".into(),
            ));
        }
        if confirmations_required == 0 {
            return Err(PublicChainError::InvalidArgument(
                "confirmations_required must be positive".into(),
            ));
        }
        Ok(PublicChain {
            validators,
            ledger: Ledger::genesis(PUBLIC_CHAIN_ID, None)?,
            pending: Vec::new(),
            confirmations_required,
            registry: BTreeMap::new(),
            gateways: BTreeSet::new(),
            producers: Vec::new(),
            clock: 0,
        })
    }

    /// `count` validators named `validator-0`, `validator-1`, ...
    pub fn with_validator_count(count: usize, confirmations_required: u64) -> Result<Self, PublicChainError> {
        Self::new(
            (0..count).map(|i| format!("validator-{i}")).collect(),
            confirmations_required,
        )
    }

    /// Read-only reconstruction from a persisted ledger. The validator set is
    /// recovered from heartbeat authors; gateways from anchor authors.
    pub fn from_ledger(ledger: Ledger, confirmations_required: u64) -> Result<Self, PublicChainError> {
        let mut validators: Vec<String> = Vec::new();
        for tx in ledger.blocks().iter().flat_map(|b| &b.transactions) {
            if tx.kind == TxKind::Heartbeat && !validators.contains(&tx.author_id) {
                validators.push(tx.author_id.clone());
            }
        }
        if validators.is_empty() {
            validators.push("validator-0".into());
        }
        let registry = Self::rebuild_registry(&ledger, confirmations_required)?;
        let gateways = registry.values().flatten().map(|r| r.submitted_by.clone()).collect();
        let clock = ledger.blocks().last().map_or(0, |b| b.timestamp);
        let mut chain = PublicChain {
            validators,
            ledger,
            pending: Vec::new(),
            confirmations_required,
            registry,
            gateways,
            producers: Vec::new(),
            clock,
        };
        chain.producers = (1..chain.ledger.len() as u64)
            .map(|h| chain.producer_for(h).to_owned())
            .collect();
        Ok(chain)
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn validators(&self) -> &[String] {
        &self.validators
    }

    pub fn confirmations_required(&self) -> u64 {
        self.confirmations_required
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn register_gateway(&mut self, identity: &str) {
        self.gateways.insert(identity.to_owned());
    }

    /// Producer of each block above genesis, in height order.
    pub fn producers(&self) -> &[String] {
        &self.producers
    }

    fn producer_for(&self, height: u64) -> &str {
        &self.validators[((height - 1) % self.validators.len() as u64) as usize]
    }

    pub fn next_producer(&self) -> &str {
        self.producer_for(self.ledger.head().0 + 1)
    }

    fn is_known_epoch(&self, channel_id: &str, epoch_index: u64) -> bool {
        let in_registry = self
            .registry
            .get(channel_id)
            .is_some_and(|rs| rs.iter().any(|r| r.epoch_index == epoch_index));
        in_registry
            || self
                .pending
                .iter()
                .any(|tx| parse_anchor(tx).is_ok_and(|p| p.channel_id == channel_id && p.epoch_index == epoch_index))
    }

    /// Queues an Anchor transaction; it is included by the next produced block.
    pub fn submit_anchor(&mut self, summary: &EpochSummary, author: &str) -> Result<AnchorRecord, PublicChainError> {
        if !self.gateways.contains(author) {
            return Err(PublicChainError::UnknownGateway(author.to_owned()));
        }
        if self.is_known_epoch(&summary.channel_id, summary.epoch_index) {
            return Err(PublicChainError::DuplicateEpoch {
                channel_id: summary.channel_id.clone(),
                epoch_index: summary.epoch_index,
            });
        }
        let payload = AnchorPayload {
            channel_id: summary.channel_id.clone(),
            epoch_index: summary.epoch_index,
            summary: summary.clone(),
            summary_digest: summary.digest(),
            submitted_by: author.to_owned(),
        };
        self.clock = self.clock.max(summary.window_end);
        let bytes = canonical::to_canonical_vec(&payload).map_err(LedgerError::from)?;
        let tx = Transaction::with_payload_bytes(&summary.channel_id, self.clock, TxKind::Anchor, bytes, author);
        self.pending.push(tx);
        Ok(record_from(payload, None, false))
    }

    /// Packages every pending transaction into one block. `None` if nothing
    /// is pending.
    pub fn produce_block(&mut self) -> Option<Arc<Block>> {
        if self.pending.is_empty() {
            return None;
        }
        let txs = std::mem::take(&mut self.pending);
        Some(self.seal(txs))
    }

    /// Seals a block holding only the producer's heartbeat.
    pub fn produce_heartbeat_block(&mut self) -> Arc<Block> {
        let height = self.ledger.head().0 + 1;
        let producer = self.next_producer().to_owned();
        let tx = Transaction::new(
            PUBLIC_CHAIN_ID,
            self.clock,
            TxKind::Heartbeat,
            &json!({"height": height, "producer": producer}),
            &producer,
        )
        .expect("heartbeat payload is canonical");
        self.seal(vec![tx])
    }

    fn seal(&mut self, txs: Vec<Transaction>) -> Arc<Block> {
        let producer = self.next_producer().to_owned();
        let block = self
            .ledger
            .append_block(txs, self.clock)
            .expect("public chain only seals transactions it built");
        self.producers.push(producer);
        for tx in block.transactions.iter().filter(|t| t.kind == TxKind::Anchor) {
            let payload = parse_anchor(tx).expect("anchor payloads are built locally");
            self.registry
                .entry(payload.channel_id.clone())
                .or_default()
                .push(record_from(payload, Some(block.height), false));
        }
        self.refresh_confirmations();
        block
    }

    fn refresh_confirmations(&mut self) {
        let head = self.ledger.head().0;
        let depth = self.confirmations_required;
        for record in self.registry.values_mut().flatten() {
            record.confirmed = record.included_height.is_some_and(|h| head >= h + depth);
        }
    }

    /// Confirmed anchors for a channel in epoch order.
    pub fn query_channel(&self, channel_id: &str) -> Vec<AnchorRecord> {
        let mut records: Vec<AnchorRecord> = self
            .registry
            .get(channel_id)
            .map(|rs| rs.iter().filter(|r| r.confirmed).cloned().collect())
            .unwrap_or_default();
        records.sort_by_key(|r| r.epoch_index);
        records
    }

    pub fn channels(&self) -> impl Iterator<Item = &str> {
        self.registry.keys().map(String::as_str)
    }

    /// Every included anchor (confirmed or not), by channel then inclusion order.
    pub fn registry(&self) -> &BTreeMap<String, Vec<AnchorRecord>> {
        &self.registry
    }

    /// Rebuilds the registry purely from the ledger's Anchor transactions.
    pub fn rebuild_registry(
        ledger: &Ledger,
        confirmations_required: u64,
    ) -> Result<BTreeMap<String, Vec<AnchorRecord>>, PublicChainError> {
        let head = ledger.head().0;
        let mut registry: BTreeMap<String, Vec<AnchorRecord>> = BTreeMap::new();
        for block in ledger.blocks() {
            for tx in block.transactions.iter().filter(|t| t.kind == TxKind::Anchor) {
                let payload = parse_anchor(tx).map_err(|detail| PublicChainError::MalformedAnchor {
                    height: block.height,
                    detail,
                })?;
                let confirmed = head >= block.height + confirmations_required;
                registry
                    .entry(payload.channel_id.clone())
                    .or_default()
                    .push(record_from(payload, Some(block.height), confirmed));
            }
        }
        Ok(registry)
    }

    pub fn registry_digest_of(registry: &BTreeMap<String, Vec<AnchorRecord>>) -> Digest {
        Digest::of(&canonical::to_canonical_vec(registry).expect("registry serializes"))
    }

    pub fn registry_digest(&self) -> Digest {
        Self::registry_digest_of(&self.registry)
    }

    /// Consumer-facing view of a channel: its confirmed epoch summaries and,
    /// if the in-progress document is supplied, its current fields.
    pub fn trace_product(&self, channel_id: &str, document: Option<&Document>) -> Value {
        let anchors = self.query_channel(channel_id);
        let anchored: u64 = anchors.iter().map(|a| a.summary.cultural_operations).sum();
        let in_progress = document
            .and_then(|d| d.body.get(CULTURAL_OPERATIONS_KEY))
            .and_then(Value::as_array)
            .map_or(0, |ops| ops.len() as u64);
        let document_view = document.map(|d| {
            let fields: Map<String, Value> = d
                .body
                .iter()
                .filter(|(k, _)| k.as_str() != CULTURAL_OPERATIONS_KEY)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            json!({"doc_id": d.doc_id, "fields": fields})
        });
        let summaries: Vec<Value> = anchors
            .iter()
            .map(|a| {
                json!({
                    "epoch_index": a.epoch_index,
                    "included_height": a.included_height,
                    "summary_digest": a.summary_digest,
                    "summary": a.summary,
                })
            })
            .collect();
        json!({
            "channel_id": channel_id,
            "summaries": summaries,
            "cultural_operations": {
                "anchored": anchored,
                "in_progress": in_progress,
                "total": anchored + in_progress,
            },
            "document": document_view,
        })
    }
}

fn parse_anchor(tx: &Transaction) -> Result<AnchorPayload, String> {
    let payload: AnchorPayload = serde_json::from_slice(&tx.payload).map_err(|e| e.to_string())?;
    if payload.summary_digest != payload.summary.digest() {
        return Err("summary digest does not match embedded summary".into());
    }
    if payload.channel_id != payload.summary.channel_id || payload.epoch_index != payload.summary.epoch_index {
        return Err("anchor key disagrees with embedded summary".into());
    }
    if payload.submitted_by != tx.author_id {
        return Err("submitter differs from transaction author".into());
    }
    Ok(payload)
}

fn record_from(payload: AnchorPayload, included_height: Option<u64>, confirmed: bool) -> AnchorRecord {
    AnchorRecord {
        channel_id: payload.channel_id,
        epoch_index: payload.epoch_index,
        summary_digest: payload.summary_digest,
        summary: payload.summary,
        submitted_by: payload.submitted_by,
        included_height,
        confirmed,
    }
}

impl AnchorPublisher for PublicChain {
    fn submit_anchor(&mut self, summary: &EpochSummary, author: &str) -> Result<AnchorRecord, PublicChainError> {
        PublicChain::submit_anchor(self, summary, author)
    }

    fn await_confirmation(&mut self, channel_id: &str, epoch_index: u64) -> Result<AnchorRecord, PublicChainError> {
        let not_confirmed = || PublicChainError::NotConfirmed {
            channel_id: channel_id.to_owned(),
            epoch_index,
        };
        // Inclusion takes one block, confirmation `confirmations_required` more.
        for _ in 0..=self.confirmations_required + 1 {
            let record = self
                .registry
                .get(channel_id)
                .and_then(|rs| rs.iter().find(|r| r.epoch_index == epoch_index));
            match record {
                Some(r) if r.confirmed => return Ok(r.clone()),
                Some(_) => {}
                None if self.pending.is_empty() => return Err(not_confirmed()),
                None => {}
            }
            if self.produce_block().is_none() {
                self.produce_heartbeat_block();
            }
        }
        Err(not_confirmed())
    }
}

impl AnchorLookup for PublicChain {
    fn confirmed_anchor(&self, channel_id: &str, epoch_index: u64) -> Option<AnchorRecord> {
        self.registry
            .get(channel_id)?
            .iter()
            .find(|r| r.epoch_index == epoch_index && r.confirmed)
            .cloned()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{MetricStats, ValidityRange};
    use crate::private_chain::Metric;
    use crate::world_state::{ContextOp, PathExpr, WorldState};

    fn summary(channel: &str, epoch: u64) -> EpochSummary {
        EpochSummary {
            channel_id: channel.into(),
            epoch_index: epoch,
            window_start: epoch * 100,
            window_end: (epoch + 1) * 100,
            ranges: vec![
                ValidityRange::new(Metric::TemperatureC, "-20".parse().unwrap(), "60".parse().unwrap()).unwrap(),
            ],
            stats: vec![MetricStats {
                metric: Metric::TemperatureC,
                count: 3,
                mean: 20.0,
                std_dev: 8.0,
                min: "10".parse().unwrap(),
                max: "30".parse().unwrap(),
            }],
            excluded_count: 0,
            cultural_operations: 2,
            ledger_head_hash: Digest::of(channel.as_bytes()),
            ledger_height: 3,
            state_digest: Digest::of(b""),
        }
    }

    fn chain() -> PublicChain {
        let mut c = PublicChain::with_validator_count(3, 2).unwrap();
        c.register_gateway("gw-a");
        c.register_gateway("gw-b");
        c
    }

    #[test]
    fn submit_rules() {
        let mut c = chain();
        let rec = c.submit_anchor(&summary("fieldA", 0), "gw-a").unwrap();
        assert_eq!((rec.included_height, rec.confirmed), (None, false));
        assert!(matches!(
            c.submit_anchor(&summary("fieldA", 0), "gw-a"),
            Err(PublicChainError::DuplicateEpoch { .. })
        ));
        assert!(matches!(
            c.submit_anchor(&summary("fieldA", 1), "mallory"),
            Err(PublicChainError::UnknownGateway(_))
        ));
        c.produce_block().unwrap();
        assert!(matches!(
            c.submit_anchor(&summary("fieldA", 0), "gw-b"),
            Err(PublicChainError::DuplicateEpoch { .. })
        ));
    }

    #[test]
    fn confirmation_depth() {
        let mut c = chain();
        c.submit_anchor(&summary("fieldA", 0), "gw-a").unwrap();
        let included = c.produce_block().unwrap().height;
        assert!(c.query_channel("fieldA").is_empty());
        c.produce_heartbeat_block();
        assert!(c.query_channel("fieldA").is_empty());
        c.produce_heartbeat_block();
        let confirmed = c.query_channel("fieldA");
        assert_eq!(confirmed.len(), 1);
        assert_eq!(confirmed[0].included_height, Some(included));
        assert!(c.confirmed_anchor("fieldA", 0).is_some());
    }

    #[test]
    fn empty_pending_produces_nothing() {
        let mut c = chain();
        let head = c.ledger().head();
        assert!(c.produce_block().is_none());
        assert_eq!(c.ledger().head(), head);
    }

    #[test]
    fn round_robin_producers() {
        let mut c = chain();
        for i in 0..7 {
            if i % 2 == 0 {
                c.submit_anchor(&summary("fieldA", i), "gw-a").unwrap();
                c.produce_block().unwrap();
            } else {
                c.produce_heartbeat_block();
            }
        }
        let expected: Vec<String> = (0..7).map(|i| format!("validator-{}", i % 3)).collect();
        assert_eq!(c.producers(), &expected[..]);
    }

    #[test]
    fn await_confirms_and_registry_rebuilds() {
        let mut c = chain();
        c.submit_anchor(&summary("fieldA", 0), "gw-a").unwrap();
        let rec = AnchorPublisher::await_confirmation(&mut c, "fieldA", 0).unwrap();
        assert!(rec.confirmed);
        assert!(c.ledger().verify_chain().ok);
        let rebuilt = PublicChain::rebuild_registry(c.ledger(), 2).unwrap();
        assert_eq!(PublicChain::registry_digest_of(&rebuilt), c.registry_digest());
        assert!(matches!(
            AnchorPublisher::await_confirmation(&mut c, "fieldB", 0),
            Err(PublicChainError::NotConfirmed { .. })
        ));

        let reloaded = PublicChain::from_ledger(Ledger::from_bytes(&c.ledger().to_bytes()).unwrap(), 2).unwrap();
        assert_eq!(reloaded.registry_digest(), c.registry_digest());
        assert_eq!(reloaded.query_channel("fieldA"), c.query_channel("fieldA"));
    }

    #[test]
    fn trace_views() {
        let mut c = chain();
        let empty = c.trace_product("fieldA", None);
        assert_eq!(empty["summaries"], json!([]));
        assert_eq!(empty["cultural_operations"]["total"], json!(0));

        c.submit_anchor(&summary("fieldA", 0), "gw-a").unwrap();
        AnchorPublisher::await_confirmation(&mut c, "fieldA", 0).unwrap();

        let mut ws = WorldState::new();
        for i in 0..4 {
            ws.apply(&ContextOp::append(
                "lot",
                PathExpr::key(CULTURAL_OPERATIONS_KEY).unwrap(),
                json!({"n": i}),
            ))
            .unwrap();
        }
        ws.apply(&ContextOp::update(
            "lot",
            PathExpr::key("Plant density").unwrap(),
            json!("4.5"),
        ))
        .unwrap();
        let trace = c.trace_product("fieldA", ws.read_document("lot"));
        assert_eq!(trace["cultural_operations"]["in_progress"], json!(4));
        assert_eq!(trace["cultural_operations"]["anchored"], json!(2));
        assert_eq!(trace["document"]["fields"]["Plant density"], json!("4.5"));
        let stats = &trace["summaries"][0]["summary"]["stats"][0];
        assert_eq!(stats["metric"], json!("temperature_c"));
        assert_eq!(stats["mean"], json!("20"));
        assert!(canonical::canonical_json(&trace).is_ok());
    }
}
