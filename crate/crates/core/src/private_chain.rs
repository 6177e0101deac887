//! Permissioned, single-orderer chain for one field.
//!
//! A [`PrivateNode`] accepts transactions only from its authorized sensors and
//! operators, orders them FIFO into blocks of at most `batch_size`, and keeps
//! the world state in step with the ledger. At the end of an epoch the gateway
//! replaces it with a fresh node whose genesis commits to the published anchor.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::canonical;
use crate::decimal::Decimal;
use crate::digest::Digest;
use crate::ledger::{Block, Ledger, LedgerError, Transaction, TxKind};
use crate::world_state::{ContextOp, WorldState, WorldStateError};

pub const DEFAULT_BATCH_SIZE: usize = 100;

#[derive(Debug, thiserror::Error)]
pub enum PrivateChainError {
    #[error("transaction for channel {got:?} submitted to {expected:?}")]
    WrongChannel { expected: String, got: String },
    #[error("author {0:?} is not authorized on this channel")]
    UnauthorizedAuthor(String),
    #[error("transaction {0} already submitted")]
    DuplicateTransaction(Digest),
    #[error("transaction id or payload encoding is invalid")]
    InvalidTransaction,
    #[error("invalid payload: {0}")]
    InvalidPayload(String),
    #[error("{0} transactions still pending")]
    NonEmptyMempool(usize),
    #[error("window [{from}, {to}) is empty")]
    InvalidWindow { from: u64, to: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("context operation {index} of the batch failed: {source}")]
    ContextOp {
        index: usize,
        #[source]
        source: WorldStateError,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    TemperatureC,
    HumidityPct,
    RainPct,
    WindSpeedMs,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::TemperatureC,
        Metric::HumidityPct,
        Metric::RainPct,
        Metric::WindSpeedMs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::TemperatureC => "temperature_c",
            Metric::HumidityPct => "humidity_pct",
            Metric::RainPct => "rain_pct",
            Metric::WindSpeedMs => "wind_speed_ms",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One sample from a field sensor. Carried verbatim as a `RawReading` payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorReading {
    pub sensor_id: String,
    pub metric: Metric,
    pub value: Decimal,
    pub timestamp: u64,
}

impl SensorReading {
    pub fn to_transaction(&self, channel_id: &str) -> Transaction {
        let payload = canonical::to_canonical_vec(self).expect("readings hold no floats");
        Transaction::with_payload_bytes(channel_id, self.timestamp, TxKind::RawReading, payload, &self.sensor_id)
    }

    pub fn from_transaction(tx: &Transaction) -> Result<Self, PrivateChainError> {
        if tx.kind != TxKind::RawReading {
            return Err(PrivateChainError::InvalidPayload(format!(
                "{:?} is not a reading",
                tx.kind
            )));
        }
        serde_json::from_slice(&tx.payload).map_err(|e| PrivateChainError::InvalidPayload(e.to_string()))
    }
}

/// All `RawReading`s in `ledger` with `from <= timestamp < to`, in commit order.
pub fn readings_in_window(ledger: &Ledger, from: u64, to: u64) -> Result<Vec<SensorReading>, PrivateChainError> {
    if from >= to {
        return Err(PrivateChainError::InvalidWindow { from, to });
    }
    let mut out = Vec::new();
    for block in ledger.blocks() {
        for tx in block.transactions.iter().filter(|t| t.kind == TxKind::RawReading) {
            let reading = SensorReading::from_transaction(tx)?;
            if (from..to).contains(&reading.timestamp) {
                out.push(reading);
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct PrivateNode {
    channel_id: String,
    ledger: Ledger,
    state: WorldState,
    mempool: VecDeque<Transaction>,
    authorized_authors: BTreeSet<String>,
    batch_size: usize,
    clock: u64,
    known_ids: HashSet<Digest>,
}

impl PrivateNode {
    pub fn new<S: Into<String>>(
        channel_id: &str,
        authorized_authors: impl IntoIterator<Item = S>,
        batch_size: usize,
    ) -> Result<Self, PrivateChainError> {
        if batch_size == 0 {
            return Err(PrivateChainError::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(PrivateNode {
            channel_id: channel_id.to_owned(),
            ledger: Ledger::genesis(channel_id, None)?,
            state: WorldState::new(),
            mempool: VecDeque::new(),
            authorized_authors: authorized_authors.into_iter().map(Into::into).collect(),
            batch_size,
            clock: 0,
            known_ids: HashSet::new(),
        })
    }

    pub fn channel_id(&self) -> &str {
        &self.channel_id
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn state(&self) -> &WorldState {
        &self.state
    }

    pub fn mempool_len(&self) -> usize {
        self.mempool.len()
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }

    pub fn authorized_authors(&self) -> &BTreeSet<String> {
        &self.authorized_authors
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    /// Moves the simulated clock forward; it never runs backwards.
    pub fn advance_clock(&mut self, now: u64) {
        self.clock = self.clock.max(now);
    }

    /// Admits `tx` to the mempool.
    pub fn submit(&mut self, tx: Transaction) -> Result<(), PrivateChainError> {
        if tx.channel_id != self.channel_id {
            return Err(PrivateChainError::WrongChannel {
                expected: self.channel_id.clone(),
                got: tx.channel_id,
            });
        }
        if !self.authorized_authors.contains(&tx.author_id) {
            return Err(PrivateChainError::UnauthorizedAuthor(tx.author_id));
        }
        if !tx.is_valid() {
            return Err(PrivateChainError::InvalidTransaction);
        }
        match tx.kind {
            TxKind::RawReading => {
                SensorReading::from_transaction(&tx)?;
            }
            TxKind::UpdateField | TxKind::AppendToArray => {
                ContextOp::from_transaction(&tx).map_err(|e| PrivateChainError::InvalidPayload(e.to_string()))?;
            }
            TxKind::Anchor | TxKind::Heartbeat => {
                return Err(PrivateChainError::InvalidPayload(format!(
                    "{:?} transactions belong on the public chain",
                    tx.kind
                )));
            }
        }
        if !self.known_ids.insert(tx.tx_id) {
            return Err(PrivateChainError::DuplicateTransaction(tx.tx_id));
        }
        self.advance_clock(tx.timestamp);
        self.mempool.push_back(tx);
        Ok(())
    }

    /// Orders up to `batch_size` pending transactions into one block. Returns
    /// `None` when nothing is pending. If a context op in the batch fails,
    /// nothing is committed and the mempool is left as it was.
    pub fn commit_batch(&mut self) -> Result<Option<Arc<Block>>, PrivateChainError> {
        if self.mempool.is_empty() {
            return Ok(None);
        }
        let take = self.batch_size.min(self.mempool.len());
        let batch: Vec<Transaction> = self.mempool.iter().take(take).cloned().collect();

        let mut next_state = self.state.clone();
        for (index, tx) in batch.iter().enumerate().filter(|(_, t)| t.kind.is_context_op()) {
            ContextOp::from_transaction(tx)
                .and_then(|op| next_state.apply(&op))
                .map_err(|source| PrivateChainError::ContextOp { index, source })?;
        }

        let timestamp = self.clock.max(self.ledger.blocks().last().map_or(0, |b| b.timestamp));
        let block = self.ledger.append_block(batch, timestamp)?;
        self.mempool.drain(..take);
        self.state = next_state;
        Ok(Some(block))
    }

    /// Commits until the mempool is empty.
    pub fn commit_all(&mut self) -> Result<Vec<Arc<Block>>, PrivateChainError> {
        let mut blocks = Vec::new();
        while let Some(block) = self.commit_batch()? {
            blocks.push(block);
        }
        Ok(blocks)
    }

    /// Discards everything pending and returns it.
    pub fn drop_pending(&mut self) -> Vec<Transaction> {
        let dropped: Vec<Transaction> = self.mempool.drain(..).collect();
        for tx in &dropped {
            self.known_ids.remove(&tx.tx_id);
        }
        dropped
    }

    /// A fresh node for the same channel and authors whose genesis commits to
    /// `anchor`. `self` (and its ledger) is left for the caller to archive.
    pub fn reset_with_anchor(&self, anchor: Digest) -> Result<PrivateNode, PrivateChainError> {
        if !self.mempool.is_empty() {
            return Err(PrivateChainError::NonEmptyMempool(self.mempool.len()));
        }
        Ok(PrivateNode {
            channel_id: self.channel_id.clone(),
            ledger: Ledger::genesis(&self.channel_id, Some(anchor))?,
            state: WorldState::new(),
            mempool: VecDeque::new(),
            authorized_authors: self.authorized_authors.clone(),
            batch_size: self.batch_size,
            clock: self.clock,
            known_ids: HashSet::new(),
        })
    }

    pub fn readings_in_window(&self, from: u64, to: u64) -> Result<Vec<SensorReading>, PrivateChainError> {
        readings_in_window(&self.ledger, from, to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world_state::PathExpr;
    use serde_json::json;

    fn reading(sensor: &str, t: u64, v: &str) -> SensorReading {
        SensorReading {
            sensor_id: sensor.into(),
            metric: Metric::TemperatureC,
            value: v.parse().unwrap(),
            timestamp: t,
        }
    }

    fn node() -> PrivateNode {
        PrivateNode::new("fieldA", ["s1", "s2", "operator"], DEFAULT_BATCH_SIZE).unwrap()
    }

    #[test]
    fn metric_names() {
        for m in Metric::ALL {
            assert_eq!(serde_json::to_value(m).unwrap(), json!(m.as_str()));
        }
    }

    #[test]
    fn submit_accepts_authorized_reading() {
        let mut n = node();
        n.submit(reading("s1", 10, "21.5").to_transaction("fieldA")).unwrap();
        assert_eq!(n.mempool_len(), 1);
    }

    #[test]
    fn submit_rejections() {
        let mut n = node();
        let tx = reading("s1", 10, "21.5").to_transaction("fieldA");
        n.submit(tx.clone()).unwrap();
        assert!(matches!(n.submit(tx), Err(PrivateChainError::DuplicateTransaction(_))));
        assert!(matches!(
            n.submit(reading("intruder", 11, "1").to_transaction("fieldA")),
            Err(PrivateChainError::UnauthorizedAuthor(a)) if a == "intruder"
        ));
        assert!(matches!(
            n.submit(reading("s1", 12, "1").to_transaction("fieldB")),
            Err(PrivateChainError::WrongChannel { .. })
        ));
        let mut forged = reading("s1", 13, "1").to_transaction("fieldA");
        forged.payload[2] ^= 1;
        assert!(matches!(n.submit(forged), Err(PrivateChainError::InvalidTransaction)));
        let junk = Transaction::new("fieldA", 14, TxKind::RawReading, &json!({"x": 1}), "s1").unwrap();
        assert!(matches!(n.submit(junk), Err(PrivateChainError::InvalidPayload(_))));
        let anchor = Transaction::new("fieldA", 14, TxKind::Anchor, &json!({}), "s1").unwrap();
        assert!(matches!(n.submit(anchor), Err(PrivateChainError::InvalidPayload(_))));
        assert_eq!(n.mempool_len(), 1);
    }

    #[test]
    fn fifo_batches() {
        let mut n = node();
        for t in 0..250 {
            n.submit(reading("s1", t, "20").to_transaction("fieldA")).unwrap();
        }
        let sizes: Vec<usize> = n.commit_all().unwrap().iter().map(|b| b.transactions.len()).collect();
        assert_eq!(sizes, [100, 100, 50]);
        let times: Vec<u64> = n
            .ledger()
            .blocks()
            .iter()
            .flat_map(|b| b.transactions.iter().map(|t| t.timestamp))
            .collect();
        assert_eq!(times, (0..250).collect::<Vec<_>>());
        assert!(n.ledger().verify_chain().ok);
    }

    #[test]
    fn empty_commit_is_noop() {
        let mut n = node();
        let before = n.ledger().head();
        assert!(n.commit_batch().unwrap().is_none());
        assert_eq!(n.ledger().head(), before);
    }

    #[test]
    fn state_tracks_replay() {
        let mut n = node();
        let ops = [
            ContextOp::update("lot1", PathExpr::key("Plant density").unwrap(), json!("4.2")),
            ContextOp::append(
                "lot1",
                PathExpr::key("Cultural Operations").unwrap(),
                json!({"op": "sowing"}),
            ),
        ];
        for (i, op) in ops.iter().enumerate() {
            n.submit(op.to_transaction("fieldA", i as u64, "operator").unwrap())
                .unwrap();
            n.submit(reading("s2", i as u64, "18").to_transaction("fieldA"))
                .unwrap();
            n.commit_batch().unwrap();
            let replayed = WorldState::replay(n.ledger()).unwrap();
            assert_eq!(replayed.state_digest(), n.state().state_digest());
        }
        assert!(n.state().read_document("lot1").is_some());
    }

    #[test]
    fn failing_context_op_blocks_commit() {
        let mut n = node();
        let key = PathExpr::key("k").unwrap();
        n.submit(
            ContextOp::update("d", key.clone(), json!("s"))
                .to_transaction("fieldA", 1, "operator")
                .unwrap(),
        )
        .unwrap();
        n.submit(
            ContextOp::append("d", key, json!("t"))
                .to_transaction("fieldA", 2, "operator")
                .unwrap(),
        )
        .unwrap();
        let head = n.ledger().head();
        assert!(matches!(
            n.commit_batch(),
            Err(PrivateChainError::ContextOp { index: 1, .. })
        ));
        assert_eq!(n.ledger().head(), head);
        assert_eq!(n.mempool_len(), 2);
        assert_eq!(n.drop_pending().len(), 2);
        assert!(n.commit_batch().unwrap().is_none());
    }

    #[test]
    fn reset_semantics() {
        let mut n = node();
        n.submit(reading("s1", 5, "20").to_transaction("fieldA")).unwrap();
        let anchor = Digest::of(b"summary");
        assert!(matches!(
            n.reset_with_anchor(anchor),
            Err(PrivateChainError::NonEmptyMempool(1))
        ));
        n.commit_all().unwrap();
        let archived = n.ledger().clone();
        let fresh = n.reset_with_anchor(anchor).unwrap();
        assert_eq!(fresh.ledger().len(), 1);
        assert_eq!(fresh.ledger().genesis_anchor(), Some(anchor));
        assert!(fresh.state().is_empty());
        assert_eq!(fresh.authorized_authors(), n.authorized_authors());
        assert!(archived.verify_chain().ok);
        assert_eq!(n.ledger(), &archived);

        let mut fresh = fresh;
        fresh.submit(reading("s1", 6, "21").to_transaction("fieldA")).unwrap();
    }

    #[test]
    fn window_is_half_open() {
        let mut n = node();
        for t in [99, 100, 150, 200] {
            n.submit(reading("s1", t, "20").to_transaction("fieldA")).unwrap();
        }
        n.commit_all().unwrap();
        let got: Vec<u64> = n
            .readings_in_window(100, 200)
            .unwrap()
            .iter()
            .map(|r| r.timestamp)
            .collect();
        assert_eq!(got, [100, 150]);
        assert!(matches!(
            n.readings_in_window(5, 5),
            Err(PrivateChainError::InvalidWindow { .. })
        ));
        assert!(node().readings_in_window(0, 10).unwrap().is_empty());
    }
}
