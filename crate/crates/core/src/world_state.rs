//! Schema-free JSON document store driven by ledger transactions.
//!
//! Two operations cover every write: [`ContextOpKind::UpdateField`] upserts a
//! value at a key path, [`ContextOpKind::AppendToArray`] pushes onto an array
//! at a key path. Documents and intermediate objects spring into existence on
//! first touch, so new record shapes need no registration.

use std::collections::BTreeMap;

use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{Map, Value};

use crate::canonical::{self, CanonicalError};
use crate::digest::Digest;
use crate::ledger::{Ledger, LedgerError, Transaction, TxKind};

pub use crate::canonical::canonical_json;

#[derive(Debug, thiserror::Error)]
pub enum WorldStateError {
    #[error(
        "path {path:?} in document {doc_id:?} crosses a non-object or appends to a non-array at segment {segment}"
    )]
    PathTypeConflict {
        doc_id: String,
        path: Vec<String>,
        segment: usize,
    },
    #[error("invalid path: {0}")]
    InvalidPath(String),
    #[error(transparent)]
    Value(#[from] CanonicalError),
    #[error("transaction payload is not a context operation: {0}")]
    InvalidPayload(String),
    #[error("replay failed at height {height}, transaction {index}: {source}")]
    Replay {
        height: u64,
        index: usize,
        #[source]
        source: Box<WorldStateError>,
    },
    #[error(transparent)]
    Ledger(#[from] LedgerError),
}

/// A non-empty list of non-empty object keys.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct PathExpr(Vec<String>);

impl PathExpr {
    pub fn new<S: Into<String>>(segments: impl IntoIterator<Item = S>) -> Result<Self, WorldStateError> {
        let segments: Vec<String> = segments.into_iter().map(Into::into).collect();
        if segments.is_empty() {
            return Err(WorldStateError::InvalidPath("path has no segments".into()));
        }
        if segments.iter().any(String::is_empty) {
            return Err(WorldStateError::InvalidPath("empty path segment".into()));
        }
        Ok(PathExpr(segments))
    }

    /// Single-key path.
    pub fn key(key: &str) -> Result<Self, WorldStateError> {
        Self::new([key])
    }

    pub fn segments(&self) -> &[String] {
        &self.0
    }
}

impl<'de> Deserialize<'de> for PathExpr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let segments = Vec::<String>::deserialize(deserializer)?;
        PathExpr::new(segments).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ContextOpKind {
    UpdateField,
    AppendToArray,
}

impl ContextOpKind {
    pub fn tx_kind(self) -> TxKind {
        match self {
            ContextOpKind::UpdateField => TxKind::UpdateField,
            ContextOpKind::AppendToArray => TxKind::AppendToArray,
        }
    }
}

/// Payload of an `UpdateField` / `AppendToArray` transaction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContextOp {
    pub op: ContextOpKind,
    pub doc_id: String,
    pub path: PathExpr,
    pub value: Value,
}

impl ContextOp {
    pub fn update(doc_id: &str, path: PathExpr, value: Value) -> Self {
        ContextOp {
            op: ContextOpKind::UpdateField,
            doc_id: doc_id.to_owned(),
            path,
            value,
        }
    }

    pub fn append(doc_id: &str, path: PathExpr, value: Value) -> Self {
        ContextOp {
            op: ContextOpKind::AppendToArray,
            doc_id: doc_id.to_owned(),
            path,
            value,
        }
    }

    pub fn to_transaction(
        &self,
        channel_id: &str,
        timestamp: u64,
        author_id: &str,
    ) -> Result<Transaction, WorldStateError> {
        let payload = canonical::to_canonical_vec(self)?;
        Ok(Transaction::with_payload_bytes(
            channel_id,
            timestamp,
            self.op.tx_kind(),
            payload,
            author_id,
        ))
    }

    /// Parses the payload of a context-op transaction; the embedded op must
    /// agree with the transaction kind.
    pub fn from_transaction(tx: &Transaction) -> Result<Self, WorldStateError> {
        let op: ContextOp =
            serde_json::from_slice(&tx.payload).map_err(|e| WorldStateError::InvalidPayload(e.to_string()))?;
        if op.op.tx_kind() != tx.kind {
            return Err(WorldStateError::InvalidPayload(format!(
                "payload op {:?} under a {:?} transaction",
                op.op, tx.kind
            )));
        }
        if op.doc_id.is_empty() {
            return Err(WorldStateError::InvalidPayload("empty doc_id".into()));
        }
        Ok(op)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub body: Map<String, Value>,
}

impl Document {
    pub fn get(&self, path: &PathExpr) -> Option<&Value> {
        let (first, rest) = path.segments().split_first()?;
        rest.iter()
            .try_fold(self.body.get(first)?, |value, seg| value.as_object()?.get(seg))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    docs: BTreeMap<String, Document>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Pure form of [`WorldState::apply`].
    pub fn apply_op(&self, op: &ContextOp) -> Result<WorldState, WorldStateError> {
        let mut next = self.clone();
        next.apply(op)?;
        Ok(next)
    }

    /// Applies `op` in place. On error the state is unchanged.
    pub fn apply(&mut self, op: &ContextOp) -> Result<(), WorldStateError> {
        if op.doc_id.is_empty() {
            return Err(WorldStateError::InvalidPayload("empty doc_id".into()));
        }
        canonical::canonical_json(&op.value)?;
        let mut body = self.docs.get(&op.doc_id).map(|d| d.body.clone()).unwrap_or_default();
        apply_to_body(&mut body, op)?;
        self.docs.insert(
            op.doc_id.clone(),
            Document {
                doc_id: op.doc_id.clone(),
                body,
            },
        );
        Ok(())
    }

    pub fn read_document(&self, doc_id: &str) -> Option<&Document> {
        self.docs.get(doc_id)
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Digest over documents in `doc_id` order; each entry hashes the
    /// length-prefixed id followed by the canonical body.
    pub fn state_digest(&self) -> Digest {
        let mut entries = Vec::with_capacity(self.docs.len() * 32);
        for (doc_id, doc) in &self.docs {
            let body =
                canonical::canonical_json(&Value::Object(doc.body.clone())).expect("bodies are validated on write");
            let len = (doc_id.len() as u64).to_be_bytes();
            entries.extend_from_slice(&Digest::of_parts([&len[..], doc_id.as_bytes(), &body]).0);
        }
        Digest::of(&entries)
    }

    /// Rebuilds the state by applying every context op in ledger order.
    pub fn replay(ledger: &Ledger) -> Result<WorldState, WorldStateError> {
        let mut state = WorldState::new();
        for block in ledger.blocks() {
            for (index, tx) in block.transactions.iter().enumerate() {
                if !tx.kind.is_context_op() {
                    continue;
                }
                ContextOp::from_transaction(tx)
                    .and_then(|op| state.apply(&op))
                    .map_err(|source| WorldStateError::Replay {
                        height: block.height,
                        index,
                        source: Box::new(source),
                    })?;
            }
        }
        Ok(state)
    }
}

fn apply_to_body(body: &mut Map<String, Value>, op: &ContextOp) -> Result<(), WorldStateError> {
    let conflict = |segment: usize| WorldStateError::PathTypeConflict {
        doc_id: op.doc_id.clone(),
        path: op.path.segments().to_vec(),
        segment,
    };
    let (last, parents) = op.path.segments().split_last().expect("non-empty path");
    let mut cursor = body;
    for (i, seg) in parents.iter().enumerate() {
        let slot = cursor.entry(seg.clone()).or_insert_with(|| Value::Object(Map::new()));
        cursor = slot.as_object_mut().ok_or_else(|| conflict(i))?;
    }
    match op.op {
        ContextOpKind::UpdateField => {
            cursor.insert(last.clone(), op.value.clone());
        }
        ContextOpKind::AppendToArray => {
            let slot = cursor.entry(last.clone()).or_insert_with(|| Value::Array(Vec::new()));
            slot.as_array_mut()
                .ok_or_else(|| conflict(parents.len()))?
                .push(op.value.clone());
        }
    }
    Ok(())
}
