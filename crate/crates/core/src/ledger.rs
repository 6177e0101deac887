//! Append-only, hash-linked chain of blocks.
//!
//! Both tiers use this: each private channel keeps one [`Ledger`] per epoch
//! and the public chain keeps a single one. A [`Ledger`] never loses or
//! rewrites a block; resetting a private channel builds a fresh ledger whose
//! genesis points at the anchor of its predecessor.
//!
//! # Binary format
//!
//! Every integer is an 8-byte big-endian `u64` except the one-byte kind tag.
//! Strings and payloads are prefixed with their byte length; digests are raw
//! 32 bytes. A block is
//!
//! ```text
//! height u64 | previous_hash | timestamp u64 | tx_root | block_hash | tx_count u64 | tx*
//! tx = tx_id | channel_id | timestamp u64 | kind u8 | payload | author_id
//! ```
//!
//! A ledger file is the magic `TCGW`, version byte `0x01`, a header
//! (`chain_id`, a `u8` flag and the optional 32-byte genesis anchor), then
//! blocks back to back until end of file.

use std::fmt;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical::{self, CanonicalError};
use crate::digest::Digest;

pub const FILE_MAGIC: &[u8; 4] = b"TCGW";
pub const FILE_VERSION: u8 = 0x01;

#[derive(Debug, thiserror::Error)]
pub enum LedgerError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("block must carry at least one transaction")]
    EmptyBatch,
    #[error("transaction {index} does not match its id")]
    InvalidTransaction { index: usize },
    #[error("block timestamp {got} precedes head timestamp {head}")]
    ClockSkew { head: u64, got: u64 },
    #[error("payload is not JSON: {0}")]
    Payload(#[from] CanonicalError),
    #[error("cannot decode ledger: {0}")]
    Decode(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// What a transaction carries. The tag byte is part of the transaction id.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TxKind {
    UpdateField,
    AppendToArray,
    RawReading,
    Anchor,
    /// Validator filler on the public chain; gives anchors confirmation depth
    /// when no other traffic is pending.
    Heartbeat,
}

impl TxKind {
    pub fn tag(self) -> u8 {
        match self {
            TxKind::UpdateField => 0,
            TxKind::AppendToArray => 1,
            TxKind::RawReading => 2,
            TxKind::Anchor => 3,
            TxKind::Heartbeat => 4,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        Some(match tag {
            0 => TxKind::UpdateField,
            1 => TxKind::AppendToArray,
            2 => TxKind::RawReading,
            3 => TxKind::Anchor,
            4 => TxKind::Heartbeat,
            _ => return None,
        })
    }

    pub fn is_context_op(self) -> bool {
        matches!(self, TxKind::UpdateField | TxKind::AppendToArray)
    }
}

#[derive(Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: Digest,
    pub channel_id: String,
    pub timestamp: u64,
    pub kind: TxKind,
    /// Canonical JSON bytes.
    pub payload: Vec<u8>,
    pub author_id: String,
}

impl fmt::Debug for Transaction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Transaction")
            .field("tx_id", &self.tx_id)
            .field("channel_id", &self.channel_id)
            .field("timestamp", &self.timestamp)
            .field("kind", &self.kind)
            .field("payload", &String::from_utf8_lossy(&self.payload))
            .field("author_id", &self.author_id)
            .finish()
    }
}

impl Transaction {
    /// Builds a transaction, canonicalizing `payload` and deriving its id.
    pub fn new(
        channel_id: impl Into<String>,
        timestamp: u64,
        kind: TxKind,
        payload: &Value,
        author_id: impl Into<String>,
    ) -> Result<Self, LedgerError> {
        let payload = canonical::canonical_json(payload)?;
        Ok(Self::with_payload_bytes(
            channel_id, timestamp, kind, payload, author_id,
        ))
    }

    /// Builds a transaction from payload bytes the caller vouches are canonical.
    pub fn with_payload_bytes(
        channel_id: impl Into<String>,
        timestamp: u64,
        kind: TxKind,
        payload: Vec<u8>,
        author_id: impl Into<String>,
    ) -> Self {
        let channel_id = channel_id.into();
        let author_id = author_id.into();
        let tx_id = Self::compute_id(&channel_id, timestamp, kind, &payload, &author_id);
        Transaction {
            tx_id,
            channel_id,
            timestamp,
            kind,
            payload,
            author_id,
        }
    }

    pub fn compute_id(channel_id: &str, timestamp: u64, kind: TxKind, payload: &[u8], author_id: &str) -> Digest {
        let mut buf = Vec::with_capacity(32 + channel_id.len() + payload.len() + author_id.len());
        encode_tx_body(&mut buf, channel_id, timestamp, kind, payload, author_id);
        Digest::of(&buf)
    }

    /// Id matches content and the payload is canonical JSON.
    pub fn is_valid(&self) -> bool {
        self.tx_id
            == Self::compute_id(
                &self.channel_id,
                self.timestamp,
                self.kind,
                &self.payload,
                &self.author_id,
            )
            && canonical::is_canonical(&self.payload)
    }

    pub fn payload_json(&self) -> Result<Value, LedgerError> {
        serde_json::from_slice(&self.payload)
            .map_err(|e| LedgerError::Payload(CanonicalError::Malformed(e.to_string())))
    }

    fn encoded_len(&self) -> usize {
        32 + 8 + self.channel_id.len() + 8 + 1 + 8 + self.payload.len() + 8 + self.author_id.len()
    }

    fn encode(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(self.tx_id.as_bytes());
        encode_tx_body(
            buf,
            &self.channel_id,
            self.timestamp,
            self.kind,
            &self.payload,
            &self.author_id,
        );
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let tx_id = r.digest()?;
        let channel_id = r.string()?;
        let timestamp = r.u64()?;
        let tag = r.u8()?;
        let kind =
            TxKind::from_tag(tag).ok_or_else(|| LedgerError::Decode(format!("unknown transaction kind {tag}")))?;
        let payload = r.bytes()?.to_vec();
        let author_id = r.string()?;
        Ok(Transaction {
            tx_id,
            channel_id,
            timestamp,
            kind,
            payload,
            author_id,
        })
    }
}

fn put_bytes(buf: &mut Vec<u8>, bytes: &[u8]) {
    let len = bytes.len() as u64;
    buf.extend_from_slice(&len.to_be_bytes());
    buf.extend_from_slice(bytes);
}

fn encode_tx_body(buf: &mut Vec<u8>, channel_id: &str, timestamp: u64, kind: TxKind, payload: &[u8], author_id: &str) {
    put_bytes(buf, channel_id.as_bytes());
    buf.extend_from_slice(&timestamp.to_be_bytes());
    buf.push(kind.tag());
    put_bytes(buf, payload);
    put_bytes(buf, author_id.as_bytes());
}

/// Binary Merkle root over transaction ids. A level with an odd count
/// duplicates its last node; a single leaf is its own root; no leaves hash to
/// the digest of the empty string.
pub fn merkle_root(leaves: &[Digest]) -> Digest {
    if leaves.is_empty() {
        return Digest::of(b"");
    }
    let mut level: Vec<Digest> = leaves.to_vec();
    while level.len() > 1 {
        level = level
            .chunks(2)
            .map(|pair| {
                let right = pair.get(1).unwrap_or(&pair[0]);
                Digest::of_parts([&pair[0].0[..], &right.0[..]])
            })
            .collect();
    }
    level[0]
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub previous_hash: Digest,
    pub timestamp: u64,
    pub tx_root: Digest,
    pub transactions: Vec<Transaction>,
    pub block_hash: Digest,
}

impl Block {
    fn new(height: u64, previous_hash: Digest, timestamp: u64, transactions: Vec<Transaction>) -> Self {
        let ids: Vec<Digest> = transactions.iter().map(|t| t.tx_id).collect();
        let tx_root = merkle_root(&ids);
        Block {
            height,
            previous_hash,
            timestamp,
            tx_root,
            block_hash: Self::compute_hash(height, &previous_hash, timestamp, &tx_root),
            transactions,
        }
    }

    pub fn compute_hash(height: u64, previous_hash: &Digest, timestamp: u64, tx_root: &Digest) -> Digest {
        Digest::of_parts([
            &height.to_be_bytes()[..],
            &previous_hash.0[..],
            &timestamp.to_be_bytes()[..],
            &tx_root.0[..],
        ])
    }

    pub fn recompute_tx_root(&self) -> Digest {
        let ids: Vec<Digest> = self.transactions.iter().map(|t| t.tx_id).collect();
        merkle_root(&ids)
    }

    pub fn encoded_len(&self) -> usize {
        8 + 32 + 8 + 32 + 32 + 8 + self.transactions.iter().map(Transaction::encoded_len).sum::<usize>()
    }

    pub fn encode(&self, buf: &mut Vec<u8>) {
        buf.extend_from_slice(&self.height.to_be_bytes());
        buf.extend_from_slice(self.previous_hash.as_bytes());
        buf.extend_from_slice(&self.timestamp.to_be_bytes());
        buf.extend_from_slice(self.tx_root.as_bytes());
        buf.extend_from_slice(self.block_hash.as_bytes());
        let count = self.transactions.len() as u64;
        buf.extend_from_slice(&count.to_be_bytes());
        for tx in &self.transactions {
            tx.encode(buf);
        }
    }

    fn decode(r: &mut Reader<'_>) -> Result<Self, LedgerError> {
        let height = r.u64()?;
        let previous_hash = r.digest()?;
        let timestamp = r.u64()?;
        let tx_root = r.digest()?;
        let block_hash = r.digest()?;
        let count = r.len()?;
        let mut transactions = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            transactions.push(Transaction::decode(r)?);
        }
        Ok(Block {
            height,
            previous_hash,
            timestamp,
            tx_root,
            transactions,
            block_hash,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerifyFailure {
    /// Block hash does not cover its header, or `previous_hash` does not
    /// point at the block below.
    HashLink,
    TxRoot,
    /// A transaction id does not match its content, or its payload is not
    /// canonical JSON.
    TxId,
    HeightGap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub ok: bool,
    pub first_bad_height: Option<u64>,
    pub reason: Option<VerifyFailure>,
}

impl VerificationReport {
    fn pass() -> Self {
        VerificationReport {
            ok: true,
            first_bad_height: None,
            reason: None,
        }
    }

    fn fail(height: u64, reason: VerifyFailure) -> Self {
        VerificationReport {
            ok: false,
            first_bad_height: Some(height),
            reason: Some(reason),
        }
    }
}

/// An append-only chain. Cloning is cheap (blocks are shared), so a clone is
/// the way to take a snapshot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ledger {
    chain_id: String,
    genesis_anchor: Option<Digest>,
    blocks: Vec<Arc<Block>>,
}

impl Ledger {
    pub fn genesis(chain_id: &str, genesis_anchor: Option<Digest>) -> Result<Self, LedgerError> {
        if chain_id.is_empty() {
            return Err(LedgerError::InvalidArgument("chain_id must be non-empty".into()));
        }
        Ok(Ledger {
            chain_id: chain_id.to_owned(),
            genesis_anchor,
            blocks: vec![Arc::new(Block::new(0, Digest::ZERO, 0, Vec::new()))],
        })
    }

    /// Reassembles a ledger from raw parts without checking anything. Use
    /// [`Ledger::verify_chain`] before trusting the result.
    pub fn from_blocks(chain_id: String, genesis_anchor: Option<Digest>, blocks: Vec<Block>) -> Self {
        Ledger {
            chain_id,
            genesis_anchor,
            blocks: blocks.into_iter().map(Arc::new).collect(),
        }
    }

    pub fn chain_id(&self) -> &str {
        &self.chain_id
    }

    pub fn genesis_anchor(&self) -> Option<Digest> {
        self.genesis_anchor
    }

    pub fn blocks(&self) -> &[Arc<Block>] {
        &self.blocks
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn transaction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.transactions.len()).sum()
    }

    /// Height and hash of the last block.
    pub fn head(&self) -> (u64, Digest) {
        let last = self.blocks.last().expect("ledger always holds genesis");
        (last.height, last.block_hash)
    }

    fn head_block(&self) -> &Block {
        self.blocks.last().expect("ledger always holds genesis")
    }

    /// Appends one block holding `txs`. On error the ledger is untouched.
    pub fn append_block(&mut self, txs: Vec<Transaction>, timestamp: u64) -> Result<Arc<Block>, LedgerError> {
        if txs.is_empty() {
            return Err(LedgerError::EmptyBatch);
        }
        if let Some(index) = txs.iter().position(|t| !t.is_valid()) {
            return Err(LedgerError::InvalidTransaction { index });
        }
        let head = self.head_block();
        if timestamp < head.timestamp {
            return Err(LedgerError::ClockSkew {
                head: head.timestamp,
                got: timestamp,
            });
        }
        let block = Arc::new(Block::new(head.height + 1, head.block_hash, timestamp, txs));
        self.blocks.push(Arc::clone(&block));
        Ok(block)
    }

    /// Checks every block and transaction invariant, reporting the lowest
    /// offending height.
    pub fn verify_chain(&self) -> VerificationReport {
        let mut previous: Option<&Block> = None;
        for (index, block) in self.blocks.iter().enumerate() {
            let height = index as u64;
            if block.height != height {
                return VerificationReport::fail(height, VerifyFailure::HeightGap);
            }
            if block.transactions.iter().any(|t| !t.is_valid()) {
                return VerificationReport::fail(height, VerifyFailure::TxId);
            }
            if block.recompute_tx_root() != block.tx_root {
                return VerificationReport::fail(height, VerifyFailure::TxRoot);
            }
            let expected_prev = previous.map_or(Digest::ZERO, |p| p.block_hash);
            let expected_hash =
                Block::compute_hash(block.height, &block.previous_hash, block.timestamp, &block.tx_root);
            if block.previous_hash != expected_prev || block.block_hash != expected_hash {
                return VerificationReport::fail(height, VerifyFailure::HashLink);
            }
            previous = Some(block);
        }
        VerificationReport::pass()
    }

    /// Total length of the serialized blocks (file header excluded).
    pub fn size_bytes(&self) -> u64 {
        self.blocks.iter().map(|b| b.encoded_len() as u64).sum()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(5 + 64 + self.size_bytes() as usize);
        buf.extend_from_slice(FILE_MAGIC);
        buf.push(FILE_VERSION);
        put_bytes(&mut buf, self.chain_id.as_bytes());
        match &self.genesis_anchor {
            Some(anchor) => {
                buf.push(1);
                buf.extend_from_slice(anchor.as_bytes());
            }
            None => buf.push(0),
        }
        for block in &self.blocks {
            block.encode(&mut buf);
        }
        buf
    }

    /// Decodes the file format. Structural errors only; content is checked by
    /// [`Ledger::verify_chain`].
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, LedgerError> {
        let mut r = Reader { buf: bytes };
        if r.take(4)? != FILE_MAGIC {
            return Err(LedgerError::Decode("bad magic".into()));
        }
        let version = r.u8()?;
        if version != FILE_VERSION {
            return Err(LedgerError::Decode(format!("unsupported version {version}")));
        }
        let chain_id = r.string()?;
        let genesis_anchor = match r.u8()? {
            0 => None,
            1 => Some(r.digest()?),
            flag => return Err(LedgerError::Decode(format!("bad anchor flag {flag}"))),
        };
        let mut blocks = Vec::new();
        while !r.buf.is_empty() {
            blocks.push(Block::decode(&mut r)?);
        }
        if blocks.is_empty() {
            return Err(LedgerError::Decode("ledger has no genesis block".into()));
        }
        Ok(Ledger::from_blocks(chain_id, genesis_anchor, blocks))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), LedgerError> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LedgerError> {
        Self::from_bytes(&fs::read(path)?)
    }
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], LedgerError> {
        if self.buf.len() < n {
            return Err(LedgerError::Decode("unexpected end of input".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u8(&mut self) -> Result<u8, LedgerError> {
        Ok(self.take(1)?[0])
    }

    /// A `u64` count or length that must fit the remaining input.
    fn len(&mut self) -> Result<usize, LedgerError> {
        let n = self.u64()?;
        usize::try_from(n)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| LedgerError::Decode(format!("length {n} exceeds input")))
    }

    fn u64(&mut self) -> Result<u64, LedgerError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn digest(&mut self) -> Result<Digest, LedgerError> {
        Ok(Digest(self.take(32)?.try_into().unwrap()))
    }

    fn bytes(&mut self) -> Result<&'a [u8], LedgerError> {
        let len = self.len()?;
        self.take(len)
    }

    fn string(&mut self) -> Result<String, LedgerError> {
        String::from_utf8(self.bytes()?.to_vec()).map_err(|_| LedgerError::Decode("string is not UTF-8".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tx(i: u64) -> Transaction {
        Transaction::new(
            "fieldA",
            1_000 + i,
            TxKind::RawReading,
            &json!({"sensor_id": "s1", "metric": "temperature_c", "value": format!("{}.5", i % 40), "timestamp": 1_000 + i}),
            "s1",
        )
        .unwrap()
    }

    fn chain(blocks: u64) -> Ledger {
        let mut ledger = Ledger::genesis("fieldA", None).unwrap();
        for i in 0..blocks {
            ledger.append_block(vec![tx(i)], 1_000 + i).unwrap();
        }
        ledger
    }

    /// Straightforward recursive Merkle reference, written independently of
    /// the level-by-level loop above.
    fn reference_root(leaves: &[Digest]) -> Digest {
        fn level(nodes: Vec<[u8; 32]>) -> [u8; 32] {
            if nodes.len() == 1 {
                return nodes[0];
            }
            let mut padded = nodes.clone();
            if padded.len() % 2 == 1 {
                padded.push(*padded.last().unwrap());
            }
            let mut parents = Vec::new();
            let mut i = 0;
            while i < padded.len() {
                let mut cat = padded[i].to_vec();
                cat.extend_from_slice(&padded[i + 1]);
                parents.push(Digest::of(&cat).0);
                i += 2;
            }
            level(parents)
        }
        Digest(level(leaves.iter().map(|d| d.0).collect()))
    }

    #[test]
    fn genesis_shape() {
        let ledger = Ledger::genesis("fieldA", None).unwrap();
        assert_eq!(ledger.len(), 1);
        let g = &ledger.blocks()[0];
        assert_eq!(g.height, 0);
        assert_eq!(g.previous_hash, Digest::ZERO);
        assert!(g.transactions.is_empty());
        assert_eq!(g.tx_root, Digest::of(b""));
        assert_eq!(ledger.head(), (0, g.block_hash));
        assert!(ledger.verify_chain().ok);

        let anchor = Digest::of(b"H");
        assert_eq!(
            Ledger::genesis("fieldA", Some(anchor)).unwrap().genesis_anchor(),
            Some(anchor)
        );
        assert!(matches!(
            Ledger::genesis("", None),
            Err(LedgerError::InvalidArgument(_))
        ));
    }

    #[test]
    fn append_links_to_previous() {
        let mut ledger = Ledger::genesis("fieldA", None).unwrap();
        let (_, genesis_hash) = ledger.head();
        let block = ledger.append_block(vec![tx(0)], 5).unwrap();
        assert_eq!(block.height, 1);
        assert_eq!(block.previous_hash, genesis_hash);
        assert_eq!(ledger.head(), (1, block.block_hash));
        assert_eq!(ledger.head(), ledger.head());
    }

    #[test]
    fn hundred_single_tx_blocks_verify() {
        let ledger = chain(100);
        assert_eq!(ledger.len(), 101);
        assert!(ledger.verify_chain().ok);
    }

    #[test]
    fn append_errors_leave_ledger_untouched() {
        let mut ledger = chain(2);
        let before = ledger.clone();
        assert!(matches!(
            ledger.append_block(vec![], 9_999),
            Err(LedgerError::EmptyBatch)
        ));
        let mut bad = tx(7);
        bad.payload[3] ^= 1;
        assert!(matches!(
            ledger.append_block(vec![tx(5), bad], 9_999),
            Err(LedgerError::InvalidTransaction { index: 1 })
        ));
        assert!(matches!(
            ledger.append_block(vec![tx(5)], 1),
            Err(LedgerError::ClockSkew { .. })
        ));
        assert_eq!(ledger, before);
    }

    #[test]
    fn payload_tamper_detected_at_its_block() {
        let ledger = chain(50);
        let mut blocks: Vec<Block> = ledger.blocks().iter().map(|b| (**b).clone()).collect();
        blocks[7].transactions[0].payload[5] ^= 0x20;
        let tampered = Ledger::from_blocks("fieldA".into(), None, blocks);
        let report = tampered.verify_chain();
        assert!(!report.ok);
        assert_eq!(report.first_bad_height, Some(7));
        assert!(matches!(
            report.reason,
            Some(VerifyFailure::TxId | VerifyFailure::TxRoot)
        ));
    }

    #[test]
    fn header_tampers_detected() {
        let ledger = chain(10);
        let base: Vec<Block> = ledger.blocks().iter().map(|b| (**b).clone()).collect();
        let check = |mutate: &dyn Fn(&mut Block), want: VerifyFailure| {
            let mut blocks = base.clone();
            mutate(&mut blocks[4]);
            let r = Ledger::from_blocks("fieldA".into(), None, blocks).verify_chain();
            assert_eq!((r.first_bad_height, r.reason), (Some(4), Some(want)));
        };
        check(&|b| b.height += 1, VerifyFailure::HeightGap);
        check(&|b| b.tx_root.0[0] ^= 1, VerifyFailure::TxRoot);
        check(&|b| b.previous_hash.0[31] ^= 1, VerifyFailure::HashLink);
        check(&|b| b.block_hash.0[9] ^= 1, VerifyFailure::HashLink);
        check(&|b| b.timestamp += 1, VerifyFailure::HashLink);
    }

    #[test]
    fn merkle_matches_reference() {
        for k in 1..=16u8 {
            let leaves: Vec<Digest> = (0..k).map(|i| Digest::of(&[i])).collect();
            assert_eq!(merkle_root(&leaves), reference_root(&leaves), "k = {k}");
        }
    }

    #[test]
    fn size_is_monotone_and_matches_encoding() {
        let mut ledger = Ledger::genesis("fieldA", None).unwrap();
        let genesis_size = ledger.size_bytes();
        assert!(genesis_size > 0);
        let mut last = genesis_size;
        for i in 0..20 {
            ledger.append_block(vec![tx(i)], 2_000).unwrap();
            let size = ledger.size_bytes();
            assert!(size > last);
            last = size;
        }
        // file = magic + version + header + blocks
        let header = 4 + 1 + 8 + "fieldA".len() + 1;
        assert_eq!(ledger.to_bytes().len() as u64, header as u64 + ledger.size_bytes());
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fieldA.tcgw");
        let mut ledger = Ledger::genesis("fieldA", Some(Digest::of(b"prev"))).unwrap();
        ledger.append_block((0..5).map(tx).collect(), 7).unwrap();
        ledger.save(&path).unwrap();
        let loaded = Ledger::load(&path).unwrap();
        assert_eq!(loaded, ledger);
        assert_eq!(&std::fs::read(&path).unwrap()[..5], b"TCGW\x01");
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(matches!(Ledger::from_bytes(b"NOPE\x01"), Err(LedgerError::Decode(_))));
        let bytes = chain(3).to_bytes();
        assert!(Ledger::from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut v2 = bytes.clone();
        v2[4] = 2;
        assert!(Ledger::from_bytes(&v2).is_err());
    }

    #[test]
    fn deterministic_bytes() {
        assert_eq!(chain(12).to_bytes(), chain(12).to_bytes());
    }
}
