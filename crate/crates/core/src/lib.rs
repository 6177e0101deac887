//! Simulation kit for a two-tier ledger: private per-field chains ingest raw
//! sensor data, an edge gateway condenses each epoch into statistics, anchors
//! them on a public chain and prunes the private history.

pub mod bench;
pub mod canonical;
pub mod decimal;
pub mod digest;
pub mod gateway;
pub mod ledger;
pub mod private_chain;
pub mod public_chain;
pub mod workload;
pub mod world_state;

pub use decimal::Decimal;
pub use digest::Digest;
pub use gateway::{EpochSummary, Gateway, MetricStats, ValidityRange};
pub use ledger::{Block, Ledger, Transaction, TxKind};
pub use private_chain::{Metric, PrivateNode, SensorReading};
pub use public_chain::{AnchorRecord, PublicChain};
pub use world_state::{ContextOp, Document, PathExpr, WorldState};

// The guide under book/ is compiled here so its snippets run with the doctests.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/ledger.md")]
    mod ledger {}
    #[doc = include_str!("../../../book/src/world-state.md")]
    mod world_state {}
    #[doc = include_str!("../../../book/src/private-chains.md")]
    mod private_chains {}
    #[doc = include_str!("../../../book/src/gateway.md")]
    mod gateway {}
    #[doc = include_str!("../../../book/src/public-chain.md")]
    mod public_chain {}
    #[doc = include_str!("../../../book/src/scenarios.md")]
    mod scenarios {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
