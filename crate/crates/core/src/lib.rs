//! Deterministic peer-review publication ledger.
//!
//! Three coupled layers drive the ecosystem: a pre-mined token transaction
//! graph with escrow ([`ledger`]), a content-addressed publication graph
//! ([`graph`]) and a smart-contract layer ([`contracts`]) whose triggers
//! move every token. Proof-of-review consensus ([`consensus`]) locks a
//! manuscript once enough staked reviewers confirm it and settles the
//! pooled stakes toward the manuscripts it cites.
//!
//! All mutations flow through the single-writer [`engine::Engine`] command
//! log; snapshots are plain clones and safe to read from other threads.
//! Every run is bit-for-bit reproducible from its scenario seed.

pub mod amount;
pub mod consensus;
pub mod contracts;
pub mod crypto;
pub mod engine;
pub mod errors;
pub mod export;
pub mod graph;
pub mod identity;
pub mod ledger;
pub mod merkle;
pub mod policy;
pub mod scenario;

pub use amount::{TokenAmount, Weight};
pub use crypto::{Address, Hash32};
pub use errors::{Error, Result};
