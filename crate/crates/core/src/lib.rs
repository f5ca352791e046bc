//! Protocol library for a compress-store blockchain: miners perform useful
//! work by compressing video under a quality threshold (proof of work) and
//! proving that the compressed, encrypted result is held by a storage node
//! (proof of storage). The chain itself carries only metadata; bulk data
//! lives off-chain under content addresses.
//!
//! Module map:
//! - [`crypto`]: digests, signatures, symmetric transform.
//! - [`encoding`]: canonical wire encoding shared by every hashed structure.
//! - [`codec`]: toy I/P-frame video coder with chain-digest headers.
//! - [`merkle`]: Merkle trees and membership proofs.
//! - [`ledger`]: subblocks, blocks, chain state and fork choice.
//! - [`storage`]: content-addressed storage nodes, challenge/response
//!   proofs, credit accounting and the traveling auditor.
//! - [`consensus`]: mining and block verification tying it all together.
//! - [`testkit`]: shared fixtures for integration and simulator tests.

pub mod codec;
pub mod consensus;
pub mod crypto;
pub mod encoding;
pub mod ledger;
pub mod merkle;
pub mod storage;
pub mod testkit;
