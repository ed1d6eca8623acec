//! Planning with Sat/Viol/Unk precondition tracking, query and bridge
//! refinement, bidirectional search and certificate-based acceptance.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bench;
pub mod config;
pub mod distance;
pub mod goal;
pub mod hypothesis;
pub mod instance;
pub mod oracle;
pub mod proposer;
pub mod refine;
pub mod search;
pub mod state;
pub mod text;
pub mod trace;
pub mod verifier;

use sha2::{Digest, Sha256};

/// First eight bytes of the SHA-256 of `bytes`, big-endian.
pub fn digest64(bytes: &[u8]) -> u64 {
    let h = Sha256::digest(bytes);
    let mut b = [0u8; 8];
    b.copy_from_slice(&h[..8]);
    u64::from_be_bytes(b)
}
