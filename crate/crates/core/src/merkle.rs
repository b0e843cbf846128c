//! Merkle tree over citation hashes, with set semantics.
//!
//! Leaves are the cited manuscript hashes sorted ascending, so the root is
//! independent of input order. Leaf hashes are domain-separated from
//! interior hashes (0x00 vs 0x01 prefix); an odd node at any level is
//! paired with itself; the empty set hashes to `H("")`.

use crate::crypto::{sha256, Hash32};
use sha2::{Digest, Sha256};

fn leaf_hash(id: &Hash32) -> Hash32 {
    let mut h = Sha256::new();
    h.update([0x00]);
    h.update(id.0);
    Hash32(h.finalize().into())
}

fn interior_hash(left: &Hash32, right: &Hash32) -> Hash32 {
    let mut h = Sha256::new();
    h.update([0x01]);
    h.update(left.0);
    h.update(right.0);
    Hash32(h.finalize().into())
}

/// Root over a citation set. Input order and duplicates do not matter.
pub fn merkle_root<I: IntoIterator<Item = Hash32>>(ids: I) -> Hash32 {
    let mut leaves: Vec<Hash32> = ids.into_iter().collect();
    leaves.sort();
    leaves.dedup();
    if leaves.is_empty() {
        return sha256(b"");
    }
    let mut level: Vec<Hash32> = leaves.iter().map(leaf_hash).collect();
    level.sort();
    while level.len() > 1 {
        let mut next = Vec::with_capacity(level.len().div_ceil(2));
        for pair in level.chunks(2) {
            let right = pair.get(1).unwrap_or(&pair[0]);
            next.push(interior_hash(&pair[0], right));
        }
        level = next;
    }
    level[0]
}
