//! Sub-seed derivation.
//!
//! `sub_seed(master, role)` is the first eight bytes, read little-endian, of
//! `SHA-256(master as 8 little-endian bytes ‖ role as UTF-8)`.

use sha2::{Digest, Sha256};

pub fn sub_seed(master: u64, role: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(role.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}
