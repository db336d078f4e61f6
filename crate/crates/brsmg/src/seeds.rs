//! Named sub-seeds and content hashes.

use sha2::{Digest, Sha256};

/// Seed of the random stream `name` under `master`.
pub fn sub_seed(master: u64, name: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(name.as_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Lower-case hex SHA-256 of the concatenated parts, each length-prefixed.
pub fn content_hash<'a, I: IntoIterator<Item = &'a [u8]>>(parts: I) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}
