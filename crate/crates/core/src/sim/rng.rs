//! Counter-based randomness: every draw sequence is keyed by
//! (global seed, task id, stream label, index), so results do not depend on
//! scheduling or on how many other tasks share a process.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

fn keyed(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

/// Per-task seed derived from the global seed.
pub fn task_seed(global: u64, task_id: &str) -> u64 {
    let d = keyed(&[&global.to_le_bytes(), task_id.as_bytes()]);
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

pub fn stream(global: u64, task_id: &str, label: &str, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(keyed(&[&global.to_le_bytes(), task_id.as_bytes(), label.as_bytes(), &index.to_le_bytes()]))
}

/// Stable digest of a sequence of strings.
pub fn content_hash<'a>(parts: impl IntoIterator<Item = &'a str>) -> u64 {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}
