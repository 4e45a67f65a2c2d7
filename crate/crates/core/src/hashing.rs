use sha2::{Digest, Sha256};

/// SHA-256 over length-prefixed parts, so ("ab","c") and ("a","bc") differ.
pub fn digest_parts<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> [u8; 32] {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hasher.finalize().into()
}

pub fn hex_digest<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    digest_parts(parts)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Platform-stable 64-bit seed derived from a base seed and string keys.
pub fn derive_seed(base: u64, keys: &[&str]) -> u64 {
    let base = base.to_le_bytes();
    let digest = digest_parts(std::iter::once(&base[..]).chain(keys.iter().map(|k| k.as_bytes())));
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}
