use sha2::{Digest, Sha256};

/// SHA-256 over the concatenation of `parts`, as lowercase hex. All content
/// digests in this crate (datasets, socket parameters, plug snapshots) go
/// through here so they stay bit-for-bit comparable across save/load.
pub fn sha256_hex<'a>(parts: impl IntoIterator<Item = &'a [u8]>) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    let out = h.finalize();
    let mut s = String::with_capacity(64);
    for b in out {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
