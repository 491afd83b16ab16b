//! Content digests used for cache keys and content-addressed stores.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Canonical JSON text: object keys sorted, no insignificant whitespace.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    // serde_json::Map is ordered by key unless `preserve_order` is enabled,
    // so a round trip through `Value` sorts every object.
    let v = serde_json::to_value(value).expect("serializable value");
    serde_json::to_string(&v).expect("value serializes")
}

pub fn content_hash<T: Serialize + ?Sized>(value: &T) -> String {
    sha256_hex(canonical_json(value).as_bytes())
}
