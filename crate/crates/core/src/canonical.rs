//! Canonical JSON encoding.
//!
//! This is the byte format exchanged between the private and public tiers and
//! the input of every JSON-derived digest. Rules:
//!
//! * object keys sorted by their UTF-8 bytes, no duplicate keys;
//! * no insignificant whitespace;
//! * strings use the minimal escape set: `"` and `\`, the short forms
//!   `\b \f \n \r \t`, and `\u00XX` (lowercase hex) for the remaining control
//!   characters. Everything else, including non-ASCII, is written verbatim;
//! * integers in base 10 without leading zeros;
//! * native floats are rejected. Decimal quantities travel as strings.

use serde::Serialize;
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CanonicalError {
    #[error("unsupported value: {0}")]
    UnsupportedValue(String),
    #[error("malformed JSON: {0}")]
    Malformed(String),
}

/// Encodes `value` as canonical JSON bytes.
pub fn canonical_json(value: &Value) -> Result<Vec<u8>, CanonicalError> {
    let mut out = Vec::with_capacity(64);
    write_value(value, &mut out)?;
    Ok(out)
}

/// Serializes any `Serialize` type through [`canonical_json`].
pub fn to_canonical_vec<T: Serialize + ?Sized>(value: &T) -> Result<Vec<u8>, CanonicalError> {
    let value = serde_json::to_value(value).map_err(|e| CanonicalError::UnsupportedValue(e.to_string()))?;
    canonical_json(&value)
}

/// Parses JSON bytes and re-encodes them canonically.
pub fn canonicalize_bytes(bytes: &[u8]) -> Result<Vec<u8>, CanonicalError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| CanonicalError::Malformed(e.to_string()))?;
    canonical_json(&value)
}

/// True when `bytes` is valid JSON already in canonical form.
pub fn is_canonical(bytes: &[u8]) -> bool {
    canonicalize_bytes(bytes).is_ok_and(|c| c == bytes)
}

fn write_value(value: &Value, out: &mut Vec<u8>) -> Result<(), CanonicalError> {
    match value {
        Value::Null => out.extend_from_slice(b"null"),
        Value::Bool(true) => out.extend_from_slice(b"true"),
        Value::Bool(false) => out.extend_from_slice(b"false"),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.extend_from_slice(i.to_string().as_bytes());
            } else if let Some(u) = n.as_u64() {
                out.extend_from_slice(u.to_string().as_bytes());
            } else {
                return Err(CanonicalError::UnsupportedValue(format!(
                    "native float {n}; encode decimals as strings"
                )));
            }
        }
        Value::String(s) => write_string(s, out),
        Value::Array(items) => {
            out.push(b'[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_value(item, out)?;
            }
            out.push(b']');
        }
        Value::Object(map) => {
            let mut entries: Vec<(&String, &Value)> = map.iter().collect();
            entries.sort_unstable_by(|a, b| a.0.as_bytes().cmp(b.0.as_bytes()));
            out.push(b'{');
            for (i, (key, item)) in entries.into_iter().enumerate() {
                if i > 0 {
                    out.push(b',');
                }
                write_string(key, out);
                out.push(b':');
                write_value(item, out)?;
            }
            out.push(b'}');
        }
    }
    Ok(())
}

fn write_string(s: &str, out: &mut Vec<u8>) {
    const HEX: &[u8; 16] = b"0123456789abcdef";
    out.push(b'"');
    for &b in s.as_bytes() {
        match b {
            b'"' => out.extend_from_slice(b"\\\""),
            b'\\' => out.extend_from_slice(b"\\\\"),
            0x08 => out.extend_from_slice(b"\\b"),
            0x0c => out.extend_from_slice(b"\\f"),
            b'\n' => out.extend_from_slice(b"\\n"),
            b'\r' => out.extend_from_slice(b"\\r"),
            b'\t' => out.extend_from_slice(b"\\t"),
            0x00..=0x1f => {
                out.extend_from_slice(b"\\u00");
                out.push(HEX[(b >> 4) as usize]);
                out.push(HEX[(b & 0xf) as usize]);
            }
            _ => out.push(b),
        }
    }
    out.push(b'"');
}
