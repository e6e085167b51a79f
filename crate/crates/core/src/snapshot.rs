//! Versioned binary envelopes: 4-byte tag, little-endian `u32` version,
//! bincode payload.

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

const HEADER: usize = 8;

pub fn encode<T: Serialize>(tag: &[u8; 4], version: u32, value: &T) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(HEADER);
    out.extend_from_slice(tag);
    out.extend_from_slice(&version.to_le_bytes());
    bincode::serialize_into(&mut out, value).map_err(|e| Error::Format(e.to_string()))?;
    Ok(out)
}

pub fn decode<T: DeserializeOwned>(tag: &[u8; 4], version: u32, bytes: &[u8]) -> Result<T> {
    if bytes.len() < HEADER {
        return Err(Error::Format(format!("{} bytes is too short for a header", bytes.len())));
    }
    if &bytes[..4] != tag {
        return Err(Error::Format(format!(
            "expected tag {:?}, found {:?}",
            String::from_utf8_lossy(tag),
            String::from_utf8_lossy(&bytes[..4])
        )));
    }
    let found = u32::from_le_bytes(bytes[4..HEADER].try_into().expect("four bytes"));
    if found != version {
        return Err(Error::Version {
            found,
            expected: version,
        });
    }
    let payload = &bytes[HEADER..];
    let mut cursor = payload;
    let value = bincode::deserialize_from(&mut cursor).map_err(|e| Error::Format(e.to_string()))?;
    if !cursor.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes", cursor.len())));
    }
    Ok(value)
}
