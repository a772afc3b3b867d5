//! Weight file: 8-byte magic, u32 version, u32 header length, JSON header
//! (shape, parameter count, SHA-256 of the shape), then little-endian f64
//! parameters.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::network::{NetShape, QNetwork};

const MAGIC: &[u8; 8] = b"SFCQNET\0";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a weight file")]
    BadMagic,
    #[error("unsupported weight file version {0}")]
    Version(u32),
    #[error("corrupt header: {0}")]
    Header(String),
    #[error("shape mismatch: file has {found:?}, expected {expected:?}")]
    Shape { expected: NetShape, found: NetShape },
    #[error("parameter block has {found} bytes, expected {expected}")]
    Truncated { expected: usize, found: usize },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    shape: NetShape,
    param_count: usize,
    config_sha256: String,
}

pub fn shape_hash(shape: &NetShape) -> String {
    let json = serde_json::to_vec(shape).expect("shape serializes");
    Sha256::digest(&json)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn to_bytes(net: &QNetwork) -> Vec<u8> {
    let header = Header {
        shape: net.shape().clone(),
        param_count: net.param_count(),
        config_sha256: shape_hash(net.shape()),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut out = Vec::with_capacity(16 + json.len() + 8 * net.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &net.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn from_bytes(bytes: &[u8], expected: &NetShape) -> Result<QNetwork, WeightsError> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(WeightsError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(WeightsError::Version(version));
    }
    let len = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or_else(|| WeightsError::Header("header extends past end of file".into()))?;
    let header: Header = serde_json::from_slice(json).map_err(|e| WeightsError::Header(e.to_string()))?;
    if header.config_sha256 != shape_hash(&header.shape) {
        return Err(WeightsError::Header("shape hash does not match".into()));
    }
    if &header.shape != expected {
        return Err(WeightsError::Shape {
            expected: expected.clone(),
            found: header.shape,
        });
    }
    let mut net = QNetwork::zeros(header.shape);
    if header.param_count != net.param_count() {
        return Err(WeightsError::Header("parameter count does not match shape".into()));
    }
    let body = &bytes[16 + len..];
    if body.len() != 8 * net.param_count() {
        return Err(WeightsError::Truncated {
            expected: 8 * net.param_count(),
            found: body.len(),
        });
    }
    for (p, chunk) in net.params.iter_mut().zip(body.chunks_exact(8)) {
        *p = f64::from_le_bytes(chunk.try_into().unwrap());
    }
    Ok(net)
}

/// Writes atomically through a temporary file in the same directory.
pub fn save_weights(net: &QNetwork, path: &Path) -> Result<(), WeightsError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(&to_bytes(net))?;
    tmp.persist(path).map_err(|e| WeightsError::Io(e.error))?;
    Ok(())
}

pub fn load_weights(path: &Path, expected: &NetShape) -> Result<QNetwork, WeightsError> {
    from_bytes(&std::fs::read(path)?, expected)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::encoding::StateEncoding;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn net() -> QNetwork {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        QNetwork::xavier(NetShape::new(4, vec![8], 13), &mut rng)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let n = net();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.bin");
        save_weights(&n, &path).unwrap();
        let back = load_weights(&path, n.shape()).unwrap();
        assert_eq!(back, n);
        let s = StateEncoding::zeros();
        assert_eq!(back.forward(&s).unwrap(), n.forward(&s).unwrap());
    }

    #[test]
    fn wrong_action_count_is_rejected() {
        let bytes = to_bytes(&net());
        let err = from_bytes(&bytes, &NetShape::new(4, vec![8], 12)).unwrap_err();
        assert!(matches!(err, WeightsError::Shape { .. }));
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let n = net();
        let mut bytes = to_bytes(&n);
        assert!(matches!(from_bytes(&bytes[..10], n.shape()), Err(WeightsError::BadMagic)));
        bytes[20] ^= 0xff;
        assert!(matches!(from_bytes(&bytes, n.shape()), Err(WeightsError::Header(_))));
        let mut short = to_bytes(&n);
        short.truncate(short.len() - 8);
        assert!(matches!(from_bytes(&short, n.shape()), Err(WeightsError::Truncated { .. })));
    }
}
