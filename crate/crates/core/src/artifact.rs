//! Binary matrix tables and file checksums shared by the on-disk artifacts.
//!
//! Table layout (little-endian): 4-byte magic `CEFT`, `u32` version, `u64`
//! rows, `u64` cols, then `rows * cols` `f64` values in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

pub const TABLE_MAGIC: &[u8; 4] = b"CEFT";
pub const TABLE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

pub fn encode_table(m: &DenseMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(HEADER_LEN + m.as_slice().len() * 8);
    buf.extend_from_slice(TABLE_MAGIC);
    buf.extend_from_slice(&TABLE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(m.rows() as u64).to_le_bytes());
    buf.extend_from_slice(&(m.cols() as u64).to_le_bytes());
    for x in m.as_slice() {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    buf
}

pub fn decode_table(bytes: &[u8], path: &Path) -> Result<DenseMatrix> {
    let bad = |message: &str| Error::BadArtifact {
        path: path.into(),
        message: message.into(),
    };
    if bytes.len() < HEADER_LEN || &bytes[..4] != TABLE_MAGIC {
        return Err(bad("not a CEFT table"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != TABLE_VERSION {
        return Err(bad(&format!("unsupported table version {version}")));
    }
    let rows = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if rows.checked_mul(cols).and_then(|n| n.checked_mul(8)) != Some(body.len()) {
        return Err(bad("table body length does not match header"));
    }
    let data = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    DenseMatrix::from_vec(rows, cols, data)
}

pub fn write_table(path: &Path, m: &DenseMatrix) -> Result<()> {
    write_bytes(path, &encode_table(m))
}

pub fn read_table(path: &Path) -> Result<DenseMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_table(&bytes, path)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// `foo.bin` -> `foo.bin.json`; sidecars sit next to their artifact.
pub fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
