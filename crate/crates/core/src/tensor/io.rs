//! Weight files: a flat little-endian `f64` payload plus a JSON sidecar
//! manifest listing `{name, shape, dtype, byte_offset, byte_len}` per tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub byte_offset: u64,
    pub byte_len: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub file: String,
    pub tensors: Vec<ManifestEntry>,
}

/// Encodes named tensors into `(payload, manifest)`.
pub fn encode(file: &str, tensors: &[(String, &Tensor)]) -> (Vec<u8>, Manifest) {
    let mut payload = Vec::new();
    let mut entries = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let offset = payload.len() as u64;
        for v in t.data() {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        entries.push(ManifestEntry {
            name: name.clone(),
            shape: t.shape().to_vec(),
            dtype: "f64".into(),
            byte_offset: offset,
            byte_len: payload.len() as u64 - offset,
        });
    }
    (
        payload,
        Manifest {
            file: file.to_string(),
            tensors: entries,
        },
    )
}

pub fn decode(payload: &[u8], manifest: &Manifest) -> Result<Vec<(String, Tensor)>> {
    manifest
        .tensors
        .iter()
        .map(|e| {
            if e.dtype != "f64" {
                return Err(Error::InvalidArgument(format!("unsupported dtype {}", e.dtype)));
            }
            let start = e.byte_offset as usize;
            let end = start + e.byte_len as usize;
            let bytes = payload.get(start..end).ok_or_else(|| {
                Error::InvalidArgument(format!("tensor `{}` exceeds payload", e.name))
            })?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Ok((e.name.clone(), Tensor::new(&e.shape, data)?))
        })
        .collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `<stem>.bin` and `<stem>.json` into `dir`, and appends the payload
/// digest to `dir/checksums.sha256` (sha256sum format).
pub fn save(dir: &Path, stem: &str, tensors: &[(String, &Tensor)]) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let bin_name = format!("{stem}.bin");
    let (payload, manifest) = encode(&bin_name, tensors);
    fs::write(dir.join(&bin_name), &payload)?;
    fs::write(
        dir.join(format!("{stem}.json")),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    let sums = dir.join("checksums.sha256");
    let mut lines: Vec<String> = match fs::read_to_string(&sums) {
        Ok(s) => s
            .lines()
            .filter(|l| !l.ends_with(&format!("  {bin_name}")))
            .map(str::to_string)
            .collect(),
        Err(_) => Vec::new(),
    };
    lines.push(format!("{}  {bin_name}", sha256_hex(&payload)));
    lines.sort();
    fs::write(sums, lines.join("\n") + "\n")?;
    Ok(manifest)
}

/// Reads a manifest and its payload, verifying the checksum when
/// `checksums.sha256` lists the payload file.
pub fn load(dir: &Path, stem: &str) -> Result<Vec<(String, Tensor)>> {
    let manifest: Manifest =
        serde_json::from_str(&fs::read_to_string(dir.join(format!("{stem}.json")))?)?;
    let payload = fs::read(dir.join(&manifest.file))?;
    if let Ok(sums) = fs::read_to_string(dir.join("checksums.sha256")) {
        let suffix = format!("  {}", manifest.file);
        if let Some(line) = sums.lines().find(|l| l.ends_with(&suffix)) {
            let expected = line.trim_end_matches(&suffix);
            if expected != sha256_hex(&payload) {
                return Err(Error::ChecksumMismatch { file: manifest.file });
            }
        }
    }
    decode(&payload, &manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let a = Tensor::from_rows(&[&[1.0, -0.0], &[f64::MIN_POSITIVE, 1e300]]).unwrap();
        let b = Tensor::vector(&[std::f64::consts::PI]);
        let dir = tempfile::tempdir().unwrap();
        let m = save(dir.path(), "w", &[("a".into(), &a), ("b".into(), &b)]).unwrap();
        assert_eq!(m.tensors[1].byte_offset, 32);
        assert_eq!(m.tensors[1].byte_len, 8);
        let back = load(dir.path(), "w").unwrap();
        assert_eq!(back[0].1.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   a.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back[1].1, b);
    }

    #[test]
    fn corrupted_payload_fails_checksum() {
        let a = Tensor::vector(&[1.0, 2.0]);
        let dir = tempfile::tempdir().unwrap();
        save(dir.path(), "w", &[("a".into(), &a)]).unwrap();
        let mut bytes = fs::read(dir.path().join("w.bin")).unwrap();
        bytes[0] ^= 1;
        fs::write(dir.path().join("w.bin"), bytes).unwrap();
        assert!(matches!(load(dir.path(), "w"), Err(Error::ChecksumMismatch { .. })));
    }
}
