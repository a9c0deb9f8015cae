//! Instance export and import: a flat little-endian binary dump of the
//! defining matrix plus a JSON sidecar with the dimensions, weights, seed and
//! a SHA-256 digest of the dump, so runs are replayable across machines.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::problem::{CmInstance, SpcaInstance};

/// Sidecar metadata stored next to each matrix dump.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct InstanceSidecar {
    /// "spca" or "cm".
    pub problem: String,
    /// Rows of the dumped matrix (samples for SPCA, grid size for CM).
    pub m: usize,
    /// Feature / grid dimension n.
    pub n: usize,
    pub r: usize,
    pub lambda: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain_length: Option<f64>,
    /// Element order of the dump; always column-major here.
    pub layout: String,
    /// SHA-256 of the binary dump, lowercase hex.
    pub sha256: String,
}

/// A saved problem instance.
pub enum InstanceData {
    Spca(SpcaInstance),
    Cm(CmInstance),
}

impl InstanceData {
    pub fn problem_name(&self) -> &'static str {
        match self {
            InstanceData::Spca(_) => "spca",
            InstanceData::Cm(_) => "cm",
        }
    }

    fn matrix(&self) -> &DMatrix<f64> {
        match self {
            InstanceData::Spca(i) => i.data(),
            InstanceData::Cm(i) => i.operator_matrix(),
        }
    }

    fn sidecar(&self, sha256: String) -> InstanceSidecar {
        match self {
            InstanceData::Spca(i) => InstanceSidecar {
                problem: "spca".to_string(),
                m: i.m(),
                n: i.n(),
                r: i.r(),
                lambda: i.lambda(),
                seed: i.seed(),
                domain_length: None,
                layout: "col-major".to_string(),
                sha256,
            },
            InstanceData::Cm(i) => InstanceSidecar {
                problem: "cm".to_string(),
                m: i.n(),
                n: i.n(),
                r: i.r(),
                lambda: i.lambda(),
                seed: 0,
                domain_length: Some(i.domain_length()),
                layout: "col-major".to_string(),
                sha256,
            },
        }
    }

    /// Writes `<stem>.bin` and `<stem>.json` under `dir`; returns the digest.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<String> {
        fs::create_dir_all(dir)?;
        let bytes = matrix_to_bytes(self.matrix());
        let digest = sha256_hex(&bytes);
        fs::write(dir.join(format!("{stem}.bin")), &bytes)?;
        let sidecar = self.sidecar(digest.clone());
        fs::write(
            dir.join(format!("{stem}.json")),
            serde_json::to_vec_pretty(&sidecar)?,
        )?;
        Ok(digest)
    }

    /// Loads a saved instance, verifying the digest and dimensions.
    pub fn load(dir: &Path, stem: &str) -> Result<InstanceData> {
        let sidecar: InstanceSidecar =
            serde_json::from_slice(&fs::read(dir.join(format!("{stem}.json")))?)?;
        let bin_path = dir.join(format!("{stem}.bin"));
        let matrix = load_matrix(&bin_path, sidecar.m, sidecar.n, &sidecar.sha256)?;
        match sidecar.problem.as_str() {
            "spca" => Ok(InstanceData::Spca(SpcaInstance::from_matrix(
                matrix,
                sidecar.r,
                sidecar.lambda,
                sidecar.seed,
            )?)),
            "cm" => Ok(InstanceData::Cm(CmInstance::from_matrix(
                matrix,
                sidecar.r,
                sidecar.lambda,
                sidecar.domain_length.unwrap_or(super::cm::CM_DOMAIN_LENGTH),
            )?)),
            other => Err(Error::invalid(
                "problem",
                format!("unknown problem kind `{other}` in sidecar"),
            )),
        }
    }

    pub fn load_sidecar(dir: &Path, stem: &str) -> Result<InstanceSidecar> {
        Ok(serde_json::from_slice(&fs::read(
            dir.join(format!("{stem}.json")),
        )?)?)
    }
}

/// Column-major little-endian f64 dump (matches nalgebra's storage order).
pub fn matrix_to_bytes(m: &DMatrix<f64>) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(m.len() * 8);
    for v in m.as_slice() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    bytes
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn load_matrix(path: &PathBuf, rows: usize, cols: usize, expected_sha: &str) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path)?;
    let got = sha256_hex(&bytes);
    if got != expected_sha {
        return Err(Error::Integrity {
            path: path.display().to_string(),
            expected: expected_sha.to_string(),
            got,
        });
    }
    if bytes.len() != rows * cols * 8 {
        return Err(Error::invalid(
            "dump",
            format!(
                "dump holds {} bytes but sidecar dims {rows}x{cols} require {}",
                bytes.len(),
                rows * cols * 8
            ),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    Ok(DMatrix::from_column_slice(rows, cols, &values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spca_round_trip_is_bitwise() {
        let dir = std::env::temp_dir().join(format!("rsmooth-io-{}", std::process::id()));
        let inst = SpcaInstance::generate(20, 6, 2, 0.4, 77).unwrap();
        let original = inst.data().clone();
        InstanceData::Spca(inst).save(&dir, "spca_test").unwrap();
        let loaded = InstanceData::load(&dir, "spca_test").unwrap();
        match loaded {
            InstanceData::Spca(i) => assert_eq!(i.data(), &original),
            _ => panic!("wrong kind"),
        }
        fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn corrupted_dump_is_rejected() {
        let dir = std::env::temp_dir().join(format!("rsmooth-io-bad-{}", std::process::id()));
        let inst = CmInstance::new(8, 2, 0.1, 50.0).unwrap();
        InstanceData::Cm(inst).save(&dir, "cm_test").unwrap();
        // Flip one byte in the dump.
        let bin = dir.join("cm_test.bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes[3] ^= 0xFF;
        fs::write(&bin, &bytes).unwrap();
        assert!(matches!(
            InstanceData::load(&dir, "cm_test"),
            Err(Error::Integrity { .. })
        ));
        fs::remove_dir_all(&dir).ok();
    }
}
