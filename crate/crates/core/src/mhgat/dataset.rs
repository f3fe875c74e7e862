//! Labeled training records and their line-delimited JSON serialization.
//!
//! One record captures one overload event: the input tensors for the
//! selected VNF plus the per-destination post-migration fragmentation labels
//! produced by exhaustive simulation.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::tensor::Mat;
use crate::scalar::Scalar;
use crate::state::VnfKey;
use crate::topology::NodeId;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("dataset line {0}: {1}")]
    Parse(usize, serde_json::Error),
    #[error("dataset line {line}: label count {got} does not match node feature rows {expected}")]
    LabelShape { line: usize, got: usize, expected: usize },
}

/// One overload event with its exhaustive-simulation labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord<T = f64> {
    /// Node feature tensor, `|N| x 2 R1`.
    pub x: Mat<T>,
    /// Edge feature tensor, `2|E| x 2 R2`.
    pub e: Mat<T>,
    /// Per-destination post-migration maximum weighted fragmentation level;
    /// infeasible destinations carry the sentinel 1.
    pub labels: Vec<T>,
    pub topology_hash: String,
    pub slot: usize,
    pub vnf: VnfKey,
    pub source_node: NodeId,
}

impl<T: Scalar> DatasetRecord<T> {
    /// Content hash over the input tensors, used to deduplicate records.
    pub fn tensor_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        for &v in self.x.data.iter().chain(&self.e.data) {
            hasher.update(v.to_f64_lossy().to_le_bytes());
        }
        hasher.finalize().into()
    }
}

/// Writes records as line-delimited JSON.
pub fn write_dataset<T: Scalar>(
    mut out: impl Write,
    records: &[DatasetRecord<T>],
) -> Result<(), DatasetError> {
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| DatasetError::Io(e.into()))?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a line-delimited JSON dataset, validating label shapes.
pub fn read_dataset<T: Scalar>(input: impl Read) -> Result<Vec<DatasetRecord<T>>, DatasetError> {
    let reader = BufReader::new(input);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: DatasetRecord<T> =
            serde_json::from_str(&line).map_err(|e| DatasetError::Parse(i + 1, e))?;
        if record.labels.len() != record.x.rows {
            return Err(DatasetError::LabelShape {
                line: i + 1,
                got: record.labels.len(),
                expected: record.x.rows,
            });
        }
        records.push(record);
    }
    Ok(records)
}
