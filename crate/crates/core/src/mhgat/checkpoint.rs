//! Checkpoint persistence. A checkpoint embeds the parameters, the
//! architecture, the derived graphs, the edge index and the topology hash,
//! so loading yields a ready-to-run model — but only against the topology it
//! was built for.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{MhgatModel, ModelHyper};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("checkpoint shape invalid: {0}")]
    Shape(String),
    #[error("checkpoint topology hash {expected} does not match the loaded topology {got}; refusing to run inference")]
    TopologyMismatch { expected: String, got: String },
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc<T> {
    format: String,
    version: String,
    model: MhgatModel<T>,
}

const FORMAT: &str = "mhgat-checkpoint";

pub fn save_checkpoint<T: Scalar>(
    mut out: impl Write,
    model: &MhgatModel<T>,
) -> Result<(), CheckpointError> {
    let doc = CheckpointDoc {
        format: FORMAT.to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        model: model.clone(),
    };
    serde_json::to_writer(&mut out, &doc)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(input: impl Read) -> Result<MhgatModel<T>, CheckpointError> {
    let doc: CheckpointDoc<T> = serde_json::from_reader(input)?;
    if doc.format != FORMAT {
        return Err(CheckpointError::Shape(format!("unknown format tag {:?}", doc.format)));
    }
    validate_shapes(&doc.model)?;
    Ok(doc.model)
}

fn validate_shapes<T: Scalar>(model: &MhgatModel<T>) -> Result<(), CheckpointError> {
    let h: &ModelHyper<T> = &model.hyper;
    if model.params.gat.len() != 3 || model.params.lin.len() != 3 {
        return Err(CheckpointError::Shape("expected 3 attention and 3 linear layers".into()));
    }
    if model.graphs.len() != 3 {
        return Err(CheckpointError::Shape("expected 3 layer graphs".into()));
    }
    let width = h.heads * h.head_dim;
    let mut expect_in = model.params.gat[0].in_dim;
    for (i, g) in model.params.gat.iter().enumerate() {
        if g.heads != h.heads || g.head_dim != h.head_dim {
            return Err(CheckpointError::Shape(format!("gat layer {i} head shape mismatch")));
        }
        if g.in_dim != expect_in {
            return Err(CheckpointError::Shape(format!(
                "gat layer {i} in_dim {} != {}",
                g.in_dim, expect_in
            )));
        }
        if g.w.len() != h.heads || g.a.len() != h.heads || g.a2.len() != h.heads {
            return Err(CheckpointError::Shape(format!("gat layer {i} parameter count mismatch")));
        }
        for (m, w) in g.w.iter().enumerate() {
            if w.rows != g.head_dim || w.cols != g.in_dim || w.data.len() != w.rows * w.cols {
                return Err(CheckpointError::Shape(format!("gat layer {i} head {m} W shape")));
            }
        }
        for a in &g.a {
            if a.len() != 2 * g.head_dim {
                return Err(CheckpointError::Shape(format!("gat layer {i} attention vector length")));
            }
        }
        for a2 in &g.a2 {
            if a2.len() != g.edge_dim {
                return Err(CheckpointError::Shape(format!("gat layer {i} edge map length")));
            }
        }
        expect_in = width;
    }
    let lin_dims = [(width, h.lin_hidden.0), (h.lin_hidden.0, h.lin_hidden.1), (h.lin_hidden.1, 1)];
    for (i, (lin, &(fi, fo))) in model.params.lin.iter().zip(&lin_dims).enumerate() {
        if lin.w.rows != fo || lin.w.cols != fi || lin.b.len() != fo {
            return Err(CheckpointError::Shape(format!("linear layer {i} shape mismatch")));
        }
        if lin.w.data.len() != lin.w.rows * lin.w.cols {
            return Err(CheckpointError::Shape(format!("linear layer {i} data length")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mhgat::Ablation;
    use crate::topology::Network;

    #[test]
    fn roundtrip_is_bit_exact() {
        let net: Network<f64> = Network::nsfnet();
        let model = MhgatModel::new(&net, ModelHyper::default(), Ablation::NONE, 42);
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model).unwrap();
        let loaded: MhgatModel<f64> = load_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(loaded.params, model.params);
        assert_eq!(loaded.topology_hash, model.topology_hash);
        // Saving the loaded model reproduces the bytes.
        let mut buf2 = Vec::new();
        save_checkpoint(&mut buf2, &loaded).unwrap();
        assert_eq!(buf, buf2);
    }

    #[test]
    fn tampered_shape_rejected() {
        let net: Network<f64> = Network::nsfnet();
        let mut model = MhgatModel::new(&net, ModelHyper::default(), Ablation::NONE, 42);
        model.params.gat[1].w[0].data.pop();
        let mut buf = Vec::new();
        save_checkpoint(&mut buf, &model).unwrap();
        assert!(matches!(load_checkpoint::<f64>(buf.as_slice()), Err(CheckpointError::Shape(_))));
    }

    #[test]
    fn foreign_topology_refused() {
        let net: Network<f64> = Network::nsfnet();
        let model = MhgatModel::new(&net, ModelHyper::default(), Ablation::NONE, 42);
        let other: Network<f64> = Network::complete(10);
        assert!(matches!(
            model.verify_topology(&other),
            Err(CheckpointError::TopologyMismatch { .. })
        ));
        assert!(model.verify_topology(&net).is_ok());
    }
}
