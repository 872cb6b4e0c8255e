//! Parameter checkpoints and run manifests (JSON).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dense::Dense;
use crate::error::{Error, Result};
use crate::io::snapshots::read_text;
use crate::model::{Mlp, ModelConfig, Params};
use crate::scalar::Scalar;
use crate::train::TrialConfig;

pub const CHECKPOINT_FORMAT: &str = "tgode-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MlpBlob {
    w1: Matrix,
    b1: Matrix,
    w2: Matrix,
    b2: Matrix,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Blob {
    format: String,
    version: u32,
    scalar: String,
    model: ModelConfig,
    #[serde(default)]
    trial: Option<TrialConfig>,
    theta: Vec<Matrix>,
    encoder: Option<MlpBlob>,
    readout: Option<MlpBlob>,
}

fn scalar_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

fn to_matrix<T: Scalar>(m: &Dense<T>) -> Result<Matrix> {
    if !m.is_finite() {
        return Err(Error::invalid("checkpoint", "parameters contain non-finite values"));
    }
    Ok(Matrix {
        rows: m.rows(),
        cols: m.cols(),
        data: m.as_slice().iter().map(|v| v.to_f64_exact()).collect(),
    })
}

fn from_matrix<T: Scalar>(m: Matrix, field: &str) -> Result<Dense<T>> {
    let mut data = Vec::with_capacity(m.data.len());
    for v in m.data {
        let x = T::of(v);
        if x.to_f64_exact() != v {
            return Err(Error::invalid(
                field,
                format!("{v} is not representable at this precision"),
            ));
        }
        data.push(x);
    }
    Dense::from_vec(m.rows, m.cols, data).map_err(|e| Error::invalid(field, e.to_string()))
}

fn mlp_blob<T: Scalar>(m: &Mlp<T>) -> Result<MlpBlob> {
    Ok(MlpBlob {
        w1: to_matrix(&m.w1)?,
        b1: to_matrix(&m.b1)?,
        w2: to_matrix(&m.w2)?,
        b2: to_matrix(&m.b2)?,
    })
}

fn mlp_from<T: Scalar>(b: MlpBlob, name: &str) -> Result<Mlp<T>> {
    Ok(Mlp {
        w1: from_matrix(b.w1, &format!("{name}.w1"))?,
        b1: from_matrix(b.b1, &format!("{name}.b1"))?,
        w2: from_matrix(b.w2, &format!("{name}.w2"))?,
        b2: from_matrix(b.b2, &format!("{name}.b2"))?,
    })
}

/// Serializes weights, architecture and (optionally) the training
/// hyperparameters. Values are written as shortest round-trip decimals.
pub fn checkpoint_to_string<T: Scalar>(params: &Params<T>, trial: Option<&TrialConfig>) -> Result<String> {
    let blob = Blob {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        scalar: scalar_name::<T>().into(),
        model: params.config().clone(),
        trial: trial.cloned(),
        theta: params.theta.iter().map(to_matrix).collect::<Result<_>>()?,
        encoder: params.encoder.as_ref().map(mlp_blob).transpose()?,
        readout: params.readout.as_ref().map(mlp_blob).transpose()?,
    };
    serde_json::to_string_pretty(&blob).map_err(|e| Error::invalid("checkpoint", e.to_string()))
}

pub fn checkpoint_from_str<T: Scalar>(text: &str) -> Result<(Params<T>, Option<TrialConfig>)> {
    let blob: Blob = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: None,
        line: Some(e.line()),
        message: e.to_string(),
    })?;
    if blob.format != CHECKPOINT_FORMAT {
        return Err(Error::invalid("format", format!("expected `{CHECKPOINT_FORMAT}`")));
    }
    if blob.version != CHECKPOINT_VERSION {
        return Err(Error::invalid(
            "version",
            format!("unsupported checkpoint version {}", blob.version),
        ));
    }
    let theta = blob
        .theta
        .into_iter()
        .enumerate()
        .map(|(k, m)| from_matrix(m, &format!("theta[{k}]")))
        .collect::<Result<Vec<_>>>()?;
    let encoder = blob.encoder.map(|b| mlp_from(b, "encoder")).transpose()?;
    let readout = blob.readout.map(|b| mlp_from(b, "readout")).transpose()?;
    Ok((Params::from_parts(blob.model, theta, encoder, readout)?, blob.trial))
}

pub fn write_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    params: &Params<T>,
    trial: Option<&TrialConfig>,
) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, checkpoint_to_string(params, trial)?).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<(Params<T>, Option<TrialConfig>)> {
    let path = path.as_ref();
    checkpoint_from_str(&read_text(path)?).map_err(|e| crate::io::snapshots::with_path(e, path))
}

/// Provenance record written next to every artifact directory. It holds
/// everything needed to regenerate the outputs and nothing time-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub parameters: serde_json::Value,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, parameters: serde_json::Value, outputs: Vec<String>) -> Self {
        Self {
            tool: "tgode".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            parameters,
            outputs,
        }
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::invalid("manifest", e.to_string()))?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        serde_json::from_str(&read_text(path)?).map_err(|e| Error::Parse {
            path: Some(path.to_path_buf()),
            line: Some(e.line()),
            message: e.to_string(),
        })
    }
}
