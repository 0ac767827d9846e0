//! Versioned checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic   8 bytes  "TSQCKPT\0"
//! hlen    u64      byte length of the JSON header
//! header  hlen     UTF-8 JSON, see `Header`
//! arrays           every parameter array in `ModelParams::layout` order,
//!                  row-major, each element `dtype` little-endian
//! ```

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::params::{FeedbackRouting, Hyper, ModelParams};
use crate::numerics::{Scalar, INIT_RANGE};
use crate::vocab::Vocab;

pub const MAGIC: &[u8; 8] = b"TSQCKPT\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayHeader {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Variants {
    pub attention_feedback: FeedbackRouting,
    pub dropout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub version: u32,
    pub dtype: String,
    pub hyper: Hyper,
    pub seed: u64,
    pub init_range: f64,
    pub variants: Variants,
    pub input_vocab: Vocab,
    pub output_vocab: Vocab,
    pub arrays: Vec<ArrayHeader>,
    /// Free-form run metadata (step, dev F1, ...).
    #[serde(default)]
    pub meta: serde_json::Value,
}

/// Model parameters bundled with the vocabularies they were trained with.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint<S> {
    pub params: ModelParams<S>,
    pub input_vocab: Vocab,
    pub output_vocab: Vocab,
    pub seed: u64,
    pub meta: serde_json::Value,
}

impl<S: Scalar> Checkpoint<S> {
    pub fn new(params: ModelParams<S>, input_vocab: Vocab, output_vocab: Vocab, seed: u64) -> Self {
        Checkpoint {
            params,
            input_vocab,
            output_vocab,
            seed,
            meta: serde_json::Value::Null,
        }
    }

    pub fn header(&self) -> Header {
        Header {
            version: FORMAT_VERSION,
            dtype: S::DTYPE.to_string(),
            hyper: self.params.hyper.clone(),
            seed: self.seed,
            init_range: INIT_RANGE,
            variants: Variants {
                attention_feedback: self.params.hyper.feedback,
                dropout_rate: self.params.hyper.dropout_rate,
            },
            input_vocab: self.input_vocab.clone(),
            output_vocab: self.output_vocab.clone(),
            arrays: self
                .params
                .layout()
                .into_iter()
                .map(|(name, (rows, cols))| ArrayHeader { name, rows, cols })
                .collect(),
            meta: self.meta.clone(),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let mut out = Vec::with_capacity(16 + header.len() + self.params.num_params() * S::BYTES);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in self.params.to_flat() {
            x.write_le(&mut out);
        }
        Ok(out)
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let header = read_header(bytes)?;
        if header.dtype != S::DTYPE {
            return Err(Error::Checkpoint(format!(
                "checkpoint stores {} values, expected {}",
                header.dtype,
                S::DTYPE
            )));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = &bytes[16 + hlen..];

        let mut params = ModelParams::<S>::zeros(&header.hyper);
        let layout: Vec<ArrayHeader> = params
            .layout()
            .into_iter()
            .map(|(name, (rows, cols))| ArrayHeader { name, rows, cols })
            .collect();
        if layout != header.arrays {
            return Err(Error::Checkpoint(
                "array table does not match the hyperparameters".into(),
            ));
        }
        let n = params.num_params();
        if body.len() != n * S::BYTES {
            return Err(Error::Checkpoint(format!(
                "expected {} bytes of parameters, found {}",
                n * S::BYTES,
                body.len()
            )));
        }
        let flat: Vec<S> = body.chunks_exact(S::BYTES).map(S::read_le).collect();
        params.set_flat(&flat)?;
        if params.hyper.input_vocab != header.input_vocab.len()
            || params.hyper.output_vocab != header.output_vocab.len()
        {
            return Err(Error::Checkpoint("vocabulary sizes disagree with hyperparameters".into()));
        }
        Ok(Checkpoint {
            params,
            input_vocab: header.input_vocab,
            output_vocab: header.output_vocab,
            seed: header.seed,
            meta: header.meta,
        })
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

/// Parses only the magic and JSON header.
pub fn read_header(bytes: &[u8]) -> Result<Header> {
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let end = 16usize
        .checked_add(hlen)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&bytes[16..end])?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    Ok(header)
}
