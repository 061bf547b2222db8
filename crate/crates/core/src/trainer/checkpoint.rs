//! Binary checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "C2NE" | u32 version | u64 n | n bytes of JSON header
//! u32 tensor count
//! per tensor: u16 name length | name | u32 rank | u64 dims[rank] | f64 values
//! ```
//!
//! The header carries the training configuration, the number of completed
//! epochs, the original ids of the trained nodes, the optimizer step and
//! the loss log. Tensors are `transform.<i>` (`d x k`, transposed),
//! `embeddings` (`n x k`), `features` (`n x d`) and the Adam moments
//! `adam.first.<j>` / `adam.second.<j>`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{AdamState, EpochLog, TrainConfig};
use crate::capsule::CapsuleParams;
use crate::error::{Error, Result};
use crate::graph::{FeatureSource, FeatureTable, NodeId};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"C2NE";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Completed epochs; training resumes with the next one.
    pub epoch: usize,
    /// Original id of each trained node (identity unless nodes were held
    /// out before training).
    pub node_ids: Vec<NodeId>,
    pub params: CapsuleParams,
    pub optimizer: AdamState,
    pub loss_log: Vec<EpochLog>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    epoch: usize,
    node_ids: Vec<NodeId>,
    learned_features: bool,
    input_dim: usize,
    output_dim: usize,
    optimizer_step: u64,
    loss_log: Vec<EpochLog>,
}

fn write_tensor<W: Write>(out: &mut W, name: &str, dims: &[usize], values: &[f64]) -> Result<()> {
    debug_assert_eq!(dims.iter().product::<usize>(), values.len());
    out.write_all(&(name.len() as u16).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&(dims.len() as u32).to_le_bytes())?;
    for &d in dims {
        out.write_all(&(d as u64).to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&buf)?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_tensor<R: Read>(input: &mut R) -> Result<(String, Vec<usize>, Vec<f64>)> {
    let name_len = u16::from_le_bytes(read_array(input)?) as usize;
    let mut name = vec![0u8; name_len];
    input.read_exact(&mut name)?;
    let name = String::from_utf8(name).map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
    let rank = u32::from_le_bytes(read_array(input)?) as usize;
    if rank > 8 {
        return Err(Error::Checkpoint(format!("tensor {name} has rank {rank}")));
    }
    let dims =
        (0..rank).map(|_| Ok(u64::from_le_bytes(read_array(input)?) as usize)).collect::<Result<Vec<_>>>()?;
    let count: usize = dims.iter().product();
    let mut raw = vec![0u8; count * 8];
    input.read_exact(&mut raw)?;
    let values =
        raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk"))).collect();
    Ok((name, dims, values))
}

impl Checkpoint {
    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        let params = &self.params;
        let (d, k, n) = (params.input_dim(), params.output_dim(), params.num_nodes());
        let header = Header {
            config: self.config.clone(),
            epoch: self.epoch,
            node_ids: self.node_ids.clone(),
            learned_features: params.features().is_learned(),
            input_dim: d,
            output_dim: k,
            optimizer_step: self.optimizer.step,
            loss_log: self.loss_log.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Checkpoint(e.to_string()))?;
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(json.len() as u64).to_le_bytes())?;
        out.write_all(&json)?;

        let moments = self.optimizer.first.len();
        let count = params.num_positions() + 2 + 2 * moments;
        out.write_all(&(count as u32).to_le_bytes())?;
        for (i, w) in params.transforms().iter().enumerate() {
            write_tensor(&mut out, &format!("transform.{i}"), &[d, k], w)?;
        }
        write_tensor(&mut out, "embeddings", &[n, k], params.embeddings())?;
        write_tensor(&mut out, "features", &[n, d], params.features().as_slice())?;
        for (j, m) in self.optimizer.first.iter().enumerate() {
            write_tensor(&mut out, &format!("adam.first.{j}"), &[m.len()], m)?;
        }
        for (j, v) in self.optimizer.second.iter().enumerate() {
            write_tensor(&mut out, &format!("adam.second.{j}"), &[v.len()], v)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Checkpoint> {
        let magic: [u8; 4] = read_array(&mut input)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut input)?);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported format version {version}")));
        }
        let len = u64::from_le_bytes(read_array(&mut input)?) as usize;
        let mut json = vec![0u8; len];
        input.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let count = u32::from_le_bytes(read_array(&mut input)?) as usize;
        let mut transforms = Vec::new();
        let mut embeddings = None;
        let mut features = None;
        let mut first = Vec::new();
        let mut second = Vec::new();
        for _ in 0..count {
            let (name, dims, values) = read_tensor(&mut input)?;
            match name.as_str() {
                "embeddings" => embeddings = Some(values),
                "features" => {
                    if dims.len() != 2 || dims[1] != header.input_dim {
                        return Err(Error::Checkpoint("feature tensor has the wrong shape".into()));
                    }
                    features = Some(values)
                }
                n if n.starts_with("transform.") => transforms.push(values),
                n if n.starts_with("adam.first.") => first.push(values),
                n if n.starts_with("adam.second.") => second.push(values),
                other => return Err(Error::Checkpoint(format!("unknown tensor {other:?}"))),
            }
        }
        let (Some(embeddings), Some(features)) = (embeddings, features) else {
            return Err(Error::Checkpoint("missing embeddings or features".into()));
        };
        let source = if header.learned_features { FeatureSource::Learned } else { FeatureSource::GivenFixed };
        let features = FeatureTable::from_rows(header.input_dim, features, source)?;
        let params = CapsuleParams::from_parts(features, header.output_dim, transforms, embeddings)?;
        if first.len() != second.len() {
            return Err(Error::Checkpoint("unpaired optimizer moments".into()));
        }
        Ok(Checkpoint {
            config: header.config,
            epoch: header.epoch,
            node_ids: header.node_ids,
            params,
            optimizer: AdamState { step: header.optimizer_step, first, second },
            loss_log: header.loss_log,
        })
    }
}
