//! All learnable parameters of the pipeline as one named bundle.

use std::collections::BTreeMap;

use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::io::TensorRecord;
use crate::nn::{Dense, Mlp};
use crate::rng::XorShift64Star;
use crate::rvfe::{init_basicblock, init_params, BasicBlockParams, HdMetaKernelParams};
use crate::sgrid::{init_head_params, init_sgrid_params, HeadParams, SGridParams};
use crate::types::plane;

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub basicblock: BasicBlockParams,
    pub hdmk: HdMetaKernelParams,
    /// Keypoint encoder: `[3 + d_f] -> channels -> channels`.
    pub keypoint_mlp: Mlp,
    pub sgrid: SGridParams,
    pub head: HeadParams,
}

type Tensor<'a> = (String, Vec<usize>, &'a mut Vec<f64>);

fn dense_tensors<'a>(prefix: &str, d: &'a mut Dense, out: &mut Vec<Tensor<'a>>) {
    out.push((format!("{prefix}.weight"), vec![d.outputs, d.inputs], &mut d.weight));
    out.push((format!("{prefix}.bias"), vec![d.outputs], &mut d.bias));
}

fn mlp_tensors<'a>(prefix: &str, m: &'a mut Mlp, out: &mut Vec<Tensor<'a>>) {
    for (i, layer) in m.layers.iter_mut().enumerate() {
        dense_tensors(&format!("{prefix}.{i}"), layer, out);
    }
}

impl ModelWeights {
    /// Deterministic initialization; every value is exactly representable in f32.
    pub fn init(cfg: &PipelineConfig, seed: u64) -> Result<Self> {
        let r = &cfg.rvfe;
        let kp = &cfg.keypoints;
        let basicblock = init_basicblock(seed, plane::BASE, r.c_in);
        let hdmk = init_params(seed, r.c_in, r.c_mid, r.d_f)?;
        let mut rng = XorShift64Star::from_stream(seed, "keypoints");
        let keypoint_mlp = Mlp::random(&[3 + r.d_f, kp.channels, kp.channels], true, &mut rng);
        let sgrid = init_sgrid_params(seed, kp.channels, &cfg.sgrid);
        let head = init_head_params(seed, cfg.sgrid.feature_len(), cfg.head.hidden);
        Ok(Self {
            basicblock,
            hdmk,
            keypoint_mlp,
            sgrid,
            head,
        })
    }

    fn tensors_mut(&mut self) -> Vec<Tensor<'_>> {
        let mut out: Vec<Tensor<'_>> = Vec::new();
        let bb = &mut self.basicblock;
        let (ci, co) = (bb.in_channels, bb.out_channels);
        out.push(("basicblock.conv1".into(), vec![co, ci, 3, 3], &mut bb.conv1));
        out.push(("basicblock.bn1.scale".into(), vec![co], &mut bb.bn1_scale));
        out.push(("basicblock.bn1.shift".into(), vec![co], &mut bb.bn1_shift));
        out.push(("basicblock.conv2".into(), vec![co, co, 3, 3], &mut bb.conv2));
        out.push(("basicblock.bn2.scale".into(), vec![co], &mut bb.bn2_scale));
        out.push(("basicblock.bn2.shift".into(), vec![co], &mut bb.bn2_shift));
        if let Some(p) = bb.projection.as_mut() {
            out.push(("basicblock.projection".into(), vec![co, ci], p));
        }
        let dims: Vec<Vec<usize>> = self.hdmk.tensors().into_iter().map(|t| t.1).collect();
        for ((name, data), dims) in self.hdmk.tensors_mut().into_iter().zip(dims) {
            out.push((name, dims, data));
        }
        mlp_tensors("keypoints.mlp", &mut self.keypoint_mlp, &mut out);
        mlp_tensors("sgrid.fine", &mut self.sgrid.fine, &mut out);
        mlp_tensors("sgrid.coarse", &mut self.sgrid.coarse, &mut out);
        dense_tensors("head.fc1", &mut self.head.fc1, &mut out);
        dense_tensors("head.fc2", &mut self.head.fc2, &mut out);
        dense_tensors("head.confidence", &mut self.head.confidence, &mut out);
        dense_tensors("head.residual", &mut self.head.residual, &mut out);
        out
    }

    pub fn to_records(&self) -> Vec<TensorRecord> {
        let mut copy = self.clone();
        copy.tensors_mut()
            .into_iter()
            .map(|(name, dims, data)| TensorRecord {
                name,
                dims,
                data: data.iter().map(|&v| v as f32).collect(),
            })
            .collect()
    }

    /// Rebuilds weights shaped for `cfg`. Every expected tensor must be present
    /// with matching dims, and no others.
    pub fn from_records(cfg: &PipelineConfig, records: Vec<TensorRecord>) -> Result<Self> {
        let mut by_name = BTreeMap::new();
        for rec in records {
            let name = rec.name.clone();
            if by_name.insert(name.clone(), rec).is_some() {
                return Err(Error::format(format!("weights: duplicate tensor `{name}`")));
            }
        }
        let mut weights = Self::init(cfg, 0)?;
        for (name, dims, data) in weights.tensors_mut() {
            let rec = by_name
                .remove(&name)
                .ok_or_else(|| Error::format(format!("weights: missing tensor `{name}`")))?;
            if rec.dims != dims {
                return Err(Error::format(format!(
                    "weights: tensor `{name}` has dims {:?}, expected {dims:?}",
                    rec.dims
                )));
            }
            *data = rec.data.iter().map(|&v| f64::from(v)).collect();
        }
        if let Some(extra) = by_name.keys().next() {
            return Err(Error::format(format!("weights: unexpected tensor `{extra}`")));
        }
        Ok(weights)
    }
}
