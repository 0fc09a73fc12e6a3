//! Learned rangers: a CNN over CSI amplitudes plus RSS, and an RSS-only MLP.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ApOffsetTable, RangingError, RangingInput, RangingOutput, D_MAX, S_MAX};
use crate::channel_sim::NUM_SUBCARRIERS;
use crate::nn_core::{NnError, ParamSet, Tape, Tensor, Var};

pub const CHECKPOINT_FORMAT: &str = "beaconloc-model";
pub const CHECKPOINT_VERSION: u32 = 1;
/// RSS enters the networks as (rss − center)/scale.
pub const RSS_CENTER_DBM: f64 = -60.0;
pub const RSS_SCALE_DB: f64 = 20.0;
/// dB per unit of the stored `ap_offsets` parameter. Adam moves a parameter
/// by about the learning rate per step, so unit-dB storage would leave the
/// offsets nearly frozen.
pub const OFFSET_UNIT_DB: f64 = 10.0;

const CONV_WIDTH: usize = 4;
const POOL: usize = 2;
const OFFSETS: &str = "ap_offsets";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    Valid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Topology {
    /// conv(B×4) → conv(1×4) → pool → conv → conv → pool → FC ×3 → heads.
    Cnn { beacons: usize, filters: usize, hidden: usize, padding: Padding },
    /// RSS only: two hidden layers → heads.
    Fc { beacons: usize, hidden: usize },
}

impl Topology {
    pub fn cnn(beacons: usize) -> Self {
        Topology::Cnn { beacons, filters: 64, hidden: 256, padding: Padding::Valid }
    }

    pub fn fc(beacons: usize) -> Self {
        Topology::Fc { beacons, hidden: 128 }
    }

    pub fn beacons(&self) -> usize {
        match *self {
            Topology::Cnn { beacons, .. } | Topology::Fc { beacons, .. } => beacons,
        }
    }

    /// Width of the CNN feature map after the final pooling.
    fn conv_out_width() -> usize {
        let k = CONV_WIDTH - 1;
        let w = (NUM_SUBCARRIERS - 2 * k) / POOL;
        (w - 2 * k) / POOL
    }

    /// `(name, shape, fan_in)` of every weight and bias.
    fn layers(&self) -> Vec<(String, Vec<usize>, usize)> {
        let mut out = Vec::new();
        let dense = |out: &mut Vec<(String, Vec<usize>, usize)>, name: &str, i: usize, o: usize| {
            out.push((format!("{name}.w"), vec![i, o], i));
            out.push((format!("{name}.b"), vec![1, o], i));
        };
        let (features, hidden, layers) = match *self {
            Topology::Cnn { beacons: b, filters: f, hidden, .. } => {
                out.push(("conv1.w".into(), vec![f, 2, b, CONV_WIDTH], 2 * b * CONV_WIDTH));
                out.push(("conv1.b".into(), vec![1, f, 1, 1], 2 * b * CONV_WIDTH));
                for k in 2..=4 {
                    out.push((format!("conv{k}.w"), vec![f, f, CONV_WIDTH], f * CONV_WIDTH));
                    out.push((format!("conv{k}.b"), vec![1, f, 1], f * CONV_WIDTH));
                }
                (f * Self::conv_out_width() + 2 * b, hidden, 3)
            }
            Topology::Fc { beacons: b, hidden } => (2 * b, hidden, 2),
        };
        let mut width = features;
        for k in 1..=layers {
            dense(&mut out, &format!("fc{k}"), width, hidden);
            width = hidden;
        }
        dense(&mut out, "head_d", hidden, 1);
        dense(&mut out, "head_s", hidden, 1);
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NnModel {
    pub topology: Topology,
    /// Network weights plus the `ap_offsets` vector.
    pub params: ParamSet,
    pub d_max: f64,
    pub s_max: f64,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    /// Free-form provenance lines; ignored on load.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    header: Vec<String>,
    topology: Topology,
    d_max: f64,
    s_max: f64,
    rss_center_dbm: f64,
    rss_scale_db: f64,
    offset_unit_db: f64,
    params: ParamSet,
}

impl NnModel {
    /// Uniform fan-in scaled weights (±√(6/fan_in)), zero biases and offsets.
    pub fn new(topology: Topology, num_aps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, shape, fan_in) in topology.layers() {
            let n: usize = shape.iter().product();
            let data = if name.ends_with(".w") {
                let a = (6.0 / fan_in as f64).sqrt();
                (0..n).map(|_| rng.random_range(-a..a)).collect()
            } else {
                vec![0.0; n]
            };
            params.insert(name, Tensor::new(shape, data).expect("shape from layer table"));
        }
        params.insert(OFFSETS, Tensor::zeros(&[num_aps]));
        Self { topology, params, d_max: D_MAX, s_max: S_MAX }
    }

    /// Every weight, bias and offset set to zero.
    pub fn zeroed(topology: Topology, num_aps: usize) -> Self {
        let mut params = ParamSet::new();
        for (name, shape, _) in topology.layers() {
            params.insert(name, Tensor::zeros(&shape));
        }
        params.insert(OFFSETS, Tensor::zeros(&[num_aps]));
        Self { topology, params, d_max: D_MAX, s_max: S_MAX }
    }

    pub fn offsets_name() -> &'static str {
        OFFSETS
    }

    pub fn offsets(&self) -> ApOffsetTable {
        let offsets =
            self.params.get(OFFSETS).map(|t| t.data().iter().map(|o| o * OFFSET_UNIT_DB).collect()).unwrap_or_default();
        ApOffsetTable { offsets }
    }

    pub fn num_aps(&self) -> usize {
        self.params.get(OFFSETS).map_or(0, Tensor::len)
    }

    /// Records every parameter on `tape`, as trainable leaves or constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: bool) -> BTreeMap<String, Var<'t>> {
        self.params
            .iter()
            .map(|(name, t)| {
                let v = if trainable { tape.param(t.clone()) } else { tape.constant(t.clone()) };
                (name.clone(), v)
            })
            .collect()
    }

    /// Stacks inputs into `[M, 2, B, 52]` amplitudes and `[M, 2B]` RSS.
    pub fn batch_tensors(&self, inputs: &[RangingInput]) -> Result<(Tensor, Tensor), RangingError> {
        let b = self.topology.beacons();
        let m = inputs.len();
        let mut csi = Vec::with_capacity(m * 2 * b * NUM_SUBCARRIERS);
        let mut rss = Vec::with_capacity(m * 2 * b);
        for i in inputs {
            i.validate()?;
            if i.beacons != b {
                return Err(RangingError::Input(format!("model expects {b} beacons, input has {}", i.beacons)));
            }
            match (i.has_csi(), self.topology) {
                (true, _) => csi.extend_from_slice(&i.csi),
                // the RSS-only network never reads the amplitudes
                (false, Topology::Fc { .. }) => csi.resize(csi.len() + 2 * b * NUM_SUBCARRIERS, 0.0),
                (false, Topology::Cnn { .. }) => {
                    return Err(RangingError::Input("the CNN backend needs CSI columns, the input has RSS only".into()))
                }
            }
            rss.extend_from_slice(&i.rss);
        }
        Ok((
            Tensor::new(vec![m, 2, b, NUM_SUBCARRIERS], csi)?,
            Tensor::new(vec![m, 2 * b], rss)?,
        ))
    }

    /// Returns `[M, 1]` distance and standard-deviation heads.
    ///
    /// `rss` must already include any AP offsets.
    pub fn forward<'t>(
        &self,
        vars: &BTreeMap<String, Var<'t>>,
        csi: Var<'t>,
        rss: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), RangingError> {
        let p = |name: &str| vars.get(name).copied().ok_or_else(|| NnError::UnknownParam(name.into()));
        let rss_n = rss.add_scalar(-RSS_CENTER_DBM).scale(1.0 / RSS_SCALE_DB);
        let m = rss.shape()[0];
        let mut h = match self.topology {
            Topology::Cnn { filters, .. } => {
                let x = csi.conv2d(p("conv1.w")?)?.add(p("conv1.b")?)?.relu();
                let w = x.shape()[3];
                let mut x = x.reshape(&[m, filters, w])?;
                for k in 2..=4 {
                    x = x.conv1d(p(&format!("conv{k}.w"))?)?.add(p(&format!("conv{k}.b"))?)?.relu();
                    if k % 2 == 0 {
                        // conv1 + conv2, then conv3 + conv4
                        x = x.maxpool_last(POOL)?;
                    }
                }
                let s = x.shape();
                let flat = x.reshape(&[m, s[1] * s[2]])?;
                Var::concat(&[flat, rss_n], 1)?
            }
            Topology::Fc { .. } => rss_n,
        };
        let layers = match self.topology {
            Topology::Cnn { .. } => 3,
            Topology::Fc { .. } => 2,
        };
        for k in 1..=layers {
            h = h.matmul(p(&format!("fc{k}.w"))?)?.add(p(&format!("fc{k}.b"))?)?.relu();
        }
        let d = h.matmul(p("head_d.w")?)?.add(p("head_d.b")?)?.sigmoid().scale(self.d_max);
        let s = h.matmul(p("head_s.w")?)?.add(p("head_s.b")?)?.sigmoid().scale(self.s_max);
        Ok((d, s))
    }

    pub fn range_batch(&self, inputs: &[RangingInput]) -> Result<Vec<RangingOutput>, RangingError> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let (csi, rss) = self.batch_tensors(inputs)?;
        let tape = Tape::new();
        let vars = self.bind(&tape, false);
        let (d, s) = self.forward(&vars, tape.constant(csi), tape.constant(rss))?;
        let (d, s) = (d.value(), s.value());
        Ok(d.data().iter().zip(s.data()).map(|(&d, &s)| RangingOutput::clamped(d, s)).collect())
    }

    pub fn to_json(&self) -> String {
        self.to_json_with_header(&[])
    }

    pub fn to_json_with_header(&self, header: &[String]) -> String {
        let ck = Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            header: header.to_vec(),
            topology: self.topology,
            d_max: self.d_max,
            s_max: self.s_max,
            rss_center_dbm: RSS_CENTER_DBM,
            rss_scale_db: RSS_SCALE_DB,
            offset_unit_db: OFFSET_UNIT_DB,
            params: self.params.clone(),
        };
        serde_json::to_string(&ck).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RangingError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| RangingError::Input(format!("checkpoint: {e}")))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(RangingError::Input(format!("unsupported checkpoint {} v{}", ck.format, ck.version)));
        }
        if ck.rss_center_dbm != RSS_CENTER_DBM || ck.rss_scale_db != RSS_SCALE_DB || ck.offset_unit_db != OFFSET_UNIT_DB {
            return Err(RangingError::Input("checkpoint uses a different RSS normalization".into()));
        }
        for (name, shape, _) in ck.topology.layers() {
            let t = ck.params.get(&name)?;
            if t.shape() != shape.as_slice() {
                return Err(RangingError::Input(format!("checkpoint tensor `{name}` has shape {:?}", t.shape())));
            }
        }
        ck.params.get(OFFSETS)?;
        Ok(Self { topology: ck.topology, params: ck.params, d_max: ck.d_max, s_max: ck.s_max })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn input(b: usize, seed: u64) -> RangingInput {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 2 * b * NUM_SUBCARRIERS;
        let csi: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..2.0)).collect();
        RangingInput {
            ap_id: 0,
            beacons: b,
            csi_complex: csi.iter().map(|&a| Complex64::new(a, 0.0)).collect(),
            csi,
            rss: (0..2 * b).map(|_| rng.random_range(-90.0..-30.0)).collect(),
        }
    }

    #[test]
    fn cnn_flatten_width() {
        assert_eq!(Topology::conv_out_width(), 8);
        let layers = Topology::cnn(4).layers();
        let fc1 = layers.iter().find(|l| l.0 == "fc1.w").unwrap();
        assert_eq!(fc1.1, vec![64 * 8 + 8, 256]);
    }

    #[test]
    fn zero_model_outputs_half_bounds() {
        for topo in [Topology::cnn(2), Topology::fc(2)] {
            let m = NnModel::zeroed(topo, 3);
            let out = m.range_batch(&[input(2, 1), input(2, 2)]).unwrap();
            for o in out {
                assert_eq!(o.d_hat, 50.0);
                assert_eq!(o.s_hat, 5.0);
            }
        }
    }

    #[test]
    fn random_model_is_bounded() {
        let m = NnModel::new(Topology::cnn(4), 5, 7);
        for o in m.range_batch(&[input(4, 3), input(4, 4), input(4, 5)]).unwrap() {
            assert!(o.d_hat > 0.0 && o.d_hat < D_MAX);
            assert!(o.s_hat > 0.0 && o.s_hat < S_MAX);
        }
    }

    #[test]
    fn beacon_count_mismatch_fails() {
        let m = NnModel::new(Topology::fc(4), 1, 0);
        assert!(m.range_batch(&[input(2, 0)]).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = NnModel::new(Topology::cnn(2), 4, 11);
        let back = NnModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert!(NnModel::from_json("{}").is_err());
    }
}
