use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Manifest, Tensor};
use crate::error::{Error, Result};

/// Widths of every layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub d_s: usize,
    pub d_e: usize,
    pub d_t: usize,
    pub h_agg: usize,
    pub h1: usize,
    pub h2: usize,
}

impl NetDims {
    /// Hidden widths default to 64.
    pub fn new(d_s: usize, d_e: usize, d_t: usize) -> Self {
        NetDims {
            d_s,
            d_e,
            d_t,
            h_agg: 64,
            h1: 64,
            h2: 64,
        }
    }

    /// Width of an aggregated message `[s || f_time || e]`.
    pub fn message_width(&self) -> usize {
        self.d_s + self.d_t + self.d_e
    }
}

/// Learnable cosine time encoding `d_t^(-1/2) * cos(omega_k * dt)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeEncoder {
    pub omega: Tensor,
}

impl TimeEncoder {
    /// Frequencies `10^(-k c)` spanning `[1 / time_span, 1]`.
    pub fn new(d_t: usize, time_span: f64) -> Self {
        let c = if d_t > 1 && time_span > 1.0 {
            time_span.log10() / (d_t - 1) as f64
        } else {
            0.0
        };
        let omega = (0..d_t).map(|k| 10f64.powf(-(k as f64) * c)).collect();
        TimeEncoder {
            omega: Tensor::vector(omega),
        }
    }

    pub fn d_t(&self) -> usize {
        self.omega.len()
    }

    pub fn encode(&self, delta_t: f64) -> Vec<f64> {
        let norm = (self.d_t() as f64).sqrt().recip();
        self.omega.data().iter().map(|w| norm * (w * delta_t).cos()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BranchKind {
    /// `p_phi2` / `q_phi3`: three-layer edge head.
    EdgeSelector,
    /// `p_phi1`: two-layer link head.
    LinkPredictor,
}

/// Aggregation, residual and head weights of one branch. No bias terms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchParams {
    pub kind: BranchKind,
    /// `h_agg x (d_s + d_t + d_e)`
    pub w_agg1: Tensor,
    /// `d_s x h_agg`
    pub w_agg2: Tensor,
    /// `d_s x d_s`
    pub w_res: Tensor,
    /// Head layers applied to `[h_a || h_b]`, the last one producing a logit.
    pub head: Vec<Tensor>,
}

fn glorot(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    Tensor::matrix(rows, cols, data).expect("consistent shape")
}

impl BranchParams {
    pub fn init(kind: BranchKind, dims: &NetDims, rng: &mut ChaCha8Rng) -> Self {
        let w_agg1 = glorot(rng, dims.h_agg, dims.message_width());
        let w_agg2 = glorot(rng, dims.d_s, dims.h_agg);
        let w_res = glorot(rng, dims.d_s, dims.d_s);
        let head = match kind {
            BranchKind::EdgeSelector => vec![
                glorot(rng, dims.h1, 2 * dims.d_s),
                glorot(rng, dims.h2, dims.h1),
                glorot(rng, 1, dims.h2),
            ],
            BranchKind::LinkPredictor => {
                vec![glorot(rng, dims.h1, 2 * dims.d_s), glorot(rng, 1, dims.h1)]
            }
        };
        BranchParams {
            kind,
            w_agg1,
            w_agg2,
            w_res,
            head,
        }
    }

    pub fn zeros(kind: BranchKind, dims: &NetDims) -> Self {
        let head = match kind {
            BranchKind::EdgeSelector => vec![
                Tensor::zeros(&[dims.h1, 2 * dims.d_s]),
                Tensor::zeros(&[dims.h2, dims.h1]),
                Tensor::zeros(&[1, dims.h2]),
            ],
            BranchKind::LinkPredictor => {
                vec![Tensor::zeros(&[dims.h1, 2 * dims.d_s]), Tensor::zeros(&[1, dims.h1])]
            }
        };
        BranchParams {
            kind,
            w_agg1: Tensor::zeros(&[dims.h_agg, dims.message_width()]),
            w_agg2: Tensor::zeros(&[dims.d_s, dims.h_agg]),
            w_res: Tensor::zeros(&[dims.d_s, dims.d_s]),
            head,
        }
    }

    fn named(&self) -> Vec<(&'static str, &Tensor)> {
        let mut out = vec![("w_agg1", &self.w_agg1), ("w_agg2", &self.w_agg2), ("w_res", &self.w_res)];
        for (i, w) in self.head.iter().enumerate() {
            out.push((["w1", "w2", "w3"][i], w));
        }
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = vec![&mut self.w_agg1, &mut self.w_agg2, &mut self.w_res];
        out.extend(self.head.iter_mut());
        out
    }
}

/// All trainable state plus the temperature and the bottleneck weight.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: NetDims,
    /// Link predictor.
    pub phi1: BranchParams,
    /// Edge selector.
    pub phi2: BranchParams,
    /// History-only prior.
    pub phi3: BranchParams,
    pub time_enc: TimeEncoder,
    pub tau: f64,
    pub beta: f64,
}

impl ModelParams {
    /// Glorot-uniform weights drawn in a fixed order from `seed`.
    pub fn init(dims: NetDims, time_span: f64, tau: f64, beta: f64, seed: u64) -> Result<Self> {
        check_hyper(tau, beta)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(ModelParams {
            dims,
            phi1: BranchParams::init(BranchKind::LinkPredictor, &dims, &mut rng),
            phi2: BranchParams::init(BranchKind::EdgeSelector, &dims, &mut rng),
            phi3: BranchParams::init(BranchKind::EdgeSelector, &dims, &mut rng),
            time_enc: TimeEncoder::new(dims.d_t, time_span),
            tau,
            beta,
        })
    }

    /// Flat `(name, tensor)` list in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (prefix, b) in [("phi1", &self.phi1), ("phi2", &self.phi2), ("phi3", &self.phi3)] {
            for (n, t) in b.named() {
                out.push((format!("{prefix}.{n}"), t));
            }
        }
        out.push(("time_enc.omega".to_string(), &self.time_enc.omega));
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out = Vec::new();
        out.extend(self.phi1.tensors_mut());
        out.extend(self.phi2.tensors_mut());
        out.extend(self.phi3.tensors_mut());
        out.push(&mut self.time_enc.omega);
        out
    }

    pub fn flat(&self) -> Vec<Tensor> {
        self.tensors().into_iter().cloned().collect()
    }

    /// Copy of `self` with tensor values replaced, in canonical order.
    pub fn with_flat(&self, values: &[Tensor]) -> Result<Self> {
        let mut out = self.clone();
        let slots = out.tensors_mut();
        if slots.len() != values.len() {
            return Err(Error::Contract(format!(
                "{} tensors supplied for {} parameters",
                values.len(),
                slots.len()
            )));
        }
        for (slot, v) in slots.into_iter().zip(values) {
            if slot.shape() != v.shape() {
                return Err(Error::Shape {
                    op: "with_flat",
                    left: slot.shape().to_vec(),
                    right: v.shape().to_vec(),
                });
            }
            *slot = v.clone();
        }
        Ok(out)
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn to_manifest(&self) -> Manifest {
        let mut m = Manifest::new();
        m.meta.insert("tau".into(), self.tau.into());
        m.meta.insert("beta".into(), self.beta.into());
        m.meta.insert(
            "dims".into(),
            serde_json::to_value(self.dims).expect("dims serialize"),
        );
        for (name, t) in self.named_tensors() {
            m.push(name, t);
        }
        m
    }

    /// Rebuilds a model, checking every tensor against the recorded dims.
    pub fn from_manifest(m: &Manifest) -> Result<Self> {
        let get = |key: &str| {
            m.meta
                .get(key)
                .cloned()
                .ok_or_else(|| Error::Checkpoint(format!("manifest lacks {key}")))
        };
        let dims: NetDims = serde_json::from_value(get("dims")?)
            .map_err(|e| Error::Checkpoint(format!("bad dims: {e}")))?;
        let tau = get("tau")?
            .as_f64()
            .ok_or_else(|| Error::Checkpoint("tau is not a number".into()))?;
        let beta = get("beta")?
            .as_f64()
            .ok_or_else(|| Error::Checkpoint("beta is not a number".into()))?;
        check_hyper(tau, beta).map_err(|e| Error::Checkpoint(e.to_string()))?;

        let mut model = ModelParams {
            dims,
            phi1: BranchParams::zeros(BranchKind::LinkPredictor, &dims),
            phi2: BranchParams::zeros(BranchKind::EdgeSelector, &dims),
            phi3: BranchParams::zeros(BranchKind::EdgeSelector, &dims),
            time_enc: TimeEncoder {
                omega: Tensor::zeros(&[dims.d_t]),
            },
            tau,
            beta,
        };
        let names: Vec<String> = model.named_tensors().into_iter().map(|(n, _)| n).collect();
        if m.tensors.len() != names.len() {
            return Err(Error::Checkpoint(format!(
                "manifest has {} tensors, model needs {}",
                m.tensors.len(),
                names.len()
            )));
        }
        for (slot, name) in model.tensors_mut().into_iter().zip(&names) {
            let t = m.tensor(name)?;
            if t.shape() != slot.shape() {
                return Err(Error::Checkpoint(format!(
                    "{name}: shape {:?} does not match dims ({:?})",
                    t.shape(),
                    slot.shape()
                )));
            }
            if !t.all_finite() {
                return Err(Error::Checkpoint(format!("{name}: non-finite values")));
            }
            *slot = t;
        }
        Ok(model)
    }
}

fn check_hyper(tau: f64, beta: f64) -> Result<()> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::Contract(format!("tau must be positive, got {tau}")));
    }
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::Contract(format!("beta must be non-negative, got {beta}")));
    }
    Ok(())
}
