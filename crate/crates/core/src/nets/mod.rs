//! Selector, prior and link-predictor networks over a computational subgraph.

mod forward;
mod params;

pub use forward::{
    Branch, BranchVars, EdgeWeights, Forward, Message, ParamVars, SelectorOutput, SubgraphIndex,
};
pub use params::{BranchKind, BranchParams, ModelParams, NetDims, TimeEncoder};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::tgraph::{ComputationalSubgraph, EdgeId, TemporalGraphStore, Timestamp};

/// Extracted `p` and `q` values, aligned with `edges`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EdgeSelectionProbabilities {
    pub edges: Vec<(EdgeId, Timestamp)>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl EdgeSelectionProbabilities {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    fn position(&self, edge: EdgeId) -> Option<usize> {
        self.edges.iter().position(|&(e, _)| e == edge)
    }

    pub fn p_of(&self, edge: EdgeId) -> Option<f64> {
        self.position(edge).map(|i| self.p[i])
    }

    pub fn q_of(&self, edge: EdgeId) -> Option<f64> {
        self.position(edge).map(|i| self.q[i])
    }
}

pub fn encode_time(enc: &TimeEncoder, delta_t: f64) -> Vec<f64> {
    enc.encode(delta_t)
}

/// `sigmoid(head(h_a, h_b) / tau)` for a selector-shaped branch.
pub fn selection_probability(branch: &BranchParams, h_a: &[f64], h_b: &[f64], tau: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(Error::Contract(format!("tau must be positive, got {tau}")));
    }
    let mut tape = Tape::new();
    let head: Vec<Var> = branch.head.iter().map(|w| tape.constant(w.clone())).collect();
    let a = tape.constant(Tensor::vector(h_a.to_vec()));
    let b = tape.constant(Tensor::vector(h_b.to_vec()));
    let z = forward::head_logit(&mut tape, &head, a, b)?;
    let z = tape.scale(z, tau.recip())?;
    let p = tape.sigmoid(z)?;
    Ok(tape.item(p))
}

pub fn forward_selector(
    model: &ModelParams,
    store: &TemporalGraphStore,
    sg: &ComputationalSubgraph,
) -> Result<EdgeSelectionProbabilities> {
    let index = SubgraphIndex::new(store, sg);
    let mut fwd = Forward::new(model, store);
    let out = fwd.selector(&index)?;
    let tape = fwd.tape();
    Ok(EdgeSelectionProbabilities {
        edges: (0..index.len()).map(|i| (index.edges[i], index.time_of(i))).collect(),
        p: out.p.iter().map(|&v| tape.item(v)).collect(),
        q: out.q.iter().map(|&v| tape.item(v)).collect(),
    })
}

/// Link probability with `probs` as fixed edge weights; `None` weighs every
/// edge by one.
pub fn predict_link(
    model: &ModelParams,
    store: &TemporalGraphStore,
    sg: &ComputationalSubgraph,
    probs: Option<&EdgeSelectionProbabilities>,
) -> Result<f64> {
    let index = SubgraphIndex::new(store, sg);
    let mut fwd = Forward::new(model, store);
    let y = match probs {
        None => fwd.predict(&index, EdgeWeights::Ones)?,
        Some(probs) => {
            let mut w = Vec::with_capacity(index.len());
            for &e in &index.edges {
                let p = probs
                    .p_of(e)
                    .ok_or_else(|| Error::Contract(format!("no probability for edge {e}")))?;
                w.push(Some(fwd.tape_mut().constant(Tensor::scalar(p))));
            }
            fwd.predict(&index, EdgeWeights::Selected(&w))?
        }
    };
    Ok(fwd.tape().item(y))
}
