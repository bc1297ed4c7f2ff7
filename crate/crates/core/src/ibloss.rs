//! Link-prediction cross entropy plus the weighted edge-selection divergence.

use serde::{Deserialize, Serialize};

use crate::autodiff::{self, Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::nets::EdgeSelectionProbabilities;

/// Lower and upper clamp for probabilities entering a logarithm.
pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob(x: f64) -> f64 {
    x.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

pub fn bce(y_hat: f64, y: u8) -> f64 {
    let p = clamp_prob(y_hat);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

pub fn bernoulli_kl(p: f64, q: f64) -> f64 {
    autodiff::bernoulli_kl(clamp_prob(p), clamp_prob(q))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Mean cross entropy.
    pub task: f64,
    /// Divergence summed over queries and edges.
    pub kl: f64,
    pub beta: f64,
    /// Always `task + beta * kl`.
    pub total: f64,
}

impl LossBreakdown {
    pub fn new(task: f64, kl: f64, beta: f64) -> Self {
        LossBreakdown {
            task,
            kl,
            beta,
            total: task + beta * kl,
        }
    }
}

/// Cross entropy of one prediction, on the tape.
pub fn bce_on_tape(tape: &mut Tape, y_hat: Var, y: u8) -> Result<Var> {
    let p = tape.clamp(y_hat, PROB_EPS, 1.0 - PROB_EPS)?;
    let target = if y == 1 {
        p
    } else {
        let neg = tape.scale(p, -1.0)?;
        tape.shift(neg, 1.0)?
    };
    let l = tape.log(target)?;
    let l = tape.sum(l)?;
    tape.scale(l, -1.0)
}

/// Divergence summed over paired `p`/`q` handles, on the tape. An empty edge
/// list yields a constant zero.
pub fn kl_on_tape(tape: &mut Tape, p: &[Var], q: &[Var]) -> Result<Var> {
    if p.len() != q.len() {
        return Err(Error::Contract(format!("{} p values for {} q values", p.len(), q.len())));
    }
    if p.is_empty() {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let pv = tape.concat(p)?;
    let qv = tape.concat(q)?;
    let pv = tape.clamp(pv, PROB_EPS, 1.0 - PROB_EPS)?;
    let qv = tape.clamp(qv, PROB_EPS, 1.0 - PROB_EPS)?;
    let kl = tape.bernoulli_kl(pv, qv)?;
    tape.sum(kl)
}

/// Handles of one query's loss terms.
#[derive(Clone, Copy, Debug)]
pub struct QueryLoss {
    pub bce: Var,
    pub kl: Var,
    /// `bce / n + beta * kl`, the query's share of the batch objective.
    pub objective: Var,
}

pub fn query_loss_on_tape(
    tape: &mut Tape,
    y_hat: Var,
    y: u8,
    p: &[Var],
    q: &[Var],
    batch_size: usize,
    beta: f64,
) -> Result<QueryLoss> {
    if batch_size == 0 {
        return Err(Error::Contract("empty batch".into()));
    }
    let bce = bce_on_tape(tape, y_hat, y)?;
    let kl = kl_on_tape(tape, p, q)?;
    let a = tape.scale(bce, (batch_size as f64).recip())?;
    let b = tape.scale(kl, beta)?;
    let objective = tape.add(a, b)?;
    Ok(QueryLoss { bce, kl, objective })
}

/// Sums per-query values in order: `task = sum(bce) / n`, `kl = sum(kl)`.
pub fn combine(bces: &[f64], kls: &[f64], beta: f64) -> Result<LossBreakdown> {
    if bces.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let task = bces.iter().sum::<f64>() / bces.len() as f64;
    let kl = kls.iter().sum::<f64>();
    Ok(LossBreakdown::new(task, kl, beta))
}

pub fn total_loss(batch: &[(f64, u8, &EdgeSelectionProbabilities)], beta: f64) -> Result<LossBreakdown> {
    let bces: Vec<f64> = batch.iter().map(|&(y_hat, y, _)| bce(y_hat, y)).collect();
    let kls: Vec<f64> = batch
        .iter()
        .map(|(_, _, probs)| probs.p.iter().zip(&probs.q).map(|(&p, &q)| bernoulli_kl(p, q)).sum())
        .collect();
    combine(&bces, &kls, beta)
}
