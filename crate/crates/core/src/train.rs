//! Batched training, negative sampling, evaluation and model selection.

use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{finite_difference_check, Evaluation, GradCheckReport, Tensor, Var};
use crate::error::{Error, Result};
use crate::eval::roc_auc;
use crate::ibloss::{combine, query_loss_on_tape, LossBreakdown};
use crate::nets::{EdgeWeights, Forward, ModelParams, NetDims, SubgraphIndex};
use crate::par::Executor;
use crate::tgraph::{
    extract_computational_subgraph, ExtractConfig, NodeId, QueryLink, StoreView, TemporalGraphStore,
    Timestamp,
};

/// Which edges the link predictor aggregates over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Edges weighted by the learned selection probabilities.
    #[default]
    Invariant,
    /// Every edge with weight one and no divergence term.
    AllLinks,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub tau: f64,
    pub beta: f64,
    /// Hop radius `L`.
    pub hops: u32,
    /// Neighbor cap `K`; 0 disables capping.
    pub cap: usize,
    pub seed: u64,
    pub d_t: usize,
    pub h_agg: usize,
    pub h1: usize,
    pub h2: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub variant: Variant,
    pub workers: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.0005,
            batch_size: 400,
            epochs: 50,
            tau: 1.0,
            beta: 1.0,
            hops: 2,
            cap: 20,
            seed: 0,
            d_t: 9,
            h_agg: 64,
            h1: 64,
            h2: 64,
            patience: 20,
            variant: Variant::Invariant,
            workers: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Contract(msg));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning rate must be non-negative, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad(format!("beta must be non-negative, got {}", self.beta));
        }
        if self.hops == 0 {
            return bad("hop count must be at least 1".into());
        }
        if self.d_t == 0 || self.h_agg == 0 || self.h1 == 0 || self.h2 == 0 {
            return bad("layer widths must be positive".into());
        }
        Ok(())
    }

    pub fn extract(&self) -> ExtractConfig {
        ExtractConfig {
            hops: self.hops,
            cap: (self.cap > 0).then_some(self.cap),
            seed: self.seed,
        }
    }

    pub fn net_dims(&self, store: &TemporalGraphStore) -> NetDims {
        let g = store.dims();
        NetDims {
            d_s: g.d_s,
            d_e: g.d_e,
            d_t: self.d_t,
            h_agg: self.h_agg,
            h1: self.h1,
            h2: self.h2,
        }
    }

    /// Freshly initialized model for data shaped like `store`.
    pub fn init_model(&self, store: &TemporalGraphStore) -> Result<ModelParams> {
        self.validate()?;
        let span = f64::from(store.t_max().max(1));
        ModelParams::init(self.net_dims(store), span, self.tau, self.beta, self.seed)
    }
}

pub(crate) fn mix(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn rng_for(seed: u64, stream: u64, t: Timestamp) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(mix(seed, stream), u64::from(t)))
}

const NEGATIVE_TRIES: usize = 256;

/// Destination replaced by a uniform node that is neither `src` nor linked to
/// `src` at `t`.
fn corrupt_destination(store: &TemporalGraphStore, src: NodeId, t: Timestamp, rng: &mut ChaCha8Rng) -> Result<NodeId> {
    let n = store.num_nodes();
    for _ in 0..NEGATIVE_TRIES {
        let w = rng.random_range(0..n);
        if w != src && !store.has_edge_at(src, w, t) {
            return Ok(w);
        }
    }
    Err(Error::Contract(format!(
        "no negative destination found for node {src} at t = {t} after {NEGATIVE_TRIES} draws"
    )))
}

fn with_negatives(store: &TemporalGraphStore, positives: &[QueryLink], rng: &mut ChaCha8Rng) -> Result<Vec<QueryLink>> {
    let mut out = positives.to_vec();
    for p in positives {
        let w = corrupt_destination(store, p.u, p.t_query, rng)?;
        out.push(QueryLink::new(p.u, w, p.t_query, 0));
    }
    Ok(out)
}

fn positives_at(store: &TemporalGraphStore, t: Timestamp) -> Vec<QueryLink> {
    store
        .edges_at(t)
        .iter()
        .map(|e| QueryLink::new(e.src, e.dst, t, 1))
        .collect()
}

/// Up to `ceil(batch_size / 2)` positives at `t_query`, followed by one
/// corrupted negative for each.
pub fn sample_training_batch(
    view: &StoreView,
    t_query: Timestamp,
    batch_size: usize,
    seed: u64,
) -> Result<Vec<QueryLink>> {
    let store = view.store();
    if !view.times().contains(&t_query) {
        return Err(Error::Contract(format!("t = {t_query} outside the view {:?}", view.times())));
    }
    let all = positives_at(store, t_query);
    if all.is_empty() {
        return Err(Error::Contract(format!("no positive edges at t = {t_query}")));
    }
    let mut rng = rng_for(seed, 1, t_query);
    let take = batch_size.div_ceil(2).max(1).min(all.len());
    let mut picked = rand::seq::index::sample(&mut rng, all.len(), take).into_vec();
    picked.sort_unstable();
    let positives: Vec<QueryLink> = picked.into_iter().map(|i| all[i]).collect();
    with_negatives(store, &positives, &mut rng)
}

/// Where training or evaluation queries come from.
#[derive(Clone, Debug)]
pub enum QuerySource {
    /// Every edge at each timestamp of the window (except the first global
    /// one) is a positive; negatives are drawn by destination corruption.
    Rolling(StoreView),
    /// Fixed labeled queries against a store.
    Fixed {
        store: Arc<TemporalGraphStore>,
        queries: Vec<QueryLink>,
    },
}

impl QuerySource {
    pub fn store(&self) -> &Arc<TemporalGraphStore> {
        match self {
            QuerySource::Rolling(v) => v.store(),
            QuerySource::Fixed { store, .. } => store,
        }
    }

    fn targets(view: &StoreView) -> impl Iterator<Item = Timestamp> + '_ {
        view.times()
            .filter(|&t| t >= 1 && !view.store().edges_at(t).is_empty())
    }

    /// Shuffled batches for one epoch.
    pub fn epoch_batches(&self, batch_size: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<QueryLink>>> {
        let batch_size = batch_size.max(1);
        let epoch_seed = mix(seed, epoch as u64);
        match self {
            QuerySource::Rolling(view) => {
                let mut batches = Vec::new();
                for t in Self::targets(view) {
                    let mut rng = rng_for(epoch_seed, 2, t);
                    let mut pos = positives_at(view.store(), t);
                    pos.shuffle(&mut rng);
                    for chunk in pos.chunks(batch_size.div_ceil(2)) {
                        batches.push(with_negatives(view.store(), chunk, &mut rng)?);
                    }
                }
                Ok(batches)
            }
            QuerySource::Fixed { queries, .. } => {
                let mut qs = queries.clone();
                qs.shuffle(&mut rng_for(epoch_seed, 3, 0));
                Ok(qs.chunks(batch_size).map(<[QueryLink]>::to_vec).collect())
            }
        }
    }

    /// Evaluation queries; identical for every call with the same seed.
    pub fn eval_queries(&self, seed: u64) -> Result<Vec<QueryLink>> {
        match self {
            QuerySource::Rolling(view) => {
                let mut out = Vec::new();
                for t in Self::targets(view) {
                    let mut rng = rng_for(seed, 4, t);
                    out.extend(with_negatives(view.store(), &positives_at(view.store(), t), &mut rng)?);
                }
                if out.is_empty() {
                    return Err(Error::Contract(format!("no queries in window {:?}", view.times())));
                }
                Ok(out)
            }
            QuerySource::Fixed { queries, .. } => Ok(queries.clone()),
        }
    }
}

/// Adam moments per parameter tensor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(model: &ModelParams) -> Self {
        let zeros: Vec<Tensor> = model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        OptimizerState {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

pub fn adam_step(model: &mut ModelParams, grads: &[Tensor], opt: &mut OptimizerState, lr: f64) -> Result<()> {
    let mut params = model.tensors_mut();
    if grads.len() != params.len() || opt.m.len() != params.len() {
        return Err(Error::Contract(format!(
            "{} gradients and {} moments for {} parameters",
            grads.len(),
            opt.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        for other in [grads[i].shape(), opt.m[i].shape(), opt.v[i].shape()] {
            if other != p.shape() {
                return Err(Error::Shape {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: other.to_vec(),
                });
            }
        }
    }
    opt.step += 1;
    let step = i32::try_from(opt.step).unwrap_or(i32::MAX);
    let c1 = 1.0 - ADAM_BETA1.powi(step);
    let c2 = 1.0 - ADAM_BETA2.powi(step);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = opt.m[i].data_mut();
        let v = opt.v[i].data_mut();
        for (k, w) in p.data_mut().iter_mut().enumerate() {
            m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * g[k];
            v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * g[k] * g[k];
            let m_hat = m[k] / c1;
            let v_hat = v[k] / c2;
            *w -= lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Per-query result of a forward (and optionally backward) pass.
#[derive(Clone, Debug)]
pub struct QueryOutcome {
    pub y_hat: f64,
    pub bce: f64,
    pub kl: f64,
    pub grads: Option<Vec<Tensor>>,
}

/// Loss and, if `need_grad`, gradients of `bce / batch_len + beta * kl`.
pub fn run_query(
    model: &ModelParams,
    store: &TemporalGraphStore,
    query: QueryLink,
    cfg: &TrainConfig,
    batch_len: usize,
    need_grad: bool,
) -> Result<QueryOutcome> {
    let sg = extract_computational_subgraph(store, query, cfg.extract())?;
    let index = SubgraphIndex::new(store, &sg);
    let mut fwd = Forward::new(model, store);
    let (y, p, q) = match cfg.variant {
        Variant::Invariant => {
            let sel = fwd.selector(&index)?;
            let w: Vec<Option<Var>> = sel.p.iter().copied().map(Some).collect();
            let y = fwd.predict(&index, EdgeWeights::Selected(&w))?;
            (y, sel.p, sel.q)
        }
        Variant::AllLinks => (fwd.predict(&index, EdgeWeights::Ones)?, Vec::new(), Vec::new()),
    };
    let vars = fwd.vars().flat();
    let mut tape = fwd.into_tape();
    let loss = query_loss_on_tape(&mut tape, y, query.label, &p, &q, batch_len, model.beta)?;
    let grads = if need_grad {
        let g = tape.backward(loss.objective)?;
        Some(vars.iter().map(|&v| g.wrt(&tape, v)).collect())
    } else {
        None
    };
    Ok(QueryOutcome {
        y_hat: tape.item(y),
        bce: tape.item(loss.bce),
        kl: tape.item(loss.kl),
        grads,
    })
}

/// Finite-difference check of one query's full objective (selector variant)
/// over every model parameter.
pub fn loss_gradcheck(
    model: &ModelParams,
    store: &TemporalGraphStore,
    query: QueryLink,
    cfg: &TrainConfig,
    step: f64,
) -> Result<GradCheckReport> {
    let sg = extract_computational_subgraph(store, query, cfg.extract())?;
    let index = SubgraphIndex::new(store, &sg);
    let objective = |params: &[Tensor], need_grad: bool| -> Result<Evaluation> {
        let m = model.with_flat(params)?;
        let mut fwd = Forward::new(&m, store);
        let sel = fwd.selector(&index)?;
        let w: Vec<Option<Var>> = sel.p.iter().copied().map(Some).collect();
        let y = fwd.predict(&index, EdgeWeights::Selected(&w))?;
        let vars = fwd.vars().flat();
        let mut tape = fwd.into_tape();
        let loss = query_loss_on_tape(&mut tape, y, query.label, &sel.p, &sel.q, 1, m.beta)?;
        let grads = if need_grad {
            let g = tape.backward(loss.objective)?;
            Some(vars.iter().map(|&v| g.wrt(&tape, v)).collect())
        } else {
            None
        };
        Ok(Evaluation {
            value: tape.item(loss.objective),
            grads,
            kinks: tape.kink_inputs(),
        })
    };
    finite_difference_check(objective, &model.flat(), step)
}

/// Queries per parallel chunk; gradients are folded into the accumulator in
/// query order after each chunk.
const REDUCE_CHUNK: usize = 32;

fn with_batch_context(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// One optimizer step per batch; returns the mean of the batch losses.
pub fn train_epoch(
    model: &mut ModelParams,
    opt: &mut OptimizerState,
    source: &QuerySource,
    cfg: &TrainConfig,
    epoch: usize,
    exec: &Executor,
) -> Result<LossBreakdown> {
    cfg.validate()?;
    let store = source.store().clone();
    let batches = source.epoch_batches(cfg.batch_size, cfg.seed, epoch)?;
    if batches.is_empty() {
        return Err(Error::Contract("no training queries".into()));
    }
    let (mut task_sum, mut kl_sum) = (0.0, 0.0);
    for (b, batch) in batches.iter().enumerate() {
        let mut acc: Vec<Tensor> = model.tensors().iter().map(|t| Tensor::zeros(t.shape())).collect();
        let mut bces = Vec::with_capacity(batch.len());
        let mut kls = Vec::with_capacity(batch.len());
        for chunk in batch.chunks(REDUCE_CHUNK) {
            let snapshot: &ModelParams = model;
            let outs = exec
                .try_map(chunk, |&q| run_query(snapshot, &store, q, cfg, batch.len(), true))
                .map_err(|e| with_batch_context(e, epoch, b))?;
            for out in outs {
                bces.push(out.bce);
                kls.push(out.kl);
                for (a, g) in acc.iter_mut().zip(out.grads.expect("gradients requested")) {
                    for (x, y) in a.data_mut().iter_mut().zip(g.data()) {
                        *x += y;
                    }
                }
            }
        }
        let loss = combine(&bces, &kls, model.beta)?;
        if !loss.total.is_finite() || acc.iter().any(|g| !g.all_finite()) {
            return Err(Error::Numeric(format!(
                "epoch {epoch}, batch {b}: non-finite loss or gradient (task {}, kl {})",
                loss.task, loss.kl
            )));
        }
        adam_step(model, &acc, opt, cfg.learning_rate)?;
        task_sum += loss.task;
        kl_sum += loss.kl;
    }
    let n = batches.len() as f64;
    Ok(LossBreakdown::new(task_sum / n, kl_sum / n, model.beta))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalOutcome {
    pub queries: Vec<QueryLink>,
    pub scores: Vec<f64>,
    pub roc_auc: f64,
    pub loss: LossBreakdown,
}

/// Forward-only scoring of the source's evaluation queries.
pub fn evaluate(model: &ModelParams, source: &QuerySource, cfg: &TrainConfig, exec: &Executor) -> Result<EvalOutcome> {
    let queries = source.eval_queries(mix(cfg.seed, 0xE7A1))?;
    let store = source.store().clone();
    let outs = exec.try_map(&queries, |&q| run_query(model, &store, q, cfg, queries.len(), false))?;
    let scores: Vec<f64> = outs.iter().map(|o| o.y_hat).collect();
    let labels: Vec<u8> = queries.iter().map(|q| q.label).collect();
    let bces: Vec<f64> = outs.iter().map(|o| o.bce).collect();
    let kls: Vec<f64> = outs.iter().map(|o| o.kl).collect();
    Ok(EvalOutcome {
        roc_auc: roc_auc(&scores, &labels)?,
        loss: combine(&bces, &kls, model.beta)?,
        queries,
        scores,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub roc_auc: f64,
    pub loss: LossBreakdown,
}

impl From<&EvalOutcome> for EvalSummary {
    fn from(e: &EvalOutcome) -> Self {
        EvalSummary {
            roc_auc: e.roc_auc,
            loss: e.loss,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train: LossBreakdown,
    pub val: EvalSummary,
    /// Extra splits evaluated after every epoch, by name.
    pub monitors: Vec<(String, EvalSummary)>,
}

impl EpochRecord {
    /// `epoch task_loss kl_loss total val_auc`
    pub fn log_line(&self) -> String {
        format!(
            "{:>5} {:>12.6} {:>12.6} {:>12.6} {:>8.4}",
            self.epoch, self.train.task, self.train.kl, self.train.total, self.val.roc_auc
        )
    }

    pub fn log_header() -> String {
        format!("{:>5} {:>12} {:>12} {:>12} {:>8}", "epoch", "task_loss", "kl_loss", "total", "val_auc")
    }
}

/// Early stopping on a score to maximize.
#[derive(Clone, Debug)]
pub struct EarlyStopper {
    patience: usize,
    best: Option<(usize, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

impl EarlyStopper {
    pub fn new(patience: usize) -> Self {
        EarlyStopper { patience, best: None }
    }

    /// Strict improvements only, so ties keep the earlier epoch.
    pub fn observe(&mut self, epoch: usize, score: f64) -> StopDecision {
        match self.best {
            Some((_, best)) if score <= best || score.is_nan() => {
                let (best_epoch, _) = self.best.expect("checked");
                if epoch - best_epoch >= self.patience {
                    StopDecision::Stop
                } else {
                    StopDecision::Continue
                }
            }
            _ => {
                self.best = Some((epoch, score));
                StopDecision::Improved
            }
        }
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Clone, Debug)]
pub struct FitResult {
    pub model: ModelParams,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub history: Vec<EpochRecord>,
}

pub fn fit(model: ModelParams, train: &QuerySource, val: &QuerySource, cfg: &TrainConfig) -> Result<FitResult> {
    fit_with(model, train, val, &[], cfg, |_, _, _| Ok(()))
}

/// Trains up to `cfg.epochs`, keeping the model with the best validation
/// ROC-AUC. `on_epoch(record, model, improved)` runs after every epoch.
pub fn fit_with<F>(
    mut model: ModelParams,
    train: &QuerySource,
    val: &QuerySource,
    monitors: &[(&str, &QuerySource)],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<FitResult>
where
    F: FnMut(&EpochRecord, &ModelParams, bool) -> Result<()>,
{
    cfg.validate()?;
    model.tau = cfg.tau;
    model.beta = cfg.beta;
    let exec = Executor::new(cfg.workers)?;
    let mut opt = OptimizerState::new(&model);
    let mut stopper = EarlyStopper::new(cfg.patience.max(1));
    let mut best = model.clone();
    let mut history = Vec::new();
    for epoch in 1..=cfg.epochs {
        let train_loss = train_epoch(&mut model, &mut opt, train, cfg, epoch, &exec)?;
        let val_eval = evaluate(&model, val, cfg, &exec)?;
        let mut extra = Vec::with_capacity(monitors.len());
        for (name, src) in monitors {
            extra.push((name.to_string(), EvalSummary::from(&evaluate(&model, src, cfg, &exec)?)));
        }
        let record = EpochRecord {
            epoch,
            train: train_loss,
            val: EvalSummary::from(&val_eval),
            monitors: extra,
        };
        let decision = stopper.observe(epoch, val_eval.roc_auc);
        if decision == StopDecision::Improved {
            best = model.clone();
        }
        on_epoch(&record, &model, decision == StopDecision::Improved)?;
        history.push(record);
        if decision == StopDecision::Stop {
            break;
        }
    }
    let (best_epoch, best_val_auc) = stopper
        .best()
        .ok_or_else(|| Error::Contract("no epochs were run".into()))?;
    Ok(FitResult {
        model: best,
        best_epoch,
        best_val_auc,
        history,
    })
}
