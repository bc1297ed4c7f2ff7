use std::collections::HashMap;

use super::params::{BranchParams, ModelParams};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};
use crate::tgraph::{ComputationalSubgraph, EdgeId, NodeId, TemporalGraphStore, Timestamp};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Branch {
    /// `phi1`
    Predictor,
    /// `phi2`
    Selector,
    /// `phi3`
    Prior,
}

#[derive(Clone, Debug)]
pub struct BranchVars {
    pub w_agg1: Var,
    pub w_agg2: Var,
    pub w_res: Var,
    pub head: Vec<Var>,
}

impl BranchVars {
    fn register(tape: &mut Tape, b: &BranchParams) -> Self {
        BranchVars {
            w_agg1: tape.param(b.w_agg1.clone()),
            w_agg2: tape.param(b.w_agg2.clone()),
            w_res: tape.param(b.w_res.clone()),
            head: b.head.iter().map(|w| tape.param(w.clone())).collect(),
        }
    }

    fn flat(&self) -> impl Iterator<Item = Var> + '_ {
        [self.w_agg1, self.w_agg2, self.w_res]
            .into_iter()
            .chain(self.head.iter().copied())
    }
}

/// Tape handles for every model tensor.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub phi1: BranchVars,
    pub phi2: BranchVars,
    pub phi3: BranchVars,
    pub omega: Var,
}

impl ParamVars {
    pub fn register(tape: &mut Tape, model: &ModelParams) -> Self {
        ParamVars {
            phi1: BranchVars::register(tape, &model.phi1),
            phi2: BranchVars::register(tape, &model.phi2),
            phi3: BranchVars::register(tape, &model.phi3),
            omega: tape.param(model.time_enc.omega.clone()),
        }
    }

    /// Same order as [`ModelParams::tensors`].
    pub fn flat(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self.phi1.flat().collect();
        out.extend(self.phi2.flat());
        out.extend(self.phi3.flat());
        out.push(self.omega);
        out
    }

    pub fn branch(&self, b: Branch) -> &BranchVars {
        match b {
            Branch::Predictor => &self.phi1,
            Branch::Selector => &self.phi2,
            Branch::Prior => &self.phi3,
        }
    }
}

/// One neighbor term of an aggregation.
#[derive(Clone, Copy, Debug)]
pub struct Message {
    pub neighbor: NodeId,
    /// Time of the edge; the neighbor feature is read at this time.
    pub t: Timestamp,
    pub edge: EdgeId,
    pub delta: u32,
    /// `None` contributes with weight one.
    pub weight: Option<Var>,
}

#[derive(Clone, Copy, Debug)]
struct Incident {
    local: usize,
    neighbor: NodeId,
    t: Timestamp,
}

/// Subgraph edges with local indices and per-node incidence lists.
#[derive(Clone, Debug)]
pub struct SubgraphIndex {
    pub query: crate::tgraph::QueryLink,
    /// Local index to edge id, ordered by time.
    pub edges: Vec<EdgeId>,
    times: Vec<Timestamp>,
    incident: HashMap<NodeId, Vec<Incident>>,
}

impl SubgraphIndex {
    pub fn new(store: &TemporalGraphStore, sg: &ComputationalSubgraph) -> Self {
        let mut edges = Vec::with_capacity(sg.num_edges());
        let mut times = Vec::with_capacity(sg.num_edges());
        let mut incident: HashMap<NodeId, Vec<Incident>> = HashMap::new();
        for (&t, ids) in &sg.per_time_edges {
            for &id in ids {
                let local = edges.len();
                edges.push(id);
                times.push(t);
                let e = store.edge(id);
                incident.entry(e.src).or_default().push(Incident {
                    local,
                    neighbor: e.dst,
                    t,
                });
                if e.dst != e.src {
                    incident.entry(e.dst).or_default().push(Incident {
                        local,
                        neighbor: e.src,
                        t,
                    });
                }
            }
        }
        SubgraphIndex {
            query: sg.query,
            edges,
            times,
            incident,
        }
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn time_of(&self, local: usize) -> Timestamp {
        self.times[local]
    }

    /// Local index ranges sharing a timestamp, ascending.
    pub fn time_groups(&self) -> Vec<(Timestamp, std::ops::Range<usize>)> {
        let mut out: Vec<(Timestamp, std::ops::Range<usize>)> = Vec::new();
        for (i, &t) in self.times.iter().enumerate() {
            match out.last_mut() {
                Some((last, r)) if *last == t => r.end = i + 1,
                _ => out.push((t, i..i + 1)),
            }
        }
        out
    }
}

/// `W_n relu(.. relu(W_1 [h_a || h_b]))`
pub(crate) fn head_logit(tape: &mut Tape, head: &[Var], h_a: Var, h_b: Var) -> Result<Var> {
    let mut x = tape.concat(&[h_a, h_b])?;
    let (last, hidden) = head
        .split_last()
        .ok_or_else(|| Error::Contract("head without layers".into()))?;
    for &w in hidden {
        let z = tape.matmul(w, x)?;
        x = tape.relu(z)?;
    }
    tape.matmul(*last, x)
}

/// Edge weights used by an aggregation.
#[derive(Clone, Copy, Debug)]
pub enum EdgeWeights<'w> {
    /// Every edge counts fully.
    Ones,
    /// Per local edge index; past edges must be present.
    Selected(&'w [Option<Var>]),
}

/// Selection and prior probabilities per local edge index.
#[derive(Clone, Debug)]
pub struct SelectorOutput {
    pub p: Vec<Var>,
    pub q: Vec<Var>,
}

/// Forward pass of one query on a private tape.
pub struct Forward<'a> {
    model: &'a ModelParams,
    store: &'a TemporalGraphStore,
    tape: Tape,
    vars: ParamVars,
    time_cache: HashMap<u32, Var>,
    node_cache: HashMap<(NodeId, Timestamp), Var>,
    edge_cache: HashMap<EdgeId, Var>,
}

impl<'a> Forward<'a> {
    pub fn new(model: &'a ModelParams, store: &'a TemporalGraphStore) -> Self {
        let mut tape = Tape::new();
        let vars = ParamVars::register(&mut tape, model);
        Forward {
            model,
            store,
            tape,
            vars,
            time_cache: HashMap::new(),
            node_cache: HashMap::new(),
            edge_cache: HashMap::new(),
        }
    }

    pub fn tape(&self) -> &Tape {
        &self.tape
    }

    pub fn tape_mut(&mut self) -> &mut Tape {
        &mut self.tape
    }

    pub fn into_tape(self) -> Tape {
        self.tape
    }

    pub fn vars(&self) -> &ParamVars {
        &self.vars
    }

    /// `d_t^(-1/2) * cos(omega * delta)`, shared per `delta`.
    pub fn time_encoding(&mut self, delta: u32) -> Result<Var> {
        if let Some(&v) = self.time_cache.get(&delta) {
            return Ok(v);
        }
        let d_t = self.model.dims.d_t.max(1) as f64;
        let arg = self.tape.scale(self.vars.omega, f64::from(delta))?;
        let c = self.tape.cos(arg)?;
        let v = self.tape.scale(c, d_t.sqrt().recip())?;
        self.time_cache.insert(delta, v);
        Ok(v)
    }

    fn node_feature(&mut self, a: NodeId, t: Timestamp) -> Var {
        if let Some(&v) = self.node_cache.get(&(a, t)) {
            return v;
        }
        let v = self
            .tape
            .constant(Tensor::vector(self.store.node_feature(a, t).to_vec()));
        self.node_cache.insert((a, t), v);
        v
    }

    fn edge_feature(&mut self, e: EdgeId) -> Var {
        if let Some(&v) = self.edge_cache.get(&e) {
            return v;
        }
        let v = self
            .tape
            .constant(Tensor::vector(self.store.edge(e).feat.clone()));
        self.edge_cache.insert(e, v);
        v
    }

    /// Node representation from explicit messages. Messages are put in a
    /// canonical order first, so any permutation gives identical bits.
    pub fn aggregate(
        &mut self,
        branch: Branch,
        a: NodeId,
        feature_time: Timestamp,
        mut msgs: Vec<Message>,
    ) -> Result<Var> {
        self.store.check_node(a)?;
        msgs.sort_by_key(|m| (m.t, m.neighbor, m.edge, m.delta));
        let s_a = self.node_feature(a, feature_time);
        let h_hat = if msgs.is_empty() {
            self.tape
                .constant(Tensor::zeros(&[self.model.dims.message_width()]))
        } else {
            let mut s_terms = Vec::with_capacity(msgs.len());
            let mut f_terms = Vec::with_capacity(msgs.len());
            let mut e_terms = Vec::with_capacity(msgs.len());
            for m in &msgs {
                self.store.check_node(m.neighbor)?;
                s_terms.push((m.weight, self.node_feature(m.neighbor, m.t)));
                f_terms.push((m.weight, self.time_encoding(m.delta)?));
                e_terms.push((m.weight, self.edge_feature(m.edge)));
            }
            let s = self.tape.weighted_sum(&s_terms)?;
            let f = self.tape.weighted_sum(&f_terms)?;
            let e = self.tape.weighted_sum(&e_terms)?;
            self.tape.concat(&[s, f, e])?
        };
        let w = self.vars.branch(branch).clone();
        let z = self.tape.matmul(w.w_agg1, h_hat)?;
        let z = self.tape.relu(z)?;
        let h_tilde = self.tape.matmul(w.w_agg2, z)?;
        let res = self.tape.matmul(w.w_res, s_a)?;
        let pre = self.tape.add(h_tilde, res)?;
        let act = self.tape.tanh(pre)?;
        self.tape.add(s_a, act)
    }

    /// Aggregation of `a` at `t` over subgraph edges: weighted past edges and,
    /// with `include_current`, unit-weight edges at `t`. The own feature of `a`
    /// is read at `feature_time`.
    fn aggregate_over(
        &mut self,
        branch: Branch,
        index: &SubgraphIndex,
        a: NodeId,
        t: Timestamp,
        feature_time: Timestamp,
        weights: EdgeWeights<'_>,
        include_current: bool,
    ) -> Result<Var> {
        let mut msgs = Vec::new();
        for inc in index.incident.get(&a).map(Vec::as_slice).unwrap_or(&[]) {
            let weight = if inc.t < t {
                match weights {
                    EdgeWeights::Ones => None,
                    EdgeWeights::Selected(w) => Some(w.get(inc.local).copied().flatten().ok_or_else(
                        || {
                            Error::Contract(format!(
                                "no selection probability for past edge {} of node {a}",
                                index.edges[inc.local]
                            ))
                        },
                    )?),
                }
            } else if inc.t == t && include_current {
                None
            } else {
                continue;
            };
            msgs.push(Message {
                neighbor: inc.neighbor,
                t: inc.t,
                edge: index.edges[inc.local],
                delta: t - inc.t,
                weight,
            });
        }
        self.aggregate(branch, a, feature_time, msgs)
    }

    pub fn aggregate_node(
        &mut self,
        branch: Branch,
        index: &SubgraphIndex,
        a: NodeId,
        t: Timestamp,
        weights: EdgeWeights<'_>,
        include_current: bool,
    ) -> Result<Var> {
        self.aggregate_over(branch, index, a, t, t, weights, include_current)
    }

    /// Head logit on `[h_a || h_b]`.
    pub fn logit(&mut self, branch: Branch, h_a: Var, h_b: Var) -> Result<Var> {
        let head = self.vars.branch(branch).head.clone();
        head_logit(&mut self.tape, &head, h_a, h_b)
    }

    /// `sigmoid(logit / tau)` for the selector and prior heads.
    pub fn edge_probability(&mut self, branch: Branch, h_a: Var, h_b: Var) -> Result<Var> {
        let z = self.logit(branch, h_a, h_b)?;
        let z = self.tape.scale(z, self.model.tau.recip())?;
        self.tape.sigmoid(z)
    }

    /// `p` and `q` for every subgraph edge, one timestamp at a time so that
    /// past probabilities feed later aggregations.
    pub fn selector(&mut self, index: &SubgraphIndex) -> Result<SelectorOutput> {
        let mut p: Vec<Option<Var>> = vec![None; index.len()];
        let mut q: Vec<Option<Var>> = vec![None; index.len()];
        for (t, range) in index.time_groups() {
            let mut hp: HashMap<NodeId, Var> = HashMap::new();
            let mut hq: HashMap<NodeId, Var> = HashMap::new();
            for local in range {
                let e = self.store.edge(index.edges[local]);
                let (a, b) = (e.src, e.dst);
                let rep = |fwd: &mut Self, cache: &mut HashMap<NodeId, Var>, branch, n, current| {
                    if let Some(&h) = cache.get(&n) {
                        return Ok::<Var, Error>(h);
                    }
                    let h = fwd.aggregate_node(branch, index, n, t, EdgeWeights::Selected(&p), current)?;
                    cache.insert(n, h);
                    Ok(h)
                };
                let pa = rep(self, &mut hp, Branch::Selector, a, true)?;
                let pb = rep(self, &mut hp, Branch::Selector, b, true)?;
                let qa = rep(self, &mut hq, Branch::Prior, a, false)?;
                let qb = rep(self, &mut hq, Branch::Prior, b, false)?;
                let pv = self.edge_probability(Branch::Selector, pa, pb)?;
                let qv = self.edge_probability(Branch::Prior, qa, qb)?;
                p[local] = Some(pv);
                q[local] = Some(qv);
            }
        }
        Ok(SelectorOutput {
            p: p.into_iter().map(|v| v.expect("every edge visited")).collect(),
            q: q.into_iter().map(|v| v.expect("every edge visited")).collect(),
        })
    }

    /// Link probability for the query. Every subgraph edge is weighted and its
    /// age is measured from `t_query`; own features are read at `t_query - 1`.
    pub fn predict(&mut self, index: &SubgraphIndex, weights: EdgeWeights<'_>) -> Result<Var> {
        let query = index.query;
        let t = query.t_query;
        let ft = t.saturating_sub(1);
        let hu = self.aggregate_over(Branch::Predictor, index, query.u, t, ft, weights, false)?;
        let hv = self.aggregate_over(Branch::Predictor, index, query.v, t, ft, weights, false)?;
        let z = self.logit(Branch::Predictor, hu, hv)?;
        self.tape.sigmoid(z)
    }
}
