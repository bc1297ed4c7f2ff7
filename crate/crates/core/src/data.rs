//! Shifted dataset construction: edge-attribute hold-out, node-feature shift
//! synthesis and a planted-motif generator, plus the on-disk dataset layout.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tgraph::{
    load_temporal_graph, write_edge_table, write_node_table, GraphDims, LoadConfig, NodeId, QueryLink, StoreBuilder,
    TemporalEdge, TemporalGraphStore, Timestamp,
};
use crate::train::mix;

/// Edge feature of ordinary planted edges.
pub const PLAIN_EDGE: [f64; 2] = [1.0, 0.0];
/// Edge feature of spurious edges when [`PlantedSpec::mark_spurious`] is set.
pub const SPURIOUS_EDGE: [f64; 2] = [0.0, 1.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ShiftSpec {
    EdgeAttribute {
        held_out_attr: String,
    },
    NodeFeature {
        p_bar: f64,
        sigma: f64,
        d: usize,
        seed: u64,
    },
    PlantedMotif(PlantedSpec),
}

impl ShiftSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            ShiftSpec::EdgeAttribute { held_out_attr } => {
                if held_out_attr.is_empty() || held_out_attr.contains(char::is_whitespace) {
                    return Err(Error::Contract(format!("invalid attribute {held_out_attr:?}")));
                }
                Ok(())
            }
            ShiftSpec::NodeFeature { p_bar, sigma, d, .. } => {
                let ok = p_bar.is_finite() && sigma.is_finite() && *sigma >= 0.0;
                if !ok || p_bar - sigma < 0.0 || p_bar + sigma > 1.0 {
                    return Err(Error::Contract(format!(
                        "p_bar = {p_bar}, sigma = {sigma} leave [0, 1]"
                    )));
                }
                if *d == 0 {
                    return Err(Error::Contract("feature dimension must be positive".into()));
                }
                Ok(())
            }
            ShiftSpec::PlantedMotif(spec) => spec.validate(),
        }
    }

    pub fn seed(&self) -> u64 {
        match self {
            ShiftSpec::EdgeAttribute { .. } => 0,
            ShiftSpec::NodeFeature { seed, .. } => *seed,
            ShiftSpec::PlantedMotif(spec) => spec.seed,
        }
    }
}

/// Link-sampling probability of the node-feature shift at timestamp `t`.
pub fn shift_probability(p_bar: f64, sigma: f64, t: Timestamp) -> f64 {
    p_bar + sigma * f64::from(t).cos()
}

/// One side of an edge partition, with nodes re-indexed densely.
#[derive(Clone, Debug)]
pub struct FilteredPart {
    pub store: TemporalGraphStore,
    /// `node_map[new] = original`, ascending.
    pub node_map: Vec<NodeId>,
}

/// Splits the edges into those not carrying `held_out_attr` (in-distribution)
/// and those carrying it (out-of-distribution).
pub fn ood_edge_filter(store: &TemporalGraphStore, held_out_attr: &str) -> Result<(FilteredPart, FilteredPart)> {
    let held = |e: &TemporalEdge| e.attr.as_deref() == Some(held_out_attr);
    let n_held = store.edges().iter().filter(|e| held(e)).count();
    if n_held == 0 {
        return Err(Error::Filter(format!("attribute {held_out_attr:?} does not occur")));
    }
    if n_held == store.edges().len() {
        return Err(Error::Filter(format!(
            "every edge carries {held_out_attr:?}, nothing left in distribution"
        )));
    }
    Ok((restrict(store, |e| !held(e))?, restrict(store, held)?))
}

fn restrict(store: &TemporalGraphStore, keep: impl Fn(&TemporalEdge) -> bool) -> Result<FilteredPart> {
    let edges: Vec<&TemporalEdge> = store.edges().iter().filter(|e| keep(e)).collect();
    let node_map: Vec<NodeId> = edges
        .iter()
        .flat_map(|e| [e.src, e.dst])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<NodeId, NodeId> = node_map.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let t_max = edges.iter().map(|e| e.t).max().ok_or(Error::EmptyGraph)?;

    let mut b = StoreBuilder::new(node_map.len(), store.dims())
        .config(LoadConfig {
            directed: store.is_directed(),
            allow_self_loops: true,
        })
        .raw_times(store.raw_times()[..=t_max as usize].to_vec());
    for e in edges {
        b.push_edge(TemporalEdge {
            src: index[&e.src],
            dst: index[&e.dst],
            ..e.clone()
        });
    }
    for (new, &old) in node_map.iter().enumerate() {
        if let Some(f) = store.static_feature(old) {
            b.push_static_feature(new, f.to_vec());
        }
    }
    for (n, t, f) in store.timed_features() {
        if let (true, Some(&new)) = (t <= t_max, index.get(&n)) {
            b.push_timed_feature(new, t, f.to_vec());
        }
    }
    Ok(FilteredPart {
        store: b.build()?,
        node_map,
    })
}

fn pair_key(store: &TemporalGraphStore, a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if store.is_directed() || a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Replaces node features with per-time features that leak next-step links.
///
/// For each `t < t_max`, `floor(p(t) * m)` of the `m` distinct links at `t + 1`
/// are kept together with `m - floor(p(t) * m)` random non-links; every kept
/// pair gets a Gaussian code in `R^d` that is added to both endpoints' rows.
/// Nodes touching no kept pair, and every node at `t_max`, read zeros.
pub fn synthesize_node_shift(
    store: &TemporalGraphStore,
    p_bar: f64,
    sigma: f64,
    d: usize,
    seed: u64,
) -> Result<TemporalGraphStore> {
    ShiftSpec::NodeFeature { p_bar, sigma, d, seed }.validate()?;
    if store.t_max() < 1 {
        return Err(Error::Contract("node-feature shift needs at least two timestamps".into()));
    }
    let n = store.num_nodes();
    let dims = GraphDims {
        d_s: d,
        d_e: store.dims().d_e,
    };
    let mut b = StoreBuilder::new(n, dims)
        .config(LoadConfig {
            directed: store.is_directed(),
            allow_self_loops: true,
        })
        .raw_times(store.raw_times().to_vec());
    for e in store.edges() {
        b.push_edge(e.clone());
    }
    let scale = (d as f64).sqrt().recip();
    for t in 0..store.t_max() {
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, u64::from(t)));
        let next: BTreeSet<(NodeId, NodeId)> = store
            .edges_at(t + 1)
            .iter()
            .map(|e| pair_key(store, e.src, e.dst))
            .collect();
        let next: Vec<_> = next.into_iter().collect();
        let m = next.len();
        let k = ((shift_probability(p_bar, sigma, t) * m as f64).floor() as usize).min(m);
        let mut picks = index::sample(&mut rng, m, k).into_vec();
        picks.sort_unstable();
        let mut kept: Vec<(NodeId, NodeId)> = picks.into_iter().map(|i| next[i]).collect();

        let links: HashSet<_> = next.iter().copied().collect();
        let mut fakes = HashSet::new();
        let mut tries = 0;
        while fakes.len() < m - k && n > 1 && tries < 64 * m + 64 {
            tries += 1;
            let a = rng.random_range(0..n);
            let c = rng.random_range(0..n);
            let key = pair_key(store, a, c);
            if a != c && !links.contains(&key) && fakes.insert(key) {
                kept.push(key);
            }
        }

        let mut rows: BTreeMap<NodeId, Vec<f64>> = BTreeMap::new();
        for (a, c) in kept {
            let code: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * scale).collect();
            for node in [a, c] {
                let row = rows.entry(node).or_insert_with(|| vec![0.0; d]);
                row.iter_mut().zip(&code).for_each(|(r, c)| *r += c);
            }
        }
        for (node, row) in rows {
            b.push_timed_feature(node, t, row);
        }
    }
    b.build()
}

/// Parameters of the planted-motif generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantedSpec {
    pub n_nodes: usize,
    pub n_timestamps: u32,
    /// Queries per split, half positive.
    pub n_queries: usize,
    /// Timestamps at which the planted common neighbor links to both query
    /// endpoints; negatives get one distinct decoy per timestamp instead.
    pub motif_repeats: u32,
    /// Random background edges at every history timestamp.
    pub background_per_step: usize,
    /// Share of positives (and of non-negatives) carrying a spurious edge in
    /// the training distribution. The ood split uses `1 - spurious_rate`.
    pub spurious_rate: f64,
    pub d_s: usize,
    /// Scale of the Gaussian noise in node features.
    pub feature_noise: f64,
    /// Give spurious edges their own edge feature instead of the plain one.
    pub mark_spurious: bool,
    pub seed: u64,
}

impl Default for PlantedSpec {
    fn default() -> Self {
        PlantedSpec {
            n_nodes: 200,
            n_timestamps: 6,
            n_queries: 50,
            motif_repeats: 4,
            background_per_step: 20,
            spurious_rate: 0.9,
            d_s: 4,
            feature_noise: 0.0,
            mark_spurious: false,
            seed: 0,
        }
    }
}

impl PlantedSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Contract(m));
        if self.n_nodes < 10 {
            return fail(format!("n_nodes = {} < 10", self.n_nodes));
        }
        if self.n_timestamps < 3 {
            return fail(format!("n_timestamps = {} < 3", self.n_timestamps));
        }
        if !(2..self.n_timestamps).contains(&self.motif_repeats) {
            return fail(format!(
                "motif_repeats = {} outside 2..{}",
                self.motif_repeats, self.n_timestamps
            ));
        }
        if self.n_queries < 2 {
            return fail("need at least two queries".into());
        }
        if self.background_per_step == 0 {
            return fail("background_per_step must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.spurious_rate) {
            return fail(format!("spurious_rate = {} outside [0, 1]", self.spurious_rate));
        }
        if self.d_s == 0 {
            return fail("d_s must be positive".into());
        }
        self.pools()?;
        if !(self.feature_noise.is_finite() && self.feature_noise >= 0.0) {
            return fail(format!("feature_noise = {}", self.feature_noise));
        }
        Ok(())
    }

    /// Sizes of the source, middle, spurious-partner and destination pools.
    fn pools(&self) -> Result<[usize; 4]> {
        let n_q = self.n_queries;
        let n_mid = n_q / 2 + self.motif_repeats as usize * (n_q - n_q / 2);
        let n_x = (self.n_nodes / 20).max(1);
        match self.n_nodes.checked_sub(n_q + n_mid + n_x) {
            Some(n_v) if n_v > 0 => Ok([n_q, n_mid, n_x, n_v]),
            _ => Err(Error::Contract(format!(
                "{} queries need more than {} nodes",
                n_q, self.n_nodes
            ))),
        }
    }
}

/// One planted split: the store, its queries and the ground-truth flags.
#[derive(Clone, Debug)]
pub struct PlantedSplit {
    pub store: Arc<TemporalGraphStore>,
    pub queries: Vec<QueryLink>,
    pub motif: Vec<bool>,
    pub spurious: Vec<bool>,
    /// Nodes that spurious edges attach to, ascending.
    pub partners: Vec<NodeId>,
}

#[derive(Clone, Debug)]
pub struct PlantedDataset {
    pub spec: PlantedSpec,
    pub train: PlantedSplit,
    /// Same distribution as `train`, independent draw.
    pub val: PlantedSplit,
    /// Spurious correlation flipped.
    pub ood: PlantedSplit,
}

/// Train, validation and ood splits from independent seeds derived from
/// `spec.seed`.
pub fn generate_planted_motif_dataset(spec: &PlantedSpec) -> Result<PlantedDataset> {
    Ok(PlantedDataset {
        spec: spec.clone(),
        train: generate_planted_split(spec, false, 1)?,
        val: generate_planted_split(spec, false, 2)?,
        ood: generate_planted_split(spec, true, 3)?,
    })
}

/// A single planted split; `spurious_flip` uses rate `1 - spurious_rate`.
pub fn generate_planted_split(spec: &PlantedSpec, spurious_flip: bool, stream: u64) -> Result<PlantedSplit> {
    spec.validate()?;
    let rate = if spurious_flip {
        1.0 - spec.spurious_rate
    } else {
        spec.spurious_rate
    };
    for attempt in 0..64 {
        let split = planted_attempt(spec, rate, mix(mix(spec.seed, stream), attempt))?;
        let consistent = split.queries.iter().zip(&split.motif).all(|(q, &m)| {
            let linked = split.store.has_edge_at(q.u, q.v, q.t_query);
            m == (q.label == 1) && linked == (q.label == 1)
        });
        if consistent {
            return Ok(split);
        }
    }
    Err(Error::Contract("background edges keep forming motifs; lower background_per_step".into()))
}

fn planted_attempt(spec: &PlantedSpec, rate: f64, seed: u64) -> Result<PlantedSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = spec.n_nodes;
    let [n_u, n_mid, n_x, n_v] = spec.pools()?;
    let mut nodes: Vec<NodeId> = (0..n).collect();
    nodes.shuffle(&mut rng);
    let (us, rest) = nodes.split_at(n_u);
    let (mids, rest) = rest.split_at(n_mid);
    let (xs, vs) = rest.split_at(n_x);
    debug_assert_eq!(vs.len(), n_v);
    let tq = spec.n_timestamps - 1;
    let n_q = spec.n_queries;
    let n_pos = n_q / 2;
    let n_neg = n_q - n_pos;

    let mut spurious = vec![false; n_q];
    let sp_pos = (rate * n_pos as f64).round() as usize;
    let sp_neg = n_neg - ((rate * n_neg as f64).round() as usize).min(n_neg);
    for i in index::sample(&mut rng, n_pos, sp_pos.min(n_pos)) {
        spurious[i] = true;
    }
    for i in index::sample(&mut rng, n_neg, sp_neg.min(n_neg)) {
        spurious[n_pos + i] = true;
    }

    let mut b = StoreBuilder::new(
        n,
        GraphDims {
            d_s: spec.d_s,
            d_e: PLAIN_EDGE.len(),
        },
    );
    let plain = || PLAIN_EDGE.to_vec();
    let mut fresh = mids.iter().copied();
    let mut queries = Vec::with_capacity(n_q);
    for (q, &sp) in spurious.iter().enumerate() {
        let u = us[q];
        let v = vs[rng.random_range(0..n_v)];
        let positive = q < n_pos;
        let mut ts = index::sample(&mut rng, tq as usize, spec.motif_repeats as usize).into_vec();
        ts.sort_unstable();
        let mut z = fresh.next().expect("pool sized for every query");
        for (i, &t) in ts.iter().enumerate() {
            if i > 0 && !positive {
                z = fresh.next().expect("pool sized for every query");
            }
            b = b.edge(u, z, t as Timestamp, plain()).edge(z, v, t as Timestamp, plain());
        }
        if sp {
            let feat = if spec.mark_spurious { SPURIOUS_EDGE } else { PLAIN_EDGE };
            b = b.edge(u, xs[rng.random_range(0..n_x)], tq - 1, feat.to_vec());
        }
        if positive {
            b = b.edge(u, v, tq, plain());
        }
        queries.push(QueryLink::new(u, v, tq, u8::from(positive)));
    }
    // background among sources and destinations only, so middle nodes keep
    // exactly their planted history
    let ends: Vec<NodeId> = us.iter().chain(vs).copied().collect();
    for t in 0..tq {
        for _ in 0..spec.background_per_step {
            let a = rng.random_range(0..ends.len());
            let c = (a + rng.random_range(1..ends.len())) % ends.len();
            b = b.edge(ends[a], ends[c], t, plain());
        }
    }
    for node in 0..n {
        let mut f = vec![1.0];
        f.extend((1..spec.d_s).map(|_| spec.feature_noise * rng.sample::<f64, _>(StandardNormal)));
        b.push_static_feature(node, f);
    }

    let store = Arc::new(b.build()?);
    let motif = queries.iter().map(|q| motif_present(&store, q)).collect::<Result<_>>()?;
    let mut partners = xs.to_vec();
    partners.sort_unstable();
    let spurious = queries
        .iter()
        .map(|q| spurious_present(&store, q, &partners))
        .collect::<Result<_>>()?;
    Ok(PlantedSplit {
        store,
        queries,
        motif,
        spurious,
        partners,
    })
}

/// Whether some common neighbor links to both `u` and `v` at two distinct
/// timestamps before `t_query`.
pub fn motif_present(store: &TemporalGraphStore, q: &QueryLink) -> Result<bool> {
    store.check_node(q.v)?;
    let mut times: BTreeMap<NodeId, BTreeSet<Timestamp>> = BTreeMap::new();
    for e in store.adjacency(q.u)?.iter().take_while(|e| e.t < q.t_query) {
        if e.neighbor != q.v && store.has_edge_at(e.neighbor, q.v, e.t) {
            times.entry(e.neighbor).or_default().insert(e.t);
        }
    }
    Ok(times.values().any(|ts| ts.len() >= 2))
}

/// Whether `u` links to one of the sorted `partners` at `t_query - 1`.
pub fn spurious_present(store: &TemporalGraphStore, q: &QueryLink, partners: &[NodeId]) -> Result<bool> {
    let Some(t) = q.t_query.checked_sub(1) else { return Ok(false) };
    Ok(store
        .adjacency(q.u)?
        .iter()
        .any(|e| e.t == t && partners.binary_search(&e.neighbor).is_ok()))
}

/// Small random graph with `n_timestamps` snapshots, two-dimensional node
/// and edge features, and a query `(0, 1)` at the last snapshot labeled by
/// whether that edge exists there.
pub fn random_toy_graph(seed: u64, max_nodes: usize, n_timestamps: Timestamp) -> Result<(TemporalGraphStore, QueryLink)> {
    if max_nodes < 3 || n_timestamps < 2 {
        return Err(Error::Contract(format!(
            "toy graph needs at least 3 nodes and 2 timestamps, got {max_nodes} and {n_timestamps}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, 0x70E));
    let n = rng.random_range(3..=max_nodes);
    let mut b = TemporalGraphStore::builder(n, GraphDims { d_s: 2, d_e: 2 });
    let feat = |rng: &mut ChaCha8Rng| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
    for a in 0..n {
        let f = feat(&mut rng);
        b.push_static_feature(a, f);
    }
    // both query endpoints get some history
    for (a, t) in [(0, 0), (1, 1)] {
        let c = rng.random_range(2..n);
        let f = feat(&mut rng);
        b.push_edge(TemporalEdge { src: a, dst: c, t, feat: f, attr: None });
    }
    for t in 0..n_timestamps {
        for _ in 0..rng.random_range(1..=n) {
            let a = rng.random_range(0..n);
            let c = (a + rng.random_range(1..n)) % n;
            let f = feat(&mut rng);
            b.push_edge(TemporalEdge { src: a, dst: c, t, feat: f, attr: None });
        }
    }
    let store = b.build()?;
    let t_query = n_timestamps - 1;
    let label = u8::from(store.has_edge_at(0, 1, t_query));
    Ok((store, QueryLink::new(0, 1, t_query, label)))
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const EDGE_FILE: &str = "edges.txt";
pub const NODE_FILE: &str = "nodes.txt";
pub const QUERY_FILE: &str = "queries.txt";
pub const NODE_MAP_FILE: &str = "node_map.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartManifest {
    pub name: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_timestamps: usize,
    pub dims: GraphDims,
    pub directed: bool,
    pub has_queries: bool,
    pub has_node_map: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub schema: u32,
    pub shift: ShiftSpec,
    pub seed: u64,
    pub parts: Vec<PartManifest>,
}

/// A named store with optional labeled queries and node mapping.
#[derive(Clone, Debug)]
pub struct DatasetPart {
    pub name: String,
    pub store: Arc<TemporalGraphStore>,
    pub queries: Option<Vec<QueryLink>>,
    pub node_map: Option<Vec<NodeId>>,
}

impl From<(&str, &PlantedSplit)> for DatasetPart {
    fn from((name, split): (&str, &PlantedSplit)) -> Self {
        DatasetPart {
            name: name.to_string(),
            store: split.store.clone(),
            queries: Some(split.queries.clone()),
            node_map: None,
        }
    }
}

impl From<(&str, FilteredPart)> for DatasetPart {
    fn from((name, part): (&str, FilteredPart)) -> Self {
        DatasetPart {
            name: name.to_string(),
            store: Arc::new(part.store),
            queries: None,
            node_map: Some(part.node_map),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Writes each part to `dir/<name>/` in the text table formats and a
/// manifest to `dir/manifest.json`.
pub fn write_dataset(dir: &Path, shift: &ShiftSpec, parts: &[DatasetPart]) -> Result<DatasetManifest> {
    let mut manifest = DatasetManifest {
        schema: 1,
        shift: shift.clone(),
        seed: shift.seed(),
        parts: Vec::new(),
    };
    for part in parts {
        let sub = dir.join(&part.name);
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let s = &part.store;
        write_file(&sub.join(EDGE_FILE), &write_edge_table(s))?;
        write_file(&sub.join(NODE_FILE), &write_node_table(s))?;
        if let Some(queries) = &part.queries {
            let mut text = String::from("# u v t label\n");
            for q in queries {
                if q.t_query > s.t_max() {
                    return Err(Error::Contract(format!("query time {} past t_max", q.t_query)));
                }
                writeln!(text, "{} {} {} {}", q.u, q.v, s.raw_time(q.t_query), q.label).unwrap();
            }
            write_file(&sub.join(QUERY_FILE), &text)?;
        }
        if let Some(map) = &part.node_map {
            let mut text = String::from("# new original\n");
            for (i, n) in map.iter().enumerate() {
                writeln!(text, "{i} {n}").unwrap();
            }
            write_file(&sub.join(NODE_MAP_FILE), &text)?;
        }
        manifest.parts.push(PartManifest {
            name: part.name.clone(),
            num_nodes: s.num_nodes(),
            num_edges: s.edges().len(),
            num_timestamps: s.num_timestamps(),
            dims: s.dims(),
            directed: s.is_directed(),
            has_queries: part.queries.is_some(),
            has_node_map: part.node_map.is_some(),
        });
    }
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), &json)?;
    Ok(manifest)
}

fn data_rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        (!line.is_empty() && !line.starts_with('#')).then(|| (i + 1, line.split_whitespace().collect()))
    })
}

fn parse_tok<T: std::str::FromStr>(row: usize, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("invalid field {tok:?}"),
    })
}

fn widen(store: TemporalGraphStore, num_nodes: usize) -> Result<TemporalGraphStore> {
    if store.num_nodes() >= num_nodes {
        return Ok(store);
    }
    let mut b = StoreBuilder::new(num_nodes, store.dims())
        .config(LoadConfig {
            directed: store.is_directed(),
            allow_self_loops: true,
        })
        .raw_times(store.raw_times().to_vec());
    for e in store.edges() {
        b.push_edge(e.clone());
    }
    for n in 0..store.num_nodes() {
        if let Some(f) = store.static_feature(n) {
            b.push_static_feature(n, f.to_vec());
        }
    }
    for (n, t, f) in store.timed_features() {
        b.push_timed_feature(n, t, f.to_vec());
    }
    b.build()
}

/// Reads a dataset written by [`write_dataset`].
pub fn read_dataset(dir: &Path) -> Result<(DatasetManifest, Vec<DatasetPart>)> {
    let path = dir.join(MANIFEST_FILE);
    let manifest: DatasetManifest = serde_json::from_str(&read_file(&path)?).map_err(|e| Error::Parse {
        row: e.line(),
        msg: format!("{}: {e}", path.display()),
    })?;
    let mut parts = Vec::with_capacity(manifest.parts.len());
    for pm in &manifest.parts {
        let sub = dir.join(&pm.name);
        let edges = read_file(&sub.join(EDGE_FILE))?;
        let nodes = read_file(&sub.join(NODE_FILE))?;
        let config = LoadConfig {
            directed: pm.directed,
            allow_self_loops: true,
        };
        let store = widen(load_temporal_graph(&edges, Some(&nodes), pm.dims, config)?, pm.num_nodes)?;
        let queries = if pm.has_queries {
            let dense: HashMap<i64, Timestamp> =
                store.raw_times().iter().enumerate().map(|(i, &r)| (r, i as Timestamp)).collect();
            let mut out = Vec::new();
            for (row, f) in data_rows(&read_file(&sub.join(QUERY_FILE))?) {
                if f.len() != 4 {
                    return Err(Error::Parse {
                        row,
                        msg: format!("query row has {} fields, expected 4", f.len()),
                    });
                }
                let raw: i64 = parse_tok(row, f[2])?;
                let t = *dense.get(&raw).ok_or_else(|| Error::Parse {
                    row,
                    msg: format!("query timestamp {raw} does not occur in the edge table"),
                })?;
                let q = QueryLink::new(parse_tok(row, f[0])?, parse_tok(row, f[1])?, t, parse_tok(row, f[3])?);
                store.check_node(q.u)?;
                store.check_node(q.v)?;
                out.push(q);
            }
            Some(out)
        } else {
            None
        };
        let node_map = if pm.has_node_map {
            let rows: Vec<NodeId> = data_rows(&read_file(&sub.join(NODE_MAP_FILE))?)
                .map(|(row, f)| match f.as_slice() {
                    [_, orig] => parse_tok(row, orig),
                    _ => Err(Error::Parse {
                        row,
                        msg: "node map rows have two fields".into(),
                    }),
                })
                .collect::<Result<_>>()?;
            Some(rows)
        } else {
            None
        };
        parts.push(DatasetPart {
            name: pm.name.clone(),
            store: Arc::new(store),
            queries,
            node_map,
        });
    }
    Ok((manifest, parts))
}
