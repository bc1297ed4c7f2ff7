//! Per-query computational subgraphs.
//!
//! The neighborhood is computed on the *capped* graph: for every node `x` and
//! timestamp `t`, at most `K` of its edges at `t` are retained, drawn
//! uniformly with a generator seeded from `(seed, x, t)`. An edge survives when
//! both endpoints retain it. Nodes are then collected breadth-first from
//! `{u, v}` up to `L` hops over surviving edges with `t < t_query`, and the
//! subgraph holds every surviving edge among those nodes. Without a cap this is
//! the induced `L`-hop temporal neighborhood.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::store::{EdgeId, NodeId, TemporalGraphStore, Timestamp};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct QueryLink {
    pub u: NodeId,
    pub v: NodeId,
    pub t_query: Timestamp,
    /// 1 when the link exists at `t_query`.
    pub label: u8,
}

impl QueryLink {
    pub fn new(u: NodeId, v: NodeId, t_query: Timestamp, label: u8) -> Self {
        QueryLink { u, v, t_query, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractConfig {
    /// Hop radius `L`.
    pub hops: u32,
    /// Per-node, per-timestamp neighbor cap `K`; `None` keeps everything.
    pub cap: Option<usize>,
    pub seed: u64,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            hops: 2,
            cap: Some(20),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComputationalSubgraph {
    pub query: QueryLink,
    /// Edge ids per timestamp, keys ascending and all `< t_query`.
    pub per_time_edges: BTreeMap<Timestamp, Vec<EdgeId>>,
    pub node_set: BTreeSet<NodeId>,
    pub hop_of: BTreeMap<NodeId, u32>,
}

impl ComputationalSubgraph {
    pub fn num_edges(&self) -> usize {
        self.per_time_edges.values().map(Vec::len).sum()
    }

    /// All edge ids, ordered by timestamp then id.
    pub fn edge_ids(&self) -> impl Iterator<Item = EdgeId> + '_ {
        self.per_time_edges.values().flatten().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.per_time_edges.is_empty()
    }

    /// Copy without `edge`; the node and hop sets are left unchanged.
    pub fn without_edge(&self, edge: EdgeId) -> Self {
        let mut out = self.clone();
        for list in out.per_time_edges.values_mut() {
            list.retain(|&e| e != edge);
        }
        out.per_time_edges.retain(|_, list| !list.is_empty());
        out
    }
}

fn mix_seed(seed: u64, node: NodeId, t: Timestamp) -> u64 {
    // splitmix64 finalizer over the packed key
    let mut z = seed
        ^ (node as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (u64::from(t)).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

struct CappedAdjacency<'a> {
    store: &'a TemporalGraphStore,
    cfg: ExtractConfig,
    t_query: Timestamp,
    /// Retained edge ids per (node, t), sorted by edge id.
    cache: HashMap<(NodeId, Timestamp), Vec<EdgeId>>,
}

impl<'a> CappedAdjacency<'a> {
    fn retained(&mut self, x: NodeId, t: Timestamp) -> &[EdgeId] {
        let store = self.store;
        let cfg = self.cfg;
        self.cache.entry((x, t)).or_insert_with(|| {
            let adj = &store.adjacency(x).expect("node checked")[..];
            let lo = adj.partition_point(|e| e.t < t);
            let hi = adj.partition_point(|e| e.t <= t);
            let slice = &adj[lo..hi];
            let mut kept: Vec<EdgeId> = match cfg.cap {
                Some(k) if slice.len() > k => {
                    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, x, t));
                    rand::seq::index::sample(&mut rng, slice.len(), k)
                        .into_iter()
                        .map(|i| slice[i].edge)
                        .collect()
                }
                _ => slice.iter().map(|e| e.edge).collect(),
            };
            kept.sort_unstable();
            kept.dedup();
            kept
        })
    }

    fn survives(&mut self, edge: EdgeId) -> bool {
        let e = self.store.edge(edge);
        let (a, b, t) = (e.src, e.dst, e.t);
        self.retained(a, t).binary_search(&edge).is_ok()
            && (self.store.is_directed() || self.retained(b, t).binary_search(&edge).is_ok())
    }

    /// Surviving `(other endpoint, edge)` pairs of `x` over all `t < t_query`.
    fn surviving_neighbors(&mut self, x: NodeId) -> Vec<(NodeId, EdgeId)> {
        let adj = self.store.adjacency(x).expect("node checked");
        let mut times: Vec<Timestamp> = adj
            .iter()
            .take_while(|e| e.t < self.t_query)
            .map(|e| e.t)
            .collect();
        times.dedup();
        let mut out = Vec::new();
        for t in times {
            let kept = self.retained(x, t).to_vec();
            for edge in kept {
                if self.survives(edge) {
                    let e = self.store.edge(edge);
                    let other = if e.src == x { e.dst } else { e.src };
                    out.push((other, edge));
                }
            }
        }
        out
    }
}

pub fn extract_computational_subgraph(
    store: &TemporalGraphStore,
    query: QueryLink,
    cfg: ExtractConfig,
) -> Result<ComputationalSubgraph> {
    store.check_node(query.u)?;
    store.check_node(query.v)?;
    if cfg.hops < 1 {
        return Err(Error::Contract("hop count L must be at least 1".into()));
    }
    if cfg.cap == Some(0) {
        return Err(Error::Contract("neighbor cap K must be at least 1".into()));
    }

    let mut capped = CappedAdjacency {
        store,
        cfg,
        t_query: query.t_query,
        cache: HashMap::new(),
    };

    let mut hop_of = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in [query.u, query.v] {
        if hop_of.insert(s, 0).is_none() {
            queue.push_back(s);
        }
    }
    let mut neighbor_lists: BTreeMap<NodeId, Vec<(NodeId, EdgeId)>> = BTreeMap::new();
    while let Some(x) = queue.pop_front() {
        let h = hop_of[&x];
        let nbrs = capped.surviving_neighbors(x);
        if h < cfg.hops {
            for &(w, _) in &nbrs {
                if !hop_of.contains_key(&w) {
                    hop_of.insert(w, h + 1);
                    queue.push_back(w);
                }
            }
        }
        neighbor_lists.insert(x, nbrs);
    }

    let mut edges = BTreeSet::new();
    for nbrs in neighbor_lists.values() {
        for &(w, edge) in nbrs {
            if hop_of.contains_key(&w) {
                edges.insert(edge);
            }
        }
    }
    let mut per_time_edges: BTreeMap<Timestamp, Vec<EdgeId>> = BTreeMap::new();
    for edge in edges {
        per_time_edges.entry(store.edge(edge).t).or_default().push(edge);
    }

    Ok(ComputationalSubgraph {
        query,
        per_time_edges,
        node_set: hop_of.keys().copied().collect(),
        hop_of,
    })
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::tgraph::store::GraphDims;
    use proptest::prelude::*;

    const DIMS: GraphDims = GraphDims { d_s: 1, d_e: 1 };

    fn path_store() -> TemporalGraphStore {
        // u=0 - a=2 - b=3 - c=4, v=1 isolated
        TemporalGraphStore::builder(5, DIMS)
            .edge(0, 2, 0, vec![0.0])
            .edge(2, 3, 0, vec![0.0])
            .edge(3, 4, 1, vec![0.0])
            .build()
            .unwrap()
    }

    #[test]
    fn path_two_hops() {
        let s = path_store();
        let q = QueryLink::new(0, 1, 5, 1);
        let cfg = ExtractConfig {
            hops: 2,
            cap: None,
            seed: 0,
        };
        let sg = extract_computational_subgraph(&s, q, cfg).unwrap();
        let ids: Vec<_> = sg.edge_ids().collect();
        assert_eq!(ids, vec![0, 1]);
        assert_eq!(sg.hop_of[&3], 2);
        assert!(!sg.node_set.contains(&4));
    }

    #[test]
    fn saturation_includes_all_past_edges() {
        let s = path_store();
        let q = QueryLink::new(0, 1, 1, 1);
        let sg = extract_computational_subgraph(
            &s,
            q,
            ExtractConfig {
                hops: 10,
                cap: None,
                seed: 0,
            },
        )
        .unwrap();
        let ids: Vec<_> = sg.edge_ids().collect();
        assert_eq!(ids, vec![0, 1], "edge at t=1 is not before t_query=1");
        let q = QueryLink::new(0, 1, 2, 1);
        let sg = extract_computational_subgraph(
            &s,
            q,
            ExtractConfig {
                hops: 10,
                cap: None,
                seed: 0,
            },
        )
        .unwrap();
        assert_eq!(sg.num_edges(), 3);
    }

    #[test]
    fn cap_keeps_exactly_k_and_is_seeded() {
        let mut b = TemporalGraphStore::builder(7, DIMS);
        for w in 2..7 {
            b = b.edge(0, w, 0, vec![0.0]);
        }
        let s = b.build().unwrap();
        let q = QueryLink::new(0, 1, 1, 0);
        let cfg = ExtractConfig {
            hops: 1,
            cap: Some(1),
            seed: 42,
        };
        let a = extract_computational_subgraph(&s, q, cfg).unwrap();
        let b = extract_computational_subgraph(&s, q, cfg).unwrap();
        assert_eq!(a.num_edges(), 1);
        assert_eq!(a, b);
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn bad_arguments() {
        let s = path_store();
        let cfg = ExtractConfig::default();
        assert!(matches!(
            extract_computational_subgraph(&s, QueryLink::new(0, 9, 1, 0), cfg),
            Err(Error::Index { node: 9, .. })
        ));
        let zero = ExtractConfig { hops: 0, ..cfg };
        assert!(extract_computational_subgraph(&s, QueryLink::new(0, 1, 1, 0), zero).is_err());
        let nocap = ExtractConfig { cap: Some(0), ..cfg };
        assert!(extract_computational_subgraph(&s, QueryLink::new(0, 1, 1, 0), nocap).is_err());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, u32)>)> {
        (3usize..=12).prop_flat_map(|n| {
            let edge = (0..n, 0..n, 0u32..4).prop_filter("no loops", |(a, b, _)| a != b);
            (Just(n), prop::collection::vec(edge, 1..30))
        })
    }

    proptest! {
        #[test]
        fn uncapped_matches_bfs_oracle((n, edges) in arb_graph(), hops in 1u32..4, tq in 1u32..5) {
            let mut b = TemporalGraphStore::builder(n, DIMS);
            for (a, c, t) in edges {
                b = b.edge(a, c, t, vec![0.0]);
            }
            let s = b.build().unwrap();
            let q = QueryLink::new(0, 1, tq, 1);
            let sg = extract_computational_subgraph(&s, q, ExtractConfig { hops, cap: None, seed: 1 }).unwrap();
            let (dist, oracle_edges) = oracle::bfs_neighborhood(&s, q, hops);
            prop_assert_eq!(&sg.hop_of, &dist);
            prop_assert_eq!(sg.edge_ids().collect::<BTreeSet<_>>(), oracle_edges);
            for (&t, _) in &sg.per_time_edges {
                prop_assert!(t < tq);
            }
        }

        #[test]
        fn capped_subgraph_respects_cap_and_hops((n, edges) in arb_graph(), k in 1usize..3) {
            let mut b = TemporalGraphStore::builder(n, DIMS);
            for (a, c, t) in edges {
                b = b.edge(a, c, t, vec![0.0]);
            }
            let s = b.build().unwrap();
            let q = QueryLink::new(0, 1, 4, 1);
            let sg = extract_computational_subgraph(&s, q, ExtractConfig { hops: 2, cap: Some(k), seed: 3 }).unwrap();
            let mut per_node_time: BTreeMap<(NodeId, Timestamp), usize> = BTreeMap::new();
            for e in sg.edge_ids() {
                let e = s.edge(e);
                prop_assert!(sg.hop_of[&e.src] <= 2 && sg.hop_of[&e.dst] <= 2);
                *per_node_time.entry((e.src, e.t)).or_default() += 1;
                *per_node_time.entry((e.dst, e.t)).or_default() += 1;
            }
            prop_assert!(per_node_time.values().all(|&c| c <= k));
        }
    }
}
