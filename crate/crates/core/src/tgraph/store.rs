use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type NodeId = usize;
/// Dense timestamp index in `0..=t_max`.
pub type Timestamp = u32;
/// Position of an edge in [`TemporalGraphStore::edges`].
pub type EdgeId = usize;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemporalEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub t: Timestamp,
    pub feat: Vec<f64>,
    pub attr: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphDims {
    /// Node feature width.
    pub d_s: usize,
    /// Edge feature width.
    pub d_e: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadConfig {
    pub directed: bool,
    pub allow_self_loops: bool,
}

/// Adjacency entry of a node: the other endpoint, the edge time and the edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AdjEntry {
    pub t: Timestamp,
    pub neighbor: NodeId,
    pub edge: EdgeId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborRecord {
    pub neighbor: NodeId,
    pub t: Timestamp,
    pub edge_feat: Vec<f64>,
}

/// Immutable time-indexed edge and feature store.
#[derive(Clone, Debug)]
pub struct TemporalGraphStore {
    num_nodes: usize,
    dims: GraphDims,
    directed: bool,
    edges: Vec<TemporalEdge>,
    /// `time_offsets[t]..time_offsets[t + 1]` are the edges at `t`.
    time_offsets: Vec<usize>,
    adjacency: Vec<Vec<AdjEntry>>,
    static_feats: Vec<Option<Vec<f64>>>,
    timed_feats: HashMap<(NodeId, Timestamp), Vec<f64>>,
    zero_feat: Vec<f64>,
    raw_times: Vec<i64>,
}

/// Incremental constructor for [`TemporalGraphStore`]. Timestamps given here
/// are taken as dense indices.
#[derive(Clone, Debug)]
pub struct StoreBuilder {
    num_nodes: usize,
    dims: GraphDims,
    config: LoadConfig,
    edges: Vec<TemporalEdge>,
    static_feats: Vec<(NodeId, Vec<f64>)>,
    timed_feats: Vec<(NodeId, Timestamp, Vec<f64>)>,
    raw_times: Option<Vec<i64>>,
}

impl StoreBuilder {
    pub fn new(num_nodes: usize, dims: GraphDims) -> Self {
        StoreBuilder {
            num_nodes,
            dims,
            config: LoadConfig::default(),
            edges: Vec::new(),
            static_feats: Vec::new(),
            timed_feats: Vec::new(),
            raw_times: None,
        }
    }

    pub fn config(mut self, config: LoadConfig) -> Self {
        self.config = config;
        self
    }

    pub fn edge(mut self, src: NodeId, dst: NodeId, t: Timestamp, feat: Vec<f64>) -> Self {
        self.push_edge(TemporalEdge {
            src,
            dst,
            t,
            feat,
            attr: None,
        });
        self
    }

    pub fn push_edge(&mut self, edge: TemporalEdge) {
        self.edges.push(edge);
    }

    pub fn static_feature(mut self, node: NodeId, feat: Vec<f64>) -> Self {
        self.push_static_feature(node, feat);
        self
    }

    pub fn push_static_feature(&mut self, node: NodeId, feat: Vec<f64>) {
        self.static_feats.push((node, feat));
    }

    pub fn push_timed_feature(&mut self, node: NodeId, t: Timestamp, feat: Vec<f64>) {
        self.timed_feats.push((node, t, feat));
    }

    /// Raw timestamp label per dense index, kept for reporting.
    pub fn raw_times(mut self, raw: Vec<i64>) -> Self {
        self.raw_times = Some(raw);
        self
    }

    pub fn build(self) -> Result<TemporalGraphStore> {
        let StoreBuilder {
            num_nodes,
            dims,
            config,
            mut edges,
            static_feats,
            timed_feats,
            raw_times,
        } = self;
        if edges.is_empty() {
            return Err(Error::EmptyGraph);
        }
        for e in &edges {
            for node in [e.src, e.dst] {
                if node >= num_nodes {
                    return Err(Error::Index { node, num_nodes });
                }
            }
            if e.src == e.dst && !config.allow_self_loops {
                return Err(Error::Contract(format!(
                    "self-loop on node {} at t={} while self-loops are disabled",
                    e.src, e.t
                )));
            }
            if e.feat.len() != dims.d_e {
                return Err(Error::Dimension(format!(
                    "edge ({}, {}, {}) has {} features, expected d_e = {}",
                    e.src,
                    e.dst,
                    e.t,
                    e.feat.len(),
                    dims.d_e
                )));
            }
        }
        // Stable: parallel edges keep their input order.
        edges.sort_by_key(|e| (e.t, e.src, e.dst));
        let t_max = edges.last().map(|e| e.t).unwrap_or(0);

        let mut time_offsets = vec![0usize; t_max as usize + 2];
        for e in &edges {
            time_offsets[e.t as usize + 1] += 1;
        }
        for i in 1..time_offsets.len() {
            time_offsets[i] += time_offsets[i - 1];
        }

        let mut adjacency = vec![Vec::new(); num_nodes];
        for (id, e) in edges.iter().enumerate() {
            adjacency[e.src].push(AdjEntry {
                t: e.t,
                neighbor: e.dst,
                edge: id,
            });
            if !config.directed && e.src != e.dst {
                adjacency[e.dst].push(AdjEntry {
                    t: e.t,
                    neighbor: e.src,
                    edge: id,
                });
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }

        let mut statics = vec![None; num_nodes];
        for (node, feat) in static_feats {
            check_node_feat(node, None, &feat, num_nodes, dims)?;
            statics[node] = Some(feat);
        }
        let mut timed = HashMap::new();
        for (node, t, feat) in timed_feats {
            check_node_feat(node, Some(t), &feat, num_nodes, dims)?;
            timed.insert((node, t), feat);
        }

        let raw_times = match raw_times {
            Some(r) if r.len() == t_max as usize + 1 => r,
            Some(r) => {
                return Err(Error::Dimension(format!(
                    "{} raw timestamps for {} dense timestamps",
                    r.len(),
                    t_max + 1
                )))
            }
            None => (0..=t_max as i64).collect(),
        };

        Ok(TemporalGraphStore {
            num_nodes,
            dims,
            directed: config.directed,
            edges,
            time_offsets,
            adjacency,
            static_feats: statics,
            timed_feats: timed,
            zero_feat: vec![0.0; dims.d_s],
            raw_times,
        })
    }
}

fn check_node_feat(
    node: NodeId,
    t: Option<Timestamp>,
    feat: &[f64],
    num_nodes: usize,
    dims: GraphDims,
) -> Result<()> {
    if node >= num_nodes {
        return Err(Error::Index { node, num_nodes });
    }
    if feat.len() != dims.d_s {
        return Err(Error::Dimension(format!(
            "node {node} (t = {t:?}) has {} features, expected d_s = {}",
            feat.len(),
            dims.d_s
        )));
    }
    Ok(())
}

impl TemporalGraphStore {
    pub fn builder(num_nodes: usize, dims: GraphDims) -> StoreBuilder {
        StoreBuilder::new(num_nodes, dims)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn dims(&self) -> GraphDims {
        self.dims
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    pub fn t_max(&self) -> Timestamp {
        (self.time_offsets.len() - 2) as Timestamp
    }

    pub fn num_timestamps(&self) -> usize {
        self.time_offsets.len() - 1
    }

    pub fn raw_time(&self, t: Timestamp) -> i64 {
        self.raw_times[t as usize]
    }

    pub fn raw_times(&self) -> &[i64] {
        &self.raw_times
    }

    pub fn edges(&self) -> &[TemporalEdge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &TemporalEdge {
        &self.edges[id]
    }

    /// Edge ids at timestamp `t` (empty past `t_max`).
    pub fn edge_ids_at(&self, t: Timestamp) -> std::ops::Range<EdgeId> {
        let t = t as usize;
        if t + 1 >= self.time_offsets.len() {
            return self.edges.len()..self.edges.len();
        }
        self.time_offsets[t]..self.time_offsets[t + 1]
    }

    pub fn edges_at(&self, t: Timestamp) -> &[TemporalEdge] {
        &self.edges[self.edge_ids_at(t)]
    }

    /// Adjacency of `a`, sorted by `(t, neighbor, edge)`.
    pub fn adjacency(&self, a: NodeId) -> Result<&[AdjEntry]> {
        self.check_node(a)?;
        Ok(&self.adjacency[a])
    }

    pub fn check_node(&self, a: NodeId) -> Result<()> {
        if a >= self.num_nodes {
            Err(Error::Index {
                node: a,
                num_nodes: self.num_nodes,
            })
        } else {
            Ok(())
        }
    }

    /// Feature of `a` at `t`: the per-time vector when present, else the
    /// node's static vector, else zeros.
    pub fn node_feature(&self, a: NodeId, t: Timestamp) -> &[f64] {
        if let Some(f) = self.timed_feats.get(&(a, t)) {
            return f;
        }
        match self.static_feats.get(a) {
            Some(Some(f)) => f,
            _ => &self.zero_feat,
        }
    }

    pub fn static_feature(&self, a: NodeId) -> Option<&[f64]> {
        self.static_feats.get(a).and_then(|f| f.as_deref())
    }

    pub fn has_timed_features(&self) -> bool {
        !self.timed_feats.is_empty()
    }

    /// Per-time features as `(node, t, feat)` sorted by `(t, node)`.
    pub fn timed_features(&self) -> Vec<(NodeId, Timestamp, &[f64])> {
        let mut out: Vec<_> = self
            .timed_feats
            .iter()
            .map(|(&(n, t), f)| (n, t, f.as_slice()))
            .collect();
        out.sort_by_key(|&(n, t, _)| (t, n));
        out
    }

    /// Neighbors of `a` strictly before `t`, and those exactly at `t`, both
    /// sorted by `(t', neighbor)`.
    pub fn neighbors_before(
        &self,
        a: NodeId,
        t: Timestamp,
    ) -> Result<(Vec<NeighborRecord>, Vec<NeighborRecord>)> {
        let adj = self.adjacency(a)?;
        let record = |e: &AdjEntry| NeighborRecord {
            neighbor: e.neighbor,
            t: e.t,
            edge_feat: self.edges[e.edge].feat.clone(),
        };
        let past = adj.iter().take_while(|e| e.t < t).map(record).collect();
        let current = adj
            .iter()
            .skip_while(|e| e.t < t)
            .take_while(|e| e.t == t)
            .map(record)
            .collect();
        Ok((past, current))
    }

    /// Whether some edge joins `a` and `b` at `t` (in either direction when
    /// undirected).
    pub fn has_edge_at(&self, a: NodeId, b: NodeId, t: Timestamp) -> bool {
        let Some(adj) = self.adjacency.get(a) else { return false };
        let start = adj.partition_point(|e| (e.t, e.neighbor) < (t, b));
        adj.get(start).is_some_and(|e| e.t == t && e.neighbor == b)
    }

    /// Builder pre-filled with this store's configuration and features, but
    /// no edges.
    pub fn derive_builder(&self) -> StoreBuilder {
        let mut b = StoreBuilder::new(self.num_nodes, self.dims).config(LoadConfig {
            directed: self.directed,
            allow_self_loops: true,
        });
        for (n, f) in self.static_feats.iter().enumerate() {
            if let Some(f) = f {
                b.push_static_feature(n, f.clone());
            }
        }
        for (n, t, f) in self.timed_features() {
            b.push_timed_feature(n, t, f.to_vec());
        }
        b
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dims() -> GraphDims {
        GraphDims { d_s: 2, d_e: 1 }
    }

    #[test]
    fn three_edges_two_timestamps() {
        let s = TemporalGraphStore::builder(3, dims())
            .edge(0, 1, 0, vec![1.0])
            .edge(1, 2, 1, vec![2.0])
            .edge(0, 2, 1, vec![3.0])
            .build()
            .unwrap();
        assert_eq!(s.t_max(), 1);
        let total: usize = (0..3).map(|a| s.adjacency(a).unwrap().len()).sum();
        assert_eq!(total, 6);
        assert_eq!(s.edges_at(1).len(), 2);
        // sorted by (t, src, dst)
        assert_eq!((s.edge(1).src, s.edge(1).dst), (0, 2));
    }

    #[test]
    fn empty_graph_is_rejected() {
        assert!(matches!(
            TemporalGraphStore::builder(3, dims()).build(),
            Err(Error::EmptyGraph)
        ));
    }

    #[test]
    fn bad_inputs_are_rejected() {
        let r = TemporalGraphStore::builder(2, dims()).edge(0, 5, 0, vec![1.0]).build();
        assert!(matches!(r, Err(Error::Index { node: 5, .. })));
        let r = TemporalGraphStore::builder(2, dims()).edge(0, 1, 0, vec![1.0, 2.0]).build();
        assert!(matches!(r, Err(Error::Dimension(_))));
        let r = TemporalGraphStore::builder(2, dims()).edge(1, 1, 0, vec![1.0]).build();
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn neighbors_split_past_and_current() {
        // a=0, b=1, c=2: a-b at 0, a-c at 1
        let s = TemporalGraphStore::builder(4, dims())
            .edge(0, 1, 0, vec![0.5])
            .edge(2, 0, 1, vec![0.7])
            .build()
            .unwrap();
        let (past, cur) = s.neighbors_before(0, 1).unwrap();
        assert_eq!(past.len(), 1);
        assert_eq!((past[0].neighbor, past[0].t), (1, 0));
        assert_eq!(cur.len(), 1);
        assert_eq!((cur[0].neighbor, cur[0].t, cur[0].edge_feat.clone()), (2, 1, vec![0.7]));

        let (p, c) = s.neighbors_before(3, 5).unwrap();
        assert!(p.is_empty() && c.is_empty());
        assert!(matches!(s.neighbors_before(9, 0), Err(Error::Index { .. })));
    }

    #[test]
    fn directed_mode_lists_out_neighbors_only() {
        let s = TemporalGraphStore::builder(2, dims())
            .config(LoadConfig {
                directed: true,
                allow_self_loops: false,
            })
            .edge(0, 1, 0, vec![0.0])
            .build()
            .unwrap();
        assert_eq!(s.adjacency(0).unwrap().len(), 1);
        assert!(s.adjacency(1).unwrap().is_empty());
    }

    #[test]
    fn feature_fallbacks() {
        let mut b = TemporalGraphStore::builder(3, dims())
            .edge(0, 1, 0, vec![0.0])
            .static_feature(0, vec![1.0, 2.0]);
        b.push_timed_feature(0, 0, vec![5.0, 6.0]);
        let s = b.build().unwrap();
        assert_eq!(s.node_feature(0, 0), &[5.0, 6.0]);
        assert_eq!(s.node_feature(0, 1), &[1.0, 2.0]);
        assert_eq!(s.node_feature(2, 0), &[0.0, 0.0]);
    }

    #[test]
    fn has_edge_at_is_symmetric_when_undirected() {
        let s = TemporalGraphStore::builder(3, dims())
            .edge(2, 0, 3, vec![0.0])
            .build()
            .unwrap();
        assert!(s.has_edge_at(0, 2, 3) && s.has_edge_at(2, 0, 3));
        assert!(!s.has_edge_at(0, 2, 2) && !s.has_edge_at(0, 1, 3));
    }
}
