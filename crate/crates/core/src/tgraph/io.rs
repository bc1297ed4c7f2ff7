//! Text edge and node-feature tables.
//!
//! Edge rows are `src dst t feat_1 .. feat_{d_e} [attr]`; node rows are
//! `node t feat_1 .. feat_{d_s}` (per-time) or `node feat_1 .. feat_{d_s}`
//! (static). Fields are separated by whitespace or commas, blank lines and
//! lines starting with `#` are skipped. Raw timestamps are integers and are
//! re-indexed densely in ascending order.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::store::{GraphDims, LoadConfig, NodeId, TemporalEdge, TemporalGraphStore, Timestamp};
use crate::error::{Error, Result};

fn rows(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            return None;
        }
        let fields = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|s| !s.is_empty())
            .collect();
        Some((i + 1, fields))
    })
}

fn parse<T: std::str::FromStr>(row: usize, what: &str, tok: &str) -> Result<T> {
    tok.parse().map_err(|_| Error::Parse {
        row,
        msg: format!("invalid {what} {tok:?}"),
    })
}

struct RawEdge {
    src: NodeId,
    dst: NodeId,
    t: i64,
    feat: Vec<f64>,
    attr: Option<String>,
}

enum RawNodeRow {
    Static(NodeId, Vec<f64>),
    Timed(NodeId, i64, usize, Vec<f64>),
}

pub fn load_temporal_graph(
    edge_table: &str,
    node_feature_table: Option<&str>,
    dims: GraphDims,
    config: LoadConfig,
) -> Result<TemporalGraphStore> {
    let mut raw = Vec::new();
    for (row, f) in rows(edge_table) {
        let n = f.len();
        let base = 3 + dims.d_e;
        if n != base && n != base + 1 {
            return Err(Error::Dimension(format!(
                "edge row {row} has {n} fields, expected {base} or {} for d_e = {}",
                base + 1,
                dims.d_e
            )));
        }
        let feat = f[3..base]
            .iter()
            .map(|tok| parse::<f64>(row, "edge feature", tok))
            .collect::<Result<Vec<_>>>()?;
        raw.push(RawEdge {
            src: parse(row, "source node", f[0])?,
            dst: parse(row, "destination node", f[1])?,
            t: parse(row, "timestamp", f[2])?,
            feat,
            attr: (n == base + 1).then(|| f[base].to_string()),
        });
    }
    if raw.is_empty() {
        return Err(Error::EmptyGraph);
    }

    let mut node_rows = Vec::new();
    if let Some(text) = node_feature_table {
        for (row, f) in rows(text) {
            let n = f.len();
            let parse_feats = |toks: &[&str]| -> Result<Vec<f64>> {
                toks.iter().map(|tok| parse::<f64>(row, "node feature", tok)).collect()
            };
            if n == 1 + dims.d_s {
                node_rows.push(RawNodeRow::Static(parse(row, "node", f[0])?, parse_feats(&f[1..])?));
            } else if n == 2 + dims.d_s {
                node_rows.push(RawNodeRow::Timed(
                    parse(row, "node", f[0])?,
                    parse(row, "timestamp", f[1])?,
                    row,
                    parse_feats(&f[2..])?,
                ));
            } else {
                return Err(Error::Dimension(format!(
                    "node row {row} has {n} fields, expected {} or {} for d_s = {}",
                    1 + dims.d_s,
                    2 + dims.d_s,
                    dims.d_s
                )));
            }
        }
    }

    // dense, order-preserving timestamp index
    let dense: BTreeMap<i64, Timestamp> = {
        let mut ts: Vec<i64> = raw.iter().map(|e| e.t).collect();
        ts.sort_unstable();
        ts.dedup();
        ts.into_iter().enumerate().map(|(i, t)| (t, i as Timestamp)).collect()
    };
    let raw_times: Vec<i64> = dense.keys().copied().collect();

    let mut num_nodes = raw.iter().map(|e| e.src.max(e.dst) + 1).max().unwrap_or(0);
    for r in &node_rows {
        let node = match r {
            RawNodeRow::Static(n, _) | RawNodeRow::Timed(n, ..) => *n,
        };
        num_nodes = num_nodes.max(node + 1);
    }

    let mut builder = TemporalGraphStore::builder(num_nodes, dims)
        .config(config)
        .raw_times(raw_times);
    for e in raw {
        builder.push_edge(TemporalEdge {
            src: e.src,
            dst: e.dst,
            t: dense[&e.t],
            feat: e.feat,
            attr: e.attr,
        });
    }
    for r in node_rows {
        match r {
            RawNodeRow::Static(n, feat) => builder.push_static_feature(n, feat),
            RawNodeRow::Timed(n, t, row, feat) => {
                let dt = *dense.get(&t).ok_or_else(|| Error::Parse {
                    row,
                    msg: format!("timestamp {t} does not occur in the edge table"),
                })?;
                builder.push_timed_feature(n, dt, feat);
            }
        }
    }
    builder.build()
}

pub fn load_temporal_graph_files(
    edge_path: &Path,
    node_path: Option<&Path>,
    dims: GraphDims,
    config: LoadConfig,
) -> Result<TemporalGraphStore> {
    let edges = std::fs::read_to_string(edge_path).map_err(|e| Error::io(edge_path, e))?;
    let nodes = match node_path {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?),
        None => None,
    };
    load_temporal_graph(&edges, nodes.as_deref(), dims, config)
}

/// Edge table with raw timestamps, loadable by [`load_temporal_graph`].
pub fn write_edge_table(store: &TemporalGraphStore) -> String {
    let mut out = String::from("# src dst t feat... [attr]\n");
    for e in store.edges() {
        write!(out, "{} {} {}", e.src, e.dst, store.raw_time(e.t)).unwrap();
        for v in &e.feat {
            write!(out, " {v}").unwrap();
        }
        if let Some(a) = &e.attr {
            write!(out, " {a}").unwrap();
        }
        out.push('\n');
    }
    out
}

/// Node feature table: static rows first, then per-time rows with raw
/// timestamps.
pub fn write_node_table(store: &TemporalGraphStore) -> String {
    let mut out = String::from("# node [t] feat...\n");
    for n in 0..store.num_nodes() {
        if let Some(f) = store.static_feature(n) {
            write!(out, "{n}").unwrap();
            for v in f {
                write!(out, " {v}").unwrap();
            }
            out.push('\n');
        }
    }
    for (n, t, f) in store.timed_features() {
        write!(out, "{n} {}", store.raw_time(t)).unwrap();
        for v in f {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}
