//! Temporal graph storage, loading, neighborhoods and chronological splits.

mod io;
mod split;
mod store;
mod subgraph;

pub use io::{load_temporal_graph, load_temporal_graph_files, write_edge_table, write_node_table};
pub use split::{chronological_split, StoreView};
pub use store::{
    AdjEntry, EdgeId, GraphDims, LoadConfig, NeighborRecord, NodeId, StoreBuilder, TemporalEdge,
    TemporalGraphStore, Timestamp,
};
pub use subgraph::{extract_computational_subgraph, ComputationalSubgraph, ExtractConfig, QueryLink};
