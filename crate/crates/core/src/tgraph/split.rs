use std::ops::Range;
use std::sync::Arc;

use super::store::{TemporalGraphStore, Timestamp};
use crate::error::{Error, Result};

/// A window of timestamps over a shared store. Queries are drawn from the
/// window; history for a query at `t` is every edge of the store before `t`.
#[derive(Clone, Debug)]
pub struct StoreView {
    store: Arc<TemporalGraphStore>,
    times: Range<Timestamp>,
}

impl StoreView {
    pub fn new(store: Arc<TemporalGraphStore>, times: Range<Timestamp>) -> Self {
        StoreView { store, times }
    }

    pub fn full(store: Arc<TemporalGraphStore>) -> Self {
        let end = store.t_max() + 1;
        StoreView::new(store, 0..end)
    }

    pub fn store(&self) -> &Arc<TemporalGraphStore> {
        &self.store
    }

    pub fn times(&self) -> Range<Timestamp> {
        self.times.clone()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.times.clone().map(|t| self.store.edges_at(t).len()).sum()
    }
}

/// Splits the timestamps into consecutive train, validation and test windows.
pub fn chronological_split(
    store: Arc<TemporalGraphStore>,
    counts: (usize, usize, usize),
) -> Result<(StoreView, StoreView, StoreView)> {
    let (n_train, n_val, n_test) = counts;
    let available = store.num_timestamps();
    if n_train + n_val + n_test > available {
        return Err(Error::Split(format!(
            "counts {n_train}/{n_val}/{n_test} exceed {available} timestamps"
        )));
    }
    let a = n_train as Timestamp;
    let b = a + n_val as Timestamp;
    let c = b + n_test as Timestamp;
    Ok((
        StoreView::new(store.clone(), 0..a),
        StoreView::new(store.clone(), a..b),
        StoreView::new(store, b..c),
    ))
}
