//! Mapping dataset parts onto training and evaluation query sources.

use std::sync::Arc;

use oodlinker::data::DatasetPart;
use oodlinker::eval::Split;
use oodlinker::tgraph::{chronological_split, StoreView, TemporalGraphStore};
use oodlinker::train::QuerySource;

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug)]
pub struct Sources {
    pub train: QuerySource,
    pub val: QuerySource,
    pub test_in: Option<QuerySource>,
    pub test_ood: Option<QuerySource>,
}

impl Sources {
    pub fn get(&self, split: Split) -> Option<&QuerySource> {
        match split {
            Split::Train => Some(&self.train),
            Split::Val => Some(&self.val),
            Split::TestIn => self.test_in.as_ref(),
            Split::TestOod => self.test_ood.as_ref(),
        }
    }
}

fn find<'a>(parts: &'a [DatasetPart], name: &str) -> Option<&'a DatasetPart> {
    parts.iter().find(|p| p.name == name)
}

fn fixed(part: &DatasetPart) -> CliResult<QuerySource> {
    let queries = part
        .queries
        .clone()
        .ok_or_else(|| CliError::Input(format!("part {:?} has no queries", part.name)))?;
    Ok(QuerySource::Fixed {
        store: part.store.clone(),
        queries,
    })
}

/// `[n - 1 - k, 1, k]` with `k = max(1, n / 4)`.
pub fn default_windows(n: usize) -> [usize; 3] {
    let k = (n / 4).max(1);
    [n.saturating_sub(1 + k), 1, k]
}

/// Parts named `train`/`val`/`test`/`ood` with queries are used as fixed
/// query sets. Otherwise the `in` part (or the only part) is split into
/// chronological windows, and an `ood` part is evaluated over the test window
/// when it covers it, or over its whole range.
pub fn resolve(parts: &[DatasetPart], windows: Option<[usize; 3]>) -> CliResult<Sources> {
    let dims = parts
        .first()
        .ok_or_else(|| CliError::Input("dataset has no parts".into()))?
        .store
        .dims();
    if let Some(p) = parts.iter().find(|p| p.store.dims() != dims) {
        return Err(CliError::Input(format!(
            "part {:?} has dims {:?}, expected {dims:?}",
            p.name,
            p.store.dims()
        )));
    }

    if let Some(train) = find(parts, "train").filter(|p| p.queries.is_some()) {
        let val = find(parts, "val").ok_or_else(|| CliError::Input("dataset lacks a `val` part".into()))?;
        return Ok(Sources {
            train: fixed(train)?,
            val: fixed(val)?,
            test_in: find(parts, "test").map(fixed).transpose()?,
            test_ood: find(parts, "ood").map(fixed).transpose()?,
        });
    }

    let base = find(parts, "in")
        .or_else(|| (parts.len() == 1).then(|| &parts[0]))
        .ok_or_else(|| CliError::Input("dataset needs a `train` or `in` part".into()))?;
    let n = base.store.num_timestamps();
    let [a, b, c] = windows.unwrap_or_else(|| default_windows(n));
    if a < 2 {
        return Err(CliError::Input(format!(
            "training window needs at least 2 timestamps, got {a} of {n}"
        )));
    }
    let (train, val, test) = chronological_split(base.store.clone(), (a, b, c))?;
    let test_ood = find(parts, "ood").map(|p| ood_view(&p.store, &test));
    Ok(Sources {
        train: QuerySource::Rolling(train),
        val: QuerySource::Rolling(val),
        test_in: (c > 0).then_some(QuerySource::Rolling(test.clone())),
        test_ood: test_ood.map(QuerySource::Rolling),
    })
}

fn ood_view(store: &Arc<TemporalGraphStore>, test: &StoreView) -> StoreView {
    let times = test.times();
    if !times.is_empty() && (times.end as usize) <= store.num_timestamps() {
        StoreView::new(store.clone(), times)
    } else {
        StoreView::full(store.clone())
    }
}
