//! ROC-AUC, the all-links ablation and metrics files.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::ModelParams;
use crate::train::{fit_with, EpochRecord, QuerySource, TrainConfig, Variant};

/// Mann-Whitney statistic via average ranks; ties count one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric(format!("score {s} is not a number")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC-AUC needs both classes, got {n_pos} positive and {n_neg} negative"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the rank sum keeps tied ranks integral
    let mut pos_rank2: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let rank2 = (i + 1 + j + 1) as u64;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                pos_rank2 += rank2;
            }
        }
        i = j + 1;
    }
    let n_pos = n_pos as u64;
    let u2 = pos_rank2 - n_pos * (n_pos + 1);
    Ok(u2 as f64 / (2 * n_pos * n_neg as u64) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Split {
    Train,
    Val,
    TestIn,
    TestOod,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::TestIn => "test-in",
            Split::TestOod => "test-ood",
        }
    }
}

/// One row of the metrics table. `roc_auc` is blank for training-loss rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub seed: u64,
    pub split: Split,
    pub epoch: usize,
    pub roc_auc: Option<f64>,
    pub task_loss: f64,
    pub kl_loss: f64,
    pub total_loss: f64,
}

impl MetricsRecord {
    /// Training-loss row and validation row for one epoch.
    pub fn from_epoch(seed: u64, rec: &EpochRecord) -> Vec<MetricsRecord> {
        vec![
            MetricsRecord {
                seed,
                split: Split::Train,
                epoch: rec.epoch,
                roc_auc: None,
                task_loss: rec.train.task,
                kl_loss: rec.train.kl,
                total_loss: rec.train.total,
            },
            MetricsRecord {
                seed,
                split: Split::Val,
                epoch: rec.epoch,
                roc_auc: Some(rec.val.roc_auc),
                task_loss: rec.val.loss.task,
                kl_loss: rec.val.loss.kl,
                total_loss: rec.val.loss.total,
            },
        ]
    }
}

pub const METRICS_COLUMNS: [&str; 7] = ["seed", "split", "epoch", "roc_auc", "task_loss", "kl_loss", "total_loss"];

pub fn write_metrics_table(records: &[MetricsRecord]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(METRICS_COLUMNS)
        .and_then(|_| records.iter().try_for_each(|r| w.serialize(r)))
        .map_err(|e| Error::Contract(format!("metrics table: {e}")))?;
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Contract(format!("metrics table: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn read_metrics_table(text: &str) -> Result<Vec<MetricsRecord>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::Parse { row: 1, msg: e.to_string() })?
        .iter()
        .map(str::to_string)
        .collect();
    if header != METRICS_COLUMNS {
        return Err(Error::Parse {
            row: 1,
            msg: format!("unexpected header {header:?}"),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, rec)| rec.map_err(|e| Error::Parse { row: i + 2, msg: e.to_string() }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation; absent for a single run.
    pub std: Option<f64>,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            let ss: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
            (ss / (n - 1) as f64).sqrt()
        });
        Some(MeanStd { mean, std, n })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub roc_auc: Option<MeanStd>,
    pub task_loss: MeanStd,
    pub kl_loss: MeanStd,
    pub total_loss: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub schema: u32,
    pub seeds: Vec<u64>,
    /// Keyed by split name; each seed contributes its last-epoch row.
    pub splits: BTreeMap<String, SplitSummary>,
}

pub fn summarize(records: &[MetricsRecord]) -> MetricsSummary {
    let mut last: BTreeMap<(Split, u64), &MetricsRecord> = BTreeMap::new();
    for r in records {
        let slot = last.entry((r.split, r.seed)).or_insert(r);
        if r.epoch >= slot.epoch {
            *slot = r;
        }
    }
    let mut by_split: BTreeMap<Split, Vec<&MetricsRecord>> = BTreeMap::new();
    for ((split, _), r) in last {
        by_split.entry(split).or_default().push(r);
    }
    let mut seeds: Vec<u64> = records.iter().map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let splits = by_split
        .into_iter()
        .map(|(split, rows)| {
            let col = |f: fn(&MetricsRecord) -> f64| MeanStd::of(&rows.iter().map(|r| f(r)).collect::<Vec<_>>()).expect("non-empty");
            let aucs: Vec<f64> = rows.iter().filter_map(|r| r.roc_auc).collect();
            (
                split.as_str().to_string(),
                SplitSummary {
                    roc_auc: MeanStd::of(&aucs),
                    task_loss: col(|r| r.task_loss),
                    kl_loss: col(|r| r.kl_loss),
                    total_loss: col(|r| r.total_loss),
                },
            )
        })
        .collect();
    MetricsSummary {
        schema: 1,
        seeds,
        splits,
    }
}

/// Writes the metrics table to `table_path` and the JSON summary to
/// `summary_path`.
pub fn export_metrics(records: &[MetricsRecord], table_path: &Path, summary_path: &Path) -> Result<()> {
    std::fs::write(table_path, write_metrics_table(records)?).map_err(|e| Error::io(table_path, e))?;
    let json = serde_json::to_string_pretty(&summarize(records)).expect("summary serializes");
    std::fs::write(summary_path, json + "\n").map_err(|e| Error::io(summary_path, e))
}

/// Per-epoch losses of one ablation arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub epoch: usize,
    pub train_task: f64,
    pub train_kl: f64,
    pub val_auc: f64,
    pub ood_task: f64,
    pub ood_auc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationCurves {
    pub seed: u64,
    pub invariant: Vec<CurvePoint>,
    pub all_links: Vec<CurvePoint>,
}

impl AblationCurves {
    /// Fraction of epochs after `skip` where the selector's OOD task loss is
    /// not above the all-links one.
    pub fn ood_win_rate(&self, skip: usize) -> Option<f64> {
        let pairs: Vec<(f64, f64)> = self
            .invariant
            .iter()
            .zip(&self.all_links)
            .filter(|(a, _)| a.epoch > skip)
            .map(|(a, b)| (a.ood_task, b.ood_task))
            .collect();
        if pairs.is_empty() {
            return None;
        }
        Some(pairs.iter().filter(|(a, b)| a <= b).count() as f64 / pairs.len() as f64)
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("variant,epoch,train_task,train_kl,val_auc,ood_task,ood_auc\n");
        for (name, curve) in [("invariant", &self.invariant), ("all-links", &self.all_links)] {
            for p in curve {
                out.push_str(&format!(
                    "{name},{},{},{},{},{},{}\n",
                    p.epoch, p.train_task, p.train_kl, p.val_auc, p.ood_task, p.ood_auc
                ));
            }
        }
        out
    }
}

fn curve(history: &[EpochRecord]) -> Vec<CurvePoint> {
    history
        .iter()
        .map(|r| {
            let ood = &r.monitors[0].1;
            CurvePoint {
                epoch: r.epoch,
                train_task: r.train.task,
                train_kl: r.train.kl,
                val_auc: r.val.roc_auc,
                ood_task: ood.loss.task,
                ood_auc: ood.roc_auc,
            }
        })
        .collect()
}

/// Trains the selector model and the all-links variant from the same seed for
/// the full epoch budget and records their loss curves.
pub fn run_ablation(
    train: &QuerySource,
    val: &QuerySource,
    ood_val: &QuerySource,
    cfg: &TrainConfig,
) -> Result<AblationCurves> {
    let run = |variant| -> Result<(Vec<CurvePoint>, ModelParams)> {
        let cfg = TrainConfig {
            variant,
            patience: cfg.epochs.max(1),
            ..cfg.clone()
        };
        let model = cfg.init_model(train.store())?;
        let res = fit_with(model, train, val, &[("ood", ood_val)], &cfg, |_, _, _| Ok(()))?;
        Ok((curve(&res.history), res.model))
    };
    let (invariant, _) = run(Variant::Invariant)?;
    let (all_links, _) = run(Variant::AllLinks)?;
    Ok(AblationCurves {
        seed: cfg.seed,
        invariant,
        all_links,
    })
}
