//! Command implementations. Each returns after writing its outputs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use oodlinker::autodiff::Manifest;
use oodlinker::data::{
    generate_planted_motif_dataset, generate_planted_split, ood_edge_filter, random_toy_graph, read_dataset,
    synthesize_node_shift, write_dataset, DatasetPart, ShiftSpec,
};
use oodlinker::eval::{export_metrics, run_ablation, CurvePoint, MetricsRecord, Split};
use oodlinker::nets::ModelParams;
use oodlinker::par::Executor;
use oodlinker::tgraph::{load_temporal_graph_files, LoadConfig, TemporalGraphStore};
use oodlinker::train::{evaluate, fit_with, loss_gradcheck, EpochRecord, TrainConfig};
use serde::Serialize;

use crate::config::{to_toml, RunConfig, SynthConfig, RESOLVED_CONFIG};
use crate::error::{checkpoint, internal, CliError, CliResult};
use crate::sources::{resolve, Sources};

pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const LOG_FILE: &str = "train.log";
pub const EVAL_METRICS_FILE: &str = "eval-metrics.csv";
pub const EVAL_SUMMARY_FILE: &str = "eval-summary.json";
pub const ABLATION_SUMMARY_FILE: &str = "ablation.json";
pub const BEST_CHECKPOINT: &str = "best.json";

fn write(path: &Path, text: &str) -> CliResult<()> {
    internal(fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())))
}

fn create_dir(path: &Path) -> CliResult<()> {
    internal(fs::create_dir_all(path).map_err(|e| format!("cannot create {}: {e}", path.display())))
}

fn snapshot<T: Serialize>(out: &Path, cfg: &T) -> CliResult<()> {
    create_dir(out)?;
    write(&out.join(RESOLVED_CONFIG), &to_toml(cfg)?)
}

fn load_sources(cfg: &RunConfig) -> CliResult<Sources> {
    let (_, parts) = read_dataset(cfg.data_dir()?)?;
    resolve(&parts, cfg.windows)
}

pub fn checkpoint_dir(out: &Path, seed: u64) -> PathBuf {
    out.join("checkpoints").join(format!("seed-{seed}"))
}

fn checkpoint_manifest(model: &ModelParams, cfg: &TrainConfig, epoch: usize) -> Manifest {
    let mut m = model.to_manifest();
    m.meta.insert("seed".into(), cfg.seed.into());
    m.meta.insert("epoch".into(), epoch.into());
    m.meta
        .insert("train".into(), serde_json::to_value(cfg).expect("config serializes"));
    m
}

fn eval_record(
    model: &ModelParams,
    src: &oodlinker::train::QuerySource,
    cfg: &TrainConfig,
    exec: &Executor,
    split: Split,
    epoch: usize,
) -> CliResult<MetricsRecord> {
    let e = evaluate(model, src, cfg, exec)?;
    Ok(MetricsRecord {
        seed: cfg.seed,
        split,
        epoch,
        roc_auc: Some(e.roc_auc),
        task_loss: e.loss.task,
        kl_loss: e.loss.kl,
        total_loss: e.loss.total,
    })
}

/// Fits one model per seed, checkpointing every validation improvement, then
/// scores the best model on the test splits.
pub fn train(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    cfg.train.validate()?;
    let sources = load_sources(cfg)?;
    snapshot(out, cfg)?;
    let mut log = String::new();
    let mut records = Vec::new();
    for seed in cfg.seeds() {
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let dir = checkpoint_dir(out, seed);
        create_dir(&dir)?;
        let header = format!("# seed {seed}\n{}", EpochRecord::log_header());
        println!("{header}");
        writeln!(log, "{header}").unwrap();
        let model = tc.init_model(sources.train.store())?;
        let fit = fit_with(model, &sources.train, &sources.val, &[], &tc, |rec, model, improved| {
            println!("{}", rec.log_line());
            writeln!(log, "{}", rec.log_line()).unwrap();
            if improved {
                let path = dir.join(format!("epoch-{:04}.json", rec.epoch));
                checkpoint_manifest(model, &tc, rec.epoch).save(&path)?;
            }
            Ok(())
        })?;
        internal(checkpoint_manifest(&fit.model, &tc, fit.best_epoch).save(&dir.join(BEST_CHECKPOINT)))?;
        for rec in &fit.history {
            records.extend(MetricsRecord::from_epoch(seed, rec));
        }
        let exec = Executor::new(tc.workers)?;
        for split in [Split::TestIn, Split::TestOod] {
            if let Some(src) = sources.get(split) {
                records.push(eval_record(&fit.model, src, &tc, &exec, split, fit.best_epoch)?);
            }
        }
        let line = format!("# best epoch {} val_auc {:.4}", fit.best_epoch, fit.best_val_auc);
        println!("{line}");
        writeln!(log, "{line}").unwrap();
    }
    write(&out.join(LOG_FILE), &log)?;
    internal(export_metrics(&records, &out.join(METRICS_FILE), &out.join(SUMMARY_FILE)))
}

/// Scores a checkpoint on the requested splits of the configured dataset.
pub fn eval(checkpoint_path: &Path, cfg: &RunConfig, splits: &[Split], out: &Path) -> CliResult<Vec<MetricsRecord>> {
    let manifest = checkpoint(Manifest::load(checkpoint_path))?;
    let model = ModelParams::from_manifest(&manifest)?;
    let mut tc: TrainConfig = match manifest.meta.get("train") {
        Some(v) => checkpoint(serde_json::from_value(v.clone()))?,
        None => cfg.train.clone(),
    };
    tc.tau = model.tau;
    tc.beta = model.beta;
    let epoch = manifest.meta.get("epoch").and_then(|v| v.as_u64()).unwrap_or(0) as usize;

    let sources = load_sources(cfg)?;
    let dims = sources.train.store().dims();
    if (model.dims.d_s, model.dims.d_e) != (dims.d_s, dims.d_e) {
        return Err(CliError::Checkpoint(format!(
            "checkpoint expects d_s = {}, d_e = {} but the dataset has d_s = {}, d_e = {}",
            model.dims.d_s, model.dims.d_e, dims.d_s, dims.d_e
        )));
    }
    snapshot(out, cfg)?;
    let exec = Executor::new(tc.workers)?;
    let mut records = Vec::new();
    for &split in splits {
        let src = sources
            .get(split)
            .ok_or_else(|| CliError::Input(format!("dataset has no {} split", split.as_str())))?;
        let r = eval_record(&model, src, &tc, &exec, split, epoch)?;
        println!(
            "{:<9} roc_auc {:.6} task_loss {:.6} kl_loss {:.6}",
            split.as_str(),
            r.roc_auc.unwrap_or(f64::NAN),
            r.task_loss,
            r.kl_loss
        );
        records.push(r);
    }
    internal(export_metrics(&records, &out.join(EVAL_METRICS_FILE), &out.join(EVAL_SUMMARY_FILE)))?;
    Ok(records)
}

fn load_source_graph(cfg: &SynthConfig) -> CliResult<TemporalGraphStore> {
    let src = cfg
        .source
        .as_ref()
        .ok_or_else(|| CliError::Input("this shift needs a [source] graph".into()))?;
    Ok(load_temporal_graph_files(
        &src.edges,
        src.nodes.as_deref(),
        src.dims,
        LoadConfig {
            directed: src.directed,
            allow_self_loops: false,
        },
    )?)
}

fn rolling_part(name: &str, store: TemporalGraphStore) -> DatasetPart {
    DatasetPart {
        name: name.into(),
        store: store.into(),
        queries: None,
        node_map: None,
    }
}

/// Writes a shifted dataset. Planted data gets `train`, `val`, `test` and
/// `ood` parts; the other shifts get `in` and `ood`.
pub fn synth(cfg: &SynthConfig, out: &Path) -> CliResult<()> {
    cfg.shift.validate()?;
    let parts: Vec<DatasetPart> = match &cfg.shift {
        ShiftSpec::PlantedMotif(spec) => {
            let d = generate_planted_motif_dataset(spec)?;
            let test = generate_planted_split(spec, false, 4)?;
            vec![
                ("train", &d.train).into(),
                ("val", &d.val).into(),
                ("test", &test).into(),
                ("ood", &d.ood).into(),
            ]
        }
        ShiftSpec::EdgeAttribute { held_out_attr } => {
            let store = load_source_graph(cfg)?;
            let (inside, ood) = ood_edge_filter(&store, held_out_attr)?;
            vec![("in", inside).into(), ("ood", ood).into()]
        }
        ShiftSpec::NodeFeature { p_bar, sigma, d, seed } => {
            ShiftSpec::NodeFeature {
                p_bar: cfg.ood_p_bar,
                sigma: *sigma,
                d: *d,
                seed: *seed,
            }
            .validate()?;
            let store = load_source_graph(cfg)?;
            let inside = synthesize_node_shift(&store, *p_bar, *sigma, *d, *seed)?;
            let ood = synthesize_node_shift(&store, cfg.ood_p_bar, *sigma, *d, seed.wrapping_add(1))?;
            vec![rolling_part("in", inside), rolling_part("ood", ood)]
        }
    };
    snapshot(out, cfg)?;
    let manifest = internal(write_dataset(out, &cfg.shift, &parts))?;
    for p in &manifest.parts {
        println!(
            "{:<6} nodes {:>6} edges {:>8} timestamps {:>4}{}",
            p.name,
            p.num_nodes,
            p.num_edges,
            p.num_timestamps,
            if p.has_queries { "  (with queries)" } else { "" }
        );
    }
    Ok(())
}

fn curve_table(points: &[CurvePoint]) -> String {
    let mut out = String::from("epoch,train_task,train_kl,val_auc,ood_task,ood_auc\n");
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            p.epoch, p.train_task, p.train_kl, p.val_auc, p.ood_task, p.ood_auc
        )
        .unwrap();
    }
    out
}

#[derive(Debug, Serialize)]
struct AblationSeed {
    seed: u64,
    /// Share of epochs after the fifth where the selector's ood task loss is
    /// not above the all-links one.
    ood_win_rate: Option<f64>,
    final_ood_auc_invariant: f64,
    final_ood_auc_all_links: f64,
}

/// Paired selector and all-links runs per seed, one curve file per variant.
pub fn ablate(cfg: &RunConfig, out: &Path) -> CliResult<()> {
    cfg.train.validate()?;
    let sources = load_sources(cfg)?;
    let ood = sources
        .test_ood
        .as_ref()
        .ok_or_else(|| CliError::Input("ablation needs an `ood` part".into()))?;
    snapshot(out, cfg)?;
    let mut summary = Vec::new();
    for seed in cfg.seeds() {
        let tc = TrainConfig {
            seed,
            ..cfg.train.clone()
        };
        let curves = run_ablation(&sources.train, &sources.val, ood, &tc)?;
        write(&out.join(format!("curves-seed{seed}-invariant.csv")), &curve_table(&curves.invariant))?;
        write(&out.join(format!("curves-seed{seed}-all-links.csv")), &curve_table(&curves.all_links))?;
        let last = |c: &[CurvePoint]| c.last().map_or(f64::NAN, |p| p.ood_auc);
        let row = AblationSeed {
            seed,
            ood_win_rate: curves.ood_win_rate(5),
            final_ood_auc_invariant: last(&curves.invariant),
            final_ood_auc_all_links: last(&curves.all_links),
        };
        println!(
            "seed {seed}: ood auc {:.4} (selector) vs {:.4} (all links), win rate {}",
            row.final_ood_auc_invariant,
            row.final_ood_auc_all_links,
            row.ood_win_rate.map_or("n/a".into(), |w| format!("{w:.2}"))
        );
        summary.push(row);
    }
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(&out.join(ABLATION_SUMMARY_FILE), &(json + "\n"))
}

/// Gradient check of the full objective on random toy graphs; returns the
/// largest relative error.
pub fn gradcheck(graphs: usize, seed: u64, step: f64, tolerance: f64) -> CliResult<f64> {
    let mut worst: f64 = 0.0;
    for i in 0..graphs {
        let (store, query) = random_toy_graph(seed.wrapping_add(i as u64), 8, 3)?;
        let cfg = TrainConfig {
            seed: seed.wrapping_add(i as u64),
            d_t: 2,
            h_agg: 4,
            h1: 4,
            h2: 4,
            tau: 0.7,
            beta: 1.0,
            cap: 0,
            ..TrainConfig::default()
        };
        let model = cfg.init_model(&store)?;
        let r = loss_gradcheck(&model, &store, query, &cfg, step)?;
        println!(
            "graph {i:>3}: nodes {:>2} edges {:>2} params {:>4} excluded {:>3} max rel err {:.3e}",
            store.num_nodes(),
            store.edges().len(),
            r.checked,
            r.excluded,
            r.max_rel_err
        );
        worst = worst.max(r.max_rel_err);
    }
    println!("max relative error {worst:.3e} over {graphs} graphs (tolerance {tolerance:.0e})");
    if worst < tolerance {
        Ok(worst)
    } else {
        Err(CliError::Internal(format!(
            "max relative error {worst:.3e} is not below {tolerance:.0e}"
        )))
    }
}
