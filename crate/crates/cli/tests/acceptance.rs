//! Acceptance gate. Every criterion prints one `PASS`/`FAIL` line to stdout
//! and asserts. Criteria run one at a time so wall-clock budgets are honest.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use oodlinker::data::{generate_planted_motif_dataset, random_toy_graph, PlantedSpec, PlantedSplit};
use oodlinker::eval::{roc_auc, run_ablation, AblationCurves};
use oodlinker::ibloss::total_loss;
use oodlinker::nets::{forward_selector, selection_probability, BranchKind, BranchParams, EdgeSelectionProbabilities, NetDims};
use oodlinker::par::Executor;
use oodlinker::autodiff::Tensor;
use oodlinker::tgraph::{
    extract_computational_subgraph, EdgeId, ExtractConfig, GraphDims, LoadConfig, NodeId, QueryLink, TemporalEdge,
    TemporalGraphStore, Timestamp,
};
use oodlinker::train::{loss_gradcheck, train_epoch, OptimizerState, QuerySource, TrainConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(id: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "[acceptance] criterion {id:>2} {verdict}  {name}: {detail}").unwrap();
    out.flush().unwrap();
}

/// Selector settings shared by the planted-data criteria.
fn planted_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 100,
        learning_rate: 0.002,
        batch_size: 10,
        beta: 1e-4,
        tau: 1.0,
        h_agg: 16,
        h1: 16,
        h2: 16,
        seed,
        ..TrainConfig::default()
    }
}

fn fixed(split: &PlantedSplit) -> QuerySource {
    QuerySource::Fixed {
        store: split.store.clone(),
        queries: split.queries.clone(),
    }
}

#[test]
fn c01_gradient_fidelity() {
    let _g = serial();
    let start = Instant::now();
    let (mut worst, mut checked, mut excluded) = (0.0f64, 0, 0);
    let graphs = 24;
    let mut max_nodes = 0;
    for i in 0..graphs {
        let (store, query) = random_toy_graph(1000 + i, 8, 3).unwrap();
        max_nodes = max_nodes.max(store.num_nodes());
        assert_eq!(store.num_timestamps(), 3);
        let cfg = TrainConfig {
            seed: i,
            d_t: 3,
            h_agg: 4,
            h1: 5,
            h2: 3,
            tau: 0.8,
            beta: 0.5,
            cap: 0,
            ..TrainConfig::default()
        };
        let model = cfg.init_model(&store).unwrap();
        let r = loss_gradcheck(&model, &store, query, &cfg, 1e-5).unwrap();
        assert_eq!(r.checked, model.num_params());
        worst = worst.max(r.max_rel_err);
        checked += r.checked;
        excluded += r.excluded;
    }
    let elapsed = start.elapsed();
    let ok = worst < 1e-4 && excluded < checked && elapsed < Duration::from_secs(60) && max_nodes <= 8;
    report(
        1,
        "gradient fidelity",
        ok,
        &format!(
            "max rel err {worst:.2e} (< 1e-4) over {graphs} graphs, {checked} coordinates, {excluded} excluded, {:.1}s (< 60s)",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

struct CausalCase {
    edges: Vec<(NodeId, NodeId, Timestamp, Vec<f64>)>,
    statics: Vec<Vec<f64>>,
    t_query: Timestamp,
}

impl CausalCase {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let n = rng.random_range(4..=12);
        let t_query = rng.random_range(3..=5);
        let mut edges = Vec::new();
        for t in 0..t_query {
            for _ in 0..rng.random_range(2..=n) {
                let a = rng.random_range(0..n);
                let b = (a + rng.random_range(1..n)) % n;
                edges.push((a, b, t, vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]));
            }
        }
        // keep both query endpoints in the history
        edges.push((0, 2, 0, vec![0.5, -0.5]));
        edges.push((1, 3, 1, vec![-0.5, 0.5]));
        let statics = (0..n).map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        CausalCase { edges, statics, t_query }
    }

    fn store(&self) -> TemporalGraphStore {
        let mut b = TemporalGraphStore::builder(self.statics.len(), GraphDims { d_s: 2, d_e: 2 });
        for (n, f) in self.statics.iter().enumerate() {
            b.push_static_feature(n, f.clone());
        }
        for (src, dst, t, feat) in &self.edges {
            b.push_edge(TemporalEdge {
                src: *src,
                dst: *dst,
                t: *t,
                feat: feat.clone(),
                attr: None,
            });
        }
        b.build().unwrap()
    }
}

fn same_pq(a: &EdgeSelectionProbabilities, b: &EdgeSelectionProbabilities, e: EdgeId) -> bool {
    a.p_of(e).map(f64::to_bits) == b.p_of(e).map(f64::to_bits) && a.q_of(e).map(f64::to_bits) == b.q_of(e).map(f64::to_bits)
}

#[test]
fn c02_temporal_causality() {
    let _g = serial();
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let cfg = TrainConfig {
        h_agg: 8,
        h1: 8,
        h2: 8,
        d_t: 4,
        ..TrainConfig::default()
    };
    let (mut pairs, mut violations, mut sensitive) = (0, 0, 0);
    while pairs < 100 {
        let case = CausalCase::random(&mut rng);
        let store = case.store();
        let q = QueryLink::new(0, 1, case.t_query, 1);
        let sg = extract_computational_subgraph(&store, q, ExtractConfig { hops: 2, cap: None, seed: 0 }).unwrap();
        let ids: Vec<EdgeId> = sg.edge_ids().collect();
        let t_of = |e: EdgeId| store.edge(e).t;
        let with_later: Vec<EdgeId> = ids.iter().copied().filter(|&e| ids.iter().any(|&f| t_of(f) > t_of(e))).collect();
        if with_later.is_empty() {
            continue;
        }
        let e = with_later[rng.random_range(0..with_later.len())];
        let model = TrainConfig { seed: pairs, ..cfg.clone() }.init_model(&store).unwrap();
        let base = forward_selector(&model, &store, &sg).unwrap();

        // features of every strictly later edge
        let mut changed = CausalCase { edges: case.edges.clone(), ..case };
        for edge in changed.edges.iter_mut().filter(|x| x.2 > t_of(e)) {
            edge.3 = vec![rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        }
        let changed_store = changed.store();
        let moved = forward_selector(&model, &changed_store, &sg).unwrap();
        if !same_pq(&base, &moved, e) {
            violations += 1;
        }
        if ids.iter().any(|&f| t_of(f) > t_of(e) && base.p_of(f) != moved.p_of(f)) {
            sensitive += 1;
        }

        // existence of each strictly later edge
        for &f in ids.iter().filter(|&&f| t_of(f) > t_of(e)) {
            let removed = forward_selector(&model, &store, &sg.without_edge(f)).unwrap();
            if !same_pq(&base, &removed, e) {
                violations += 1;
            }
        }
        pairs += 1;
    }
    let elapsed = start.elapsed();
    let ok = violations == 0 && sensitive > 0 && elapsed < Duration::from_secs(30);
    report(
        2,
        "temporal causality",
        ok,
        &format!(
            "{pairs} pairs, {violations} non-identical p/q, later-edge perturbations visible downstream in {sensitive}, {:.1}s (< 30s)",
            elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn c03_loss_invariants() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prob = |rng: &mut ChaCha8Rng| match rng.random_range(0..10) {
        0 => 0.0,
        1 => 1.0,
        _ => rng.random_range(0.0..=1.0),
    };
    let (mut negative, mut nonzero_equal, mut identity, mut beta_zero) = (0, 0, 0, 0);
    let cases = 10_000;
    for _ in 0..cases {
        let n = rng.random_range(1..=8);
        let mut batch = Vec::with_capacity(n);
        for i in 0..n {
            let m = rng.random_range(0..=10);
            let p: Vec<f64> = (0..m).map(|_| prob(&mut rng)).collect();
            let q: Vec<f64> = (0..m).map(|_| prob(&mut rng)).collect();
            let probs = EdgeSelectionProbabilities {
                edges: (0..m).map(|k| (k, 0)).collect(),
                p,
                q,
            };
            batch.push((prob(&mut rng), (i % 2) as u8, probs));
        }
        let beta = rng.random_range(0.0..5.0);
        let view: Vec<(f64, u8, &EdgeSelectionProbabilities)> = batch.iter().map(|(y, l, p)| (*y, *l, p)).collect();
        let l = total_loss(&view, beta).unwrap();
        if !(l.kl >= 0.0) {
            negative += 1;
        }
        if l.total.to_bits() != (l.task + beta * l.kl).to_bits() {
            identity += 1;
        }
        let l0 = total_loss(&view, 0.0).unwrap();
        if l0.total.to_bits() != l0.task.to_bits() {
            beta_zero += 1;
        }
        let equal: Vec<EdgeSelectionProbabilities> = batch
            .iter()
            .map(|(_, _, p)| EdgeSelectionProbabilities {
                q: p.p.clone(),
                ..p.clone()
            })
            .collect();
        let view: Vec<(f64, u8, &EdgeSelectionProbabilities)> =
            batch.iter().zip(&equal).map(|((y, l, _), p)| (*y, *l, p)).collect();
        if total_loss(&view, beta).unwrap().kl != 0.0 {
            nonzero_equal += 1;
        }
    }
    let ok = negative + nonzero_equal + identity + beta_zero == 0;
    report(
        3,
        "loss invariants",
        ok,
        &format!(
            "{cases} fuzzed batches: {negative} negative kl, {nonzero_equal} nonzero kl at p = q, \
             {identity} identity breaks, {beta_zero} beta = 0 mismatches"
        ),
    );
    assert!(ok);
}

fn matrix(rows: usize, cols: usize, data: &[f64]) -> Tensor {
    Tensor::matrix(rows, cols, data.to_vec()).unwrap()
}

#[test]
fn c04_temperature_behavior() {
    let _g = serial();
    let dims = NetDims {
        h_agg: 2,
        h1: 1,
        h2: 1,
        ..NetDims::new(2, 1, 1)
    };
    // logit = sign * 2 * h_a[0]
    let head = |sign: f64| {
        let mut b = BranchParams::zeros(BranchKind::EdgeSelector, &dims);
        b.head = vec![matrix(1, 4, &[2.0, 0.0, 0.0, 0.0]), matrix(1, 1, &[1.0]), matrix(1, 1, &[sign])];
        b
    };
    let taus = [1.0, 0.1, 0.01];
    let mut lines = Vec::new();
    let mut ok = true;
    for z in [-2.0f64, -0.5, 0.5, 2.0] {
        let b = head(z.signum());
        let h = [z.abs() / 2.0, 0.0];
        let dist: Vec<f64> = taus
            .iter()
            .map(|&tau| {
                let p = selection_probability(&b, &h, &[0.0, 0.0], tau).unwrap();
                (p - p.round()).abs()
            })
            .collect();
        ok &= dist.windows(2).all(|w| w[1] < w[0]);
        lines.push(format!("z={z}: {:.3e} > {:.3e} > {:.3e}", dist[0], dist[1], dist[2]));
    }
    for &tau in &taus {
        ok &= selection_probability(&head(1.0), &[0.0, 0.0], &[0.0, 0.0], tau).unwrap() == 0.5;
    }
    report(4, "temperature behavior", ok, &format!("{}; p(z=0) = 0.5 for all tau", lines.join(", ")));
    assert!(ok);
}

struct Ablation {
    curves: Vec<AblationCurves>,
    elapsed: Duration,
}

/// Five paired runs on the planted dataset, computed once for criteria 5 and 6.
fn ablation() -> &'static Ablation {
    static CELL: OnceLock<Ablation> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let curves = (0..5)
            .map(|seed| {
                let spec = PlantedSpec {
                    n_nodes: 200,
                    n_timestamps: 6,
                    spurious_rate: 0.9,
                    seed,
                    ..PlantedSpec::default()
                };
                let data = generate_planted_motif_dataset(&spec).unwrap();
                run_ablation(&fixed(&data.train), &fixed(&data.val), &fixed(&data.ood), &planted_config(seed)).unwrap()
            })
            .collect();
        Ablation {
            curves,
            elapsed: start.elapsed(),
        }
    })
}

#[test]
fn c05_planted_shift_generalization() {
    let _g = serial();
    let a = ablation();
    let last = |c: &AblationCurves, inv: bool| {
        let curve = if inv { &c.invariant } else { &c.all_links };
        curve.last().unwrap().ood_auc
    };
    let inv: Vec<f64> = a.curves.iter().map(|c| last(c, true)).collect();
    let all: Vec<f64> = a.curves.iter().map(|c| last(c, false)).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mi, ma) = (mean(&inv), mean(&all));
    let ok = mi - ma >= 0.03 && mi > 0.6 && a.elapsed < Duration::from_secs(600);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(" ");
    report(
        5,
        "planted-shift generalization",
        ok,
        &format!(
            "mean ood auc {mi:.4} (selector: {}) vs {ma:.4} (all links: {}), margin {:.4} (>= 0.03), {:.0}s (< 600s)",
            fmt(&inv),
            fmt(&all),
            mi - ma,
            a.elapsed.as_secs_f64()
        ),
    );
    assert!(ok);
}

#[test]
fn c06_ablation_loss_curves() {
    let _g = serial();
    let rates: Vec<f64> = ablation().curves.iter().map(|c| c.ood_win_rate(5).unwrap()).collect();
    let winners = rates.iter().filter(|&&r| r >= 0.6).count();
    let ok = winners * 2 > rates.len();
    let shown: Vec<String> = rates.iter().map(|r| format!("{r:.2}")).collect();
    report(
        6,
        "ablation loss curves",
        ok,
        &format!(
            "share of epochs after 5 with selector ood task loss <= all links: [{}]; {winners}/5 seeds >= 0.6",
            shown.join(", ")
        ),
    );
    assert!(ok);
}

fn brute_auc(scores: &[f64], labels: &[u8]) -> f64 {
    let pos: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(labels).filter(|(_, &l)| l == 0).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &a in &pos {
        for &b in &neg {
            wins += if a > b {
                1.0
            } else if a == b {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / (pos.len() * neg.len()) as f64
}

#[test]
fn c07_roc_oracle_equivalence() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (mut worst, mut complement, mut monotone) = (0.0f64, 0, 0);
    let cases = 1000;
    for case in 0..cases {
        let n = rng.random_range(2..=12);
        let scores: Vec<f64> = if case % 2 == 0 {
            (0..n).map(|_| f64::from(rng.random_range(0..6u8)) / 5.0).collect()
        } else {
            (0..n).map(|_| rng.random_range(0.0..1.0)).collect()
        };
        let mut labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..2u8)).collect();
        labels[0] = 0;
        labels[n - 1] = 1;
        let auc = roc_auc(&scores, &labels).unwrap();
        worst = worst.max((auc - brute_auc(&scores, &labels)).abs());
        let flipped: Vec<u8> = labels.iter().map(|l| 1 - l).collect();
        if (auc + roc_auc(&scores, &flipped).unwrap() - 1.0).abs() >= 1e-12 {
            complement += 1;
        }
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        if roc_auc(&squashed, &labels).unwrap() != auc {
            monotone += 1;
        }
    }
    let ok = worst < 1e-12 && complement == 0 && monotone == 0;
    report(
        7,
        "roc oracle equivalence",
        ok,
        &format!(
            "{cases} lists: max |auc - brute force| {worst:.1e} (< 1e-12), {complement} complement and {monotone} monotone failures"
        ),
    );
    assert!(ok);
}

fn balanced(split: &PlantedSplit, per_class: usize) -> Vec<QueryLink> {
    let pos = split.queries.iter().filter(|q| q.label == 1).take(per_class);
    let neg = split.queries.iter().filter(|q| q.label == 0).take(per_class);
    pos.chain(neg).copied().collect()
}

fn median_epoch_time(store: Arc<TemporalGraphStore>, queries: Vec<QueryLink>, trials: usize) -> Duration {
    let cfg = planted_config(0);
    let source = QuerySource::Fixed { store: store.clone(), queries };
    let exec = Executor::sequential();
    let mut model = cfg.init_model(&store).unwrap();
    let mut opt = OptimizerState::new(&model);
    train_epoch(&mut model, &mut opt, &source, &cfg, 0, &exec).unwrap();
    let mut times: Vec<Duration> = (1..=trials)
        .map(|epoch| {
            let start = Instant::now();
            train_epoch(&mut model, &mut opt, &source, &cfg, epoch, &exec).unwrap();
            start.elapsed()
        })
        .collect();
    times.sort();
    times[trials / 2]
}

#[test]
fn c08_linear_scaling() {
    let _g = serial();
    let base = PlantedSpec::default();
    let doubled = PlantedSpec {
        n_nodes: 2 * base.n_nodes,
        n_queries: 2 * base.n_queries,
        background_per_step: 2 * base.background_per_step,
        ..base.clone()
    };
    let small = generate_planted_motif_dataset(&base).unwrap().train;
    let large = generate_planted_motif_dataset(&doubled).unwrap().train;
    let per_class = base.n_queries / 2;
    let (qs, ql) = (balanced(&small, per_class), balanced(&large, per_class));
    assert_eq!(qs.len(), ql.len());
    let edge_ratio = large.store.edges().len() as f64 / small.store.edges().len() as f64;
    let ts = median_epoch_time(small.store.clone(), qs, 5);
    let tl = median_epoch_time(large.store.clone(), ql, 5);
    let factor = tl.as_secs_f64() / ts.as_secs_f64();
    let ok = factor <= 2.5 && (1.9..=2.1).contains(&edge_ratio);
    report(
        8,
        "linear scaling",
        ok,
        &format!(
            "edges {} -> {} (x{edge_ratio:.2}), {} queries each, median epoch {:.1}ms -> {:.1}ms, factor {factor:.2} (<= 2.5)",
            small.store.edges().len(),
            large.store.edges().len(),
            2 * per_class,
            ts.as_secs_f64() * 1e3,
            tl.as_secs_f64() * 1e3
        ),
    );
    assert!(ok);
}

/// Breadth-first hop distances from both query endpoints over edges strictly
/// before the query time.
fn bfs_oracle(n: usize, edges: &[(NodeId, NodeId, Timestamp)], directed: bool, q: QueryLink, hops: u32) -> BTreeMap<NodeId, u32> {
    let mut adj = vec![Vec::new(); n];
    for &(a, b, t) in edges {
        if t < q.t_query {
            adj[a].push(b);
            if !directed {
                adj[b].push(a);
            }
        }
    }
    let mut dist = BTreeMap::new();
    let mut queue = VecDeque::new();
    for s in [q.u, q.v] {
        if !dist.contains_key(&s) {
            dist.insert(s, 0);
            queue.push_back(s);
        }
    }
    while let Some(x) = queue.pop_front() {
        let d = dist[&x];
        if d == hops {
            continue;
        }
        for &y in &adj[x] {
            if !dist.contains_key(&y) {
                dist.insert(y, d + 1);
                queue.push_back(y);
            }
        }
    }
    dist
}

#[test]
fn c09_subgraph_oracle_equivalence() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let graphs = 200;
    let (mut mismatches, mut total_edges) = (0, 0);
    for g in 0..graphs {
        let n = rng.random_range(2..=30);
        let n_times = rng.random_range(1..=6);
        let directed = g % 3 == 0;
        let mut raw = Vec::new();
        for _ in 0..rng.random_range(1..=3 * n) {
            let a = rng.random_range(0..n);
            let b = (a + rng.random_range(1..n)) % n;
            raw.push((a, b, rng.random_range(0..n_times)));
        }
        let mut builder = TemporalGraphStore::builder(n, GraphDims { d_s: 1, d_e: 1 }).config(LoadConfig {
            directed,
            allow_self_loops: false,
        });
        for &(a, b, t) in &raw {
            builder = builder.edge(a, b, t, vec![0.0]);
        }
        let store = builder.build().unwrap();
        let u = rng.random_range(0..n);
        let v = (u + rng.random_range(1..n)) % n;
        let q = QueryLink::new(u, v, rng.random_range(0..=n_times), 1);
        let hops = rng.random_range(1..=3);
        let sg = extract_computational_subgraph(&store, q, ExtractConfig { hops, cap: None, seed: g }).unwrap();

        let stored: Vec<(NodeId, NodeId, Timestamp)> = store.edges().iter().map(|e| (e.src, e.dst, e.t)).collect();
        let dist = bfs_oracle(n, &stored, directed, q, hops);
        let induced: BTreeSet<EdgeId> = stored
            .iter()
            .enumerate()
            .filter(|(_, &(a, b, t))| t < q.t_query && dist.contains_key(&a) && dist.contains_key(&b))
            .map(|(i, _)| i)
            .collect();
        total_edges += induced.len();
        let got: BTreeSet<EdgeId> = sg.edge_ids().collect();
        if sg.hop_of != dist || got != induced || sg.node_set != dist.keys().copied().collect() {
            mismatches += 1;
        }
    }
    let ok = mismatches == 0 && total_edges > 0;
    report(
        9,
        "subgraph oracle equivalence",
        ok,
        &format!("{graphs} graphs (<= 30 nodes), {total_edges} oracle edges, {mismatches} mismatches"),
    );
    assert!(ok);
}

const BIN: &str = env!("CARGO_BIN_EXE_oodlinker");

fn oodlinker(args: &[&str]) {
    let o = Command::new(BIN).args(args).output().expect("binary runs");
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn c10_determinism() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name);
    let s = |path: &Path| path.to_str().unwrap().to_string();
    std::fs::write(
        p("synth.toml"),
        "[shift]\nkind = \"planted-motif\"\nn_nodes = 60\nn_queries = 20\nmotif_repeats = 2\nbackground_per_step = 8\nseed = 4\n",
    )
    .unwrap();
    std::fs::write(
        p("run.toml"),
        format!(
            "data = {:?}\nseeds = [0, 1]\n[train]\nepochs = 5\nlearning_rate = 0.01\nbatch_size = 10\nbeta = 0.0001\nh_agg = 8\nh1 = 8\nh2 = 8\n",
            s(&p("data"))
        ),
    )
    .unwrap();
    oodlinker(&["synth", "-c", &s(&p("synth.toml")), "--out", &s(&p("data"))]);
    oodlinker(&["train", "-c", &s(&p("run.toml")), "--out", &s(&p("a"))]);
    oodlinker(&["train", "-c", &s(&p("run.toml")), "--out", &s(&p("b"))]);
    let files = ["metrics.csv", "summary.json", "train.log", "checkpoints/seed-1/best.json"];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(p("a").join(f)).unwrap() != std::fs::read(p("b").join(f)).unwrap())
        .collect();
    let ok = differing.is_empty();
    report(
        10,
        "determinism",
        ok,
        &format!("two `train` runs, {} files compared, differing: {differing:?}", files.len()),
    );
    assert!(ok);
}
