use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_oodlinker");

const TOY_SYNTH: &str = r#"
[shift]
kind = "planted-motif"
n_nodes = 60
n_queries = 20
motif_repeats = 2
background_per_step = 8
seed = 1
"#;

fn toy_run(data: &Path, epochs: usize) -> String {
    format!(
        "data = {:?}\n[train]\nepochs = {epochs}\nlearning_rate = 0.01\nbatch_size = 10\nbeta = 0.0001\n\
         h_agg = 8\nh1 = 8\nh2 = 8\npatience = {epochs}\n",
        data.display().to_string()
    )
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("OODLINKER_OUT")
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Toy {
    dir: tempfile::TempDir,
}

impl Toy {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("synth.toml"), TOY_SYNTH).unwrap();
        let data = dir.path().join("data");
        let o = run(&["synth", "-c", s(&dir.path().join("synth.toml")), "--out", s(&data)]);
        assert!(o.status.success(), "{}", stderr(&o));
        Toy { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, epochs: usize) -> PathBuf {
        let p = self.path(&format!("run-{epochs}.toml"));
        std::fs::write(&p, toy_run(&self.path("data"), epochs)).unwrap();
        p
    }
}

#[test]
fn train_writes_checkpoints_metrics_and_snapshot() {
    let toy = Toy::new();
    let out = toy.path("run");
    let o = run(&["train", "-c", s(&toy.config(4)), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["metrics.csv", "summary.json", "train.log", "config.resolved.toml", "checkpoints/seed-0/best.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    assert!(std::fs::read_dir(out.join("checkpoints/seed-0")).unwrap().count() >= 2);
    let log = std::fs::read_to_string(out.join("train.log")).unwrap();
    assert!(log.lines().any(|l| l.split_whitespace().next() == Some("4")), "{log}");
    let metrics = std::fs::read_to_string(out.join("metrics.csv")).unwrap();
    assert!(metrics.contains(",test-in,") && metrics.contains(",test-ood,"));
    let snap = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(snap.contains("epochs = 4"), "{snap}");
}

#[test]
fn flags_win_over_the_config_file() {
    let toy = Toy::new();
    let out = toy.path("run");
    let o = run(&["train", "-c", s(&toy.config(4)), "--out", s(&out), "--epochs", "2", "--seed", "5"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let snap = std::fs::read_to_string(out.join("config.resolved.toml")).unwrap();
    assert!(snap.contains("epochs = 2") && snap.contains("seeds = [5]"), "{snap}");
    assert!(out.join("checkpoints/seed-5/best.json").exists());
}

#[test]
fn output_root_comes_from_the_environment() {
    let toy = Toy::new();
    let root = toy.path("root");
    let o = Command::new(BIN)
        .args(["train", "-c", s(&toy.config(1))])
        .env("OODLINKER_OUT", &root)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(root.join("run-1/metrics.csv").exists());
}

#[test]
fn missing_data_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = run(&["train", "--data", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert_eq!(err.lines().count(), 1, "{err}");
    let v: serde_json::Value = serde_json::from_str(err.trim()).unwrap();
    assert_eq!(v["code"], 2);
    assert!(v["message"].as_str().unwrap().contains("nowhere"), "{err}");
}

#[test]
fn bad_config_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[train]\nbatch_size = 0\n").unwrap();
    let o = run(&["train", "-c", s(&cfg), "--data", "x"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    std::fs::write(&cfg, "[train]\nunknown_knob = 1\n").unwrap();
    assert_eq!(run(&["train", "-c", s(&cfg)]).status.code(), Some(2));
}

#[test]
fn eval_scores_a_converged_model_and_is_repeatable() {
    let toy = Toy::new();
    let cfg = toy.config(40);
    let o = run(&["train", "-c", s(&cfg), "--out", s(&toy.path("run"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = toy.path("run/checkpoints/seed-0/best.json");
    let eval = |out: &str| {
        let o = run(&["eval", "--checkpoint", s(&ckpt), "-c", s(&cfg), "--out", s(&toy.path(out)), "--splits", "train,test-ood"]);
        assert!(o.status.success(), "{}", stderr(&o));
        std::fs::read_to_string(toy.path(out).join("eval-metrics.csv")).unwrap()
    };
    let a = eval("e1");
    assert_eq!(a, eval("e2"));
    let train_row = a.lines().find(|l| l.contains(",train,")).unwrap();
    let auc: f64 = train_row.split(',').nth(3).unwrap().parse().unwrap();
    assert!(auc > 0.9, "{train_row}");
}

#[test]
fn corrupted_or_mismatched_checkpoints_exit_three() {
    let toy = Toy::new();
    let cfg = toy.config(1);
    assert!(run(&["train", "-c", s(&cfg), "--out", s(&toy.path("run"))]).status.success());
    let ckpt = toy.path("run/checkpoints/seed-0/best.json");

    let bad = toy.path("bad.json");
    let text = std::fs::read_to_string(&ckpt).unwrap();
    std::fs::write(&bad, &text[..text.len() / 2]).unwrap();
    let o = run(&["eval", "--checkpoint", s(&bad), "-c", s(&cfg), "--out", s(&toy.path("e"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    let o = run(&["eval", "--checkpoint", s(&toy.path("absent.json")), "-c", s(&cfg), "--out", s(&toy.path("e"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));

    let other = toy.path("other.toml");
    std::fs::write(&other, TOY_SYNTH.replace("seed = 1", "seed = 1\nd_s = 2")).unwrap();
    assert!(run(&["synth", "-c", s(&other), "--out", s(&toy.path("other"))]).status.success());
    let o = run(&["eval", "--checkpoint", s(&ckpt), "--data", s(&toy.path("other")), "--out", s(&toy.path("e"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn ablate_writes_two_curves_and_repeats() {
    let toy = Toy::new();
    let cfg = toy.config(6);
    let go = |out: &str| {
        let o = run(&["ablate", "-c", s(&cfg), "--out", s(&toy.path(out))]);
        assert!(o.status.success(), "{}", stderr(&o));
        let inv = std::fs::read_to_string(toy.path(out).join("curves-seed0-invariant.csv")).unwrap();
        let all = std::fs::read_to_string(toy.path(out).join("curves-seed0-all-links.csv")).unwrap();
        (inv, all)
    };
    let (inv, all) = go("a1");
    assert_eq!(inv.lines().count(), 7);
    assert!(all.lines().skip(1).all(|l| l.split(',').nth(2) == Some("0")), "{all}");
    assert_eq!((inv, all), go("a2"));
    assert!(toy.path("a1/ablation.json").exists());
}

fn write_source(dir: &Path) -> (PathBuf, PathBuf) {
    let mut edges = String::new();
    let mut nodes = String::new();
    for t in 0..6 {
        for a in 0..12usize {
            let b = (a + 1 + t % 3) % 12;
            let attr = if a % 4 == 0 { "DM" } else { "ML" };
            edges.push_str(&format!("{a} {b} {} 1.0 {attr}\n", 2000 + t));
        }
    }
    for a in 0..12 {
        nodes.push_str(&format!("{a} {} {}\n", a as f64 * 0.1, 1.0));
    }
    let (e, n) = (dir.join("edges.txt"), dir.join("nodes.txt"));
    std::fs::write(&e, edges).unwrap();
    std::fs::write(&n, nodes).unwrap();
    (e, n)
}

#[test]
fn synth_shifts_leave_inputs_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let (e, n) = write_source(dir.path());
    let before = (std::fs::read(&e).unwrap(), std::fs::read(&n).unwrap());
    let source = format!(
        "[source]\nedges = {:?}\nnodes = {:?}\ndims = {{ d_s = 2, d_e = 1 }}\n",
        s(&e),
        s(&n)
    );

    let node_cfg = dir.path().join("node.toml");
    std::fs::write(
        &node_cfg,
        format!("[shift]\nkind = \"node-feature\"\np_bar = 0.4\nsigma = 0.0\nd = 3\nseed = 2\n{source}"),
    )
    .unwrap();
    let o = run(&["synth", "-c", s(&node_cfg), "--out", s(&dir.path().join("node"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("node/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["shift"]["sigma"], 0.0);
    assert_eq!(manifest["parts"][0]["dims"]["d_s"], 3);

    let edge_cfg = dir.path().join("edge.toml");
    std::fs::write(&edge_cfg, format!("[shift]\nkind = \"edge-attribute\"\nheld_out_attr = \"DM\"\n{source}")).unwrap();
    let o = run(&["synth", "-c", s(&edge_cfg), "--out", s(&dir.path().join("edge"))]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(dir.path().join("edge/ood/node_map.txt").exists());

    let train = run(&[
        "train",
        "--data",
        s(&dir.path().join("edge")),
        "--out",
        s(&dir.path().join("edge-run")),
        "--epochs",
        "1",
        "--windows",
        "4,1,1",
    ]);
    assert!(train.status.success(), "{}", stderr(&train));

    std::fs::write(&edge_cfg, format!("[shift]\nkind = \"edge-attribute\"\nheld_out_attr = \"XX\"\n{source}")).unwrap();
    let o = run(&["synth", "-c", s(&edge_cfg), "--out", s(&dir.path().join("edge2"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));

    assert_eq!(before, (std::fs::read(&e).unwrap(), std::fs::read(&n).unwrap()));
}

#[test]
fn gradcheck_reports_the_worst_error() {
    let o = run(&["gradcheck", "--graphs", "3"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.lines().last().unwrap().starts_with("max relative error"), "{out}");
}
