mod commands;
mod config;
mod error;
mod sources;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use oodlinker::eval::Split;

use crate::config::{default_out, load_toml, run_name, RunConfig, SynthConfig};
use crate::error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "oodlinker", version, about = "Invariant link selection for temporal link prediction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one model per seed and write checkpoints and metrics.
    Train(RunArgs),
    /// Score a checkpoint on dataset splits.
    Eval(EvalArgs),
    /// Write a shifted or planted dataset.
    Synth(SynthArgs),
    /// Compare the selector against the all-links variant.
    Ablate(RunArgs),
    /// Finite-difference check of the training objective on toy graphs.
    Gradcheck(GradcheckArgs),
}

/// Flags that override values from the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// Dataset directory written by `synth`.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output directory [default: $OODLINKER_OUT/<config name>].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seeds to run, comma separated.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    hops: Option<u32>,
    /// Neighbor cap; 0 keeps every neighbor.
    #[arg(long)]
    cap: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Timestamp counts for train, validation and test windows.
    #[arg(long, value_parser = parse_windows)]
    windows: Option<[usize; 3]>,
}

impl Overrides {
    fn apply(&self, cfg: &mut RunConfig) {
        if self.data.is_some() {
            cfg.data.clone_from(&self.data);
        }
        if self.out.is_some() {
            cfg.out.clone_from(&self.out);
        }
        if !self.seed.is_empty() {
            cfg.seeds.clone_from(&self.seed);
        }
        if self.windows.is_some() {
            cfg.windows = self.windows;
        }
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.learning_rate = self.lr.unwrap_or(t.learning_rate);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.beta = self.beta.unwrap_or(t.beta);
        t.tau = self.tau.unwrap_or(t.tau);
        t.hops = self.hops.unwrap_or(t.hops);
        t.cap = self.cap.unwrap_or(t.cap);
        t.patience = self.patience.unwrap_or(t.patience);
        t.workers = self.workers.unwrap_or(t.workers);
    }
}

#[derive(Args, Debug)]
struct RunArgs {
    /// TOML run config.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    over: Overrides,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// TOML run config supplying the dataset.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Splits to score.
    #[arg(long, value_delimiter = ',', default_value = "test-in,test-ood", value_parser = parse_split)]
    splits: Vec<Split>,
    #[command(flatten)]
    over: Overrides,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// TOML shift config; planted defaults when omitted.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the shift seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 20)]
    graphs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1e-5)]
    step: f64,
    #[arg(long, default_value_t = 1e-4)]
    tolerance: f64,
}

fn parse_split(s: &str) -> Result<Split, String> {
    [Split::Train, Split::Val, Split::TestIn, Split::TestOod]
        .into_iter()
        .find(|sp| sp.as_str() == s)
        .ok_or_else(|| format!("unknown split {s:?} (train, val, test-in, test-ood)"))
}

fn parse_windows(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| format!("invalid count {p:?}")))
        .collect::<Result<_, _>>()?;
    parts
        .try_into()
        .map_err(|v: Vec<usize>| format!("expected three counts, got {}", v.len()))
}

fn run_config(config: Option<&Path>, over: &Overrides, command: &str) -> CliResult<(RunConfig, PathBuf)> {
    let mut cfg: RunConfig = match config {
        Some(p) => load_toml(p)?,
        None => RunConfig::default(),
    };
    over.apply(&mut cfg);
    let out = cfg
        .out
        .clone()
        .unwrap_or_else(|| default_out(&run_name(config, command)));
    cfg.out = Some(out.clone());
    Ok((cfg, out))
}

fn with_shift_seed(cfg: &mut SynthConfig, seed: u64) {
    use oodlinker::data::ShiftSpec;
    match &mut cfg.shift {
        ShiftSpec::NodeFeature { seed: s, .. } => *s = seed,
        ShiftSpec::PlantedMotif(spec) => spec.seed = seed,
        ShiftSpec::EdgeAttribute { .. } => {}
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train(a) => {
            let (cfg, out) = run_config(a.config.as_deref(), &a.over, "train")?;
            commands::train(&cfg, &out)
        }
        Command::Ablate(a) => {
            let (cfg, out) = run_config(a.config.as_deref(), &a.over, "ablate")?;
            commands::ablate(&cfg, &out)
        }
        Command::Eval(a) => {
            let (cfg, out) = run_config(a.config.as_deref(), &a.over, "eval")?;
            commands::eval(&a.checkpoint, &cfg, &a.splits, &out).map(|_| ())
        }
        Command::Synth(a) => {
            let mut cfg: SynthConfig = match &a.config {
                Some(p) => load_toml(p)?,
                None => SynthConfig::default(),
            };
            if let Some(seed) = a.seed {
                with_shift_seed(&mut cfg, seed);
            }
            if a.out.is_some() {
                cfg.out = a.out;
            }
            let out = cfg
                .out
                .clone()
                .unwrap_or_else(|| default_out(&run_name(a.config.as_deref(), "data")));
            cfg.out = Some(out.clone());
            commands::synth(&cfg, &out)
        }
        Command::Gradcheck(a) => commands::gradcheck(a.graphs, a.seed, a.step, a.tolerance).map(|_| ()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;

    #[test]
    fn cli_shape_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_file_values() {
        let cli = Cli::try_parse_from([
            "oodlinker", "train", "--data", "d", "--seed", "3,4", "--epochs", "7", "--lr", "0.01", "--windows", "4,1,1",
        ])
        .unwrap();
        let Command::Train(a) = cli.command else { panic!() };
        let mut cfg: RunConfig = toml::from_str("data = \"x\"\nout = \"o\"\n[train]\nepochs = 2\nbeta = 0.5\n").unwrap();
        a.over.apply(&mut cfg);
        assert_eq!(cfg.data, Some(PathBuf::from("d")));
        assert_eq!(cfg.out, Some(PathBuf::from("o")));
        assert_eq!(cfg.seeds, vec![3, 4]);
        assert_eq!(cfg.windows, Some([4, 1, 1]));
        assert_eq!((cfg.train.epochs, cfg.train.learning_rate, cfg.train.beta), (7, 0.01, 0.5));
    }

    #[test]
    fn splits_parse() {
        assert_eq!(parse_split("test-ood"), Ok(Split::TestOod));
        assert!(parse_split("ood").is_err());
    }

    #[test]
    fn error_lines_are_single_line_json() {
        let e = CliError::Input("missing /x\nmore".into());
        let line = e.to_json_line();
        assert!(!line.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&line).unwrap();
        assert_eq!(v["code"], 2);
        assert_eq!(v["error"], "input");
        assert_eq!(CliError::Checkpoint(String::new()).code(), 3);
        assert_eq!(CliError::Internal(String::new()).code(), 1);
    }
}
