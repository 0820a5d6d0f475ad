//! `qvdp`: steady states, Wigner functions, classical and noisy runs, and
//! parameter sweeps for coupled van der Pol oscillators.

mod commands;
mod config;
mod error;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::{json, Map, Value};

use crate::commands::{dispatch, dry_run, Sink};
use crate::config::{Command, Format, Model, RunConfig};
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "qvdp", version, about, max_term_width = 100)]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// JSON config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,

    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    k1: Option<f64>,
    #[arg(long)]
    k2: Option<f64>,
    #[arg(long, conflicts_with = "eps_over_k1")]
    eps: Option<f64>,
    /// Coupling as a multiple of k1.
    #[arg(long)]
    eps_over_k1: Option<f64>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,

    /// Fock levels per site.
    #[arg(long)]
    cutoff: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    n_realizations: Option<usize>,
    /// Worker thread bound (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// State used by `wigner` and `delta-x`.
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Comma-separated gamma samples for `compare` and `bifurcation`.
    #[arg(long, value_delimiter = ',')]
    gammas: Option<Vec<f64>>,

    /// Output file; data goes to standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,

    /// `sweep2d` only: print the resolved grid and point count, write nothing.
    #[arg(long)]
    dry_run: bool,
}

impl Cli {
    /// Flag values as a config patch.
    fn patch(&self) -> Value {
        let mut params = Map::new();
        let put = |m: &mut Map<String, Value>, k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put(&mut params, "omega", self.omega.map(Value::from));
        put(&mut params, "k1", self.k1.map(Value::from));
        put(&mut params, "k2", self.k2.map(Value::from));
        put(&mut params, "eps", self.eps.map(Value::from));
        put(&mut params, "q", self.q.map(Value::from));
        put(&mut params, "gamma", self.gamma.map(Value::from));
        let mut numerics = Map::new();
        put(&mut numerics, "cutoff", self.cutoff.map(Value::from));
        put(&mut numerics, "seed", self.seed.map(Value::from));
        put(&mut numerics, "dt", self.dt.map(Value::from));
        put(&mut numerics, "t_final", self.t_final.map(Value::from));
        put(&mut numerics, "n_realizations", self.n_realizations.map(Value::from));
        put(&mut numerics, "threads", self.threads.map(Value::from));
        put(&mut numerics, "model", self.model.map(|m| json!(m)));
        put(&mut numerics, "gammas", self.gammas.clone().map(Value::from));
        let mut output = Map::new();
        put(&mut output, "path", self.output.as_ref().map(|p| json!(p)));
        put(&mut output, "format", self.format.map(|f| json!(f)));
        json!({ "params": params, "numerics": numerics, "output": output })
    }
}

fn read_config(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io { path: path.display().to_string(), source: e })?;
    if text.trim().is_empty() {
        return Ok(json!({}));
    }
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn same_file(a: &Path, b: &Path) -> bool {
    match (a.canonicalize(), b.canonicalize()) {
        (Ok(x), Ok(y)) => x == y,
        _ => false,
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(read_config).transpose()?;
    let mut cfg = RunConfig::resolve(cli.command, file, cli.patch())?;
    if let Some(r) = cli.eps_over_k1 {
        cfg.params = cfg.params.with_eps_over_k1(r);
        cfg.params.validate().map_err(|e| CliError::Usage(format!("params: {e}")))?;
    }
    if let Some(input) = &cli.config {
        if Sink::new(&cfg).targets().iter().any(|t| same_file(t, input)) {
            return Err(CliError::Usage(format!(
                "output would overwrite the config file {}; pass a different --output",
                input.display()
            )));
        }
    }
    if cfg.numerics.threads > 0 {
        // Only fails if a global pool already exists, which keeps its size.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.numerics.threads).build_global();
    }
    if cli.dry_run {
        if cfg.command != Command::Sweep2d {
            return Err(CliError::Usage("--dry-run is only available for sweep2d".into()));
        }
        let plan = dry_run(&cfg)?;
        println!("{}", serde_json::to_string_pretty(&json!({ "provenance": cfg, "plan": plan })).expect("json"));
        return Ok(());
    }
    eprintln!("[{}] seed {}", cfg.command.name(), cfg.seed());
    dispatch(&cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
