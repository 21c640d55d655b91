//! `qkz`: quench runs, data collapse, defect scaling, circuit emission,
//! oracle checks and canned figure reproductions.

mod commands;
mod config;
mod output;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use log::info;
use serde_json::json;

use qkz_core::mode_dynamics::Integrator;
use qkz_core::pipeline::FigureId;
use qkz_core::protocol::Variant;

use config::{parse_steps, EvolutionKind, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "qkz", version, about = "Kibble-Zurek quench dynamics of the transverse-field Ising chain")]
struct Cli {
    /// Increase log verbosity (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run quenches and write correlators, observables and plots.
    Quench(QuenchArgs),
    /// Grid-search scaling exponents over quench outputs.
    Collapse(CollapseArgs),
    /// Fit end-of-quench defect density and excess energy against tau_q.
    Observables(ObservablesArgs),
    /// Write OpenQASM 3 circuits for Trotterized quenches.
    EmitQasm(QasmArgs),
    /// Compare the mode pipeline against dense simulation.
    Oracle(QuenchArgs),
    /// Run canned figure recipes and print a pass/fail table.
    Reproduce(ReproduceArgs),
}

#[derive(Args, Debug, Default)]
struct Common {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output directory (relative paths honour QKZ_OUTPUT_ROOT).
    #[arg(long, short)]
    out: Option<PathBuf>,
}

impl Common {
    fn load(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::load_or_default(self.config.as_deref())?;
        if let Some(o) = &self.out {
            cfg.output.dir = Some(o.clone());
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct ProtocolArgs {
    /// Chain length (even).
    #[arg(long)]
    n: Option<usize>,
    /// Quench times, comma separated.
    #[arg(long, value_delimiter = ',')]
    tau_q: Vec<f64>,
    /// Dephasing rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, conflicts_with = "trotter")]
    continuous: bool,
    #[arg(long)]
    trotter: bool,
    #[arg(long)]
    dt: Option<f64>,
    /// Step counts: `10`, `8..32` (inclusive) or a comma list.
    #[arg(long)]
    steps: Option<String>,
    /// Sweep to `t = +tau_q` instead of stopping at the critical point.
    #[arg(long, conflicts_with = "qcp")]
    full: bool,
    #[arg(long)]
    qcp: bool,
}

impl ProtocolArgs {
    fn apply(&self, cfg: &mut RunConfig) -> Result<()> {
        let p = &mut cfg.protocol;
        if let Some(n) = self.n {
            cfg.mode_dynamics.n = n;
        }
        if !self.tau_q.is_empty() {
            p.tau_q = self.tau_q.clone();
        }
        if !self.lambda.is_empty() {
            cfg.mode_dynamics.lambda = self.lambda.clone();
        }
        if let Some(dt) = self.dt {
            p.dt = dt;
        }
        if let Some(s) = &self.steps {
            p.steps = parse_steps(s)?;
        }
        if self.trotter || (self.steps.is_some() && !self.continuous) {
            p.evolution = EvolutionKind::Trotter;
        }
        if self.continuous {
            p.evolution = EvolutionKind::Continuous;
        }
        if self.full {
            p.variant = Variant::FullQuench;
        }
        if self.qcp {
            p.variant = Variant::ToCriticalPoint;
        }
        Ok(())
    }
}

#[derive(Args, Debug)]
struct QuenchArgs {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    protocol: ProtocolArgs,
    /// Sample times per continuous run.
    #[arg(long)]
    samples: Option<usize>,
    /// Largest separation recorded (default N/2).
    #[arg(long)]
    x_max: Option<usize>,
    /// Also write per-mode Bloch vectors.
    #[arg(long)]
    trajectory: bool,
    /// auto, explicit or implicit.
    #[arg(long)]
    integrator: Option<String>,
    #[arg(long)]
    rtol: Option<f64>,
    #[arg(long)]
    atol: Option<f64>,
}

impl QuenchArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.load()?;
        self.protocol.apply(&mut cfg)?;
        if let Some(s) = self.samples {
            cfg.observables.samples = s;
        }
        if let Some(x) = self.x_max {
            cfg.observables.x_max = Some(x);
        }
        if self.trajectory {
            cfg.observables.trajectory = true;
        }
        if let Some(i) = &self.integrator {
            cfg.mode_dynamics.integrator = serde_json::from_value::<Integrator>(json!(i.to_ascii_lowercase()))
                .with_context(|| format!("unknown integrator {i:?}"))?;
        }
        if let Some(r) = self.rtol {
            cfg.mode_dynamics.rtol = r;
        }
        if let Some(a) = self.atol {
            cfg.mode_dynamics.atol = a;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct CollapseArgs {
    #[command(flatten)]
    common: Common,
    /// Correlator CSVs, or directories searched for correlators.csv.
    inputs: Vec<PathBuf>,
    /// Drop points with |C| below this.
    #[arg(long)]
    mask: Option<f64>,
    #[arg(long)]
    x_max: Option<usize>,
    /// Polynomial order of the collapse function.
    #[arg(long)]
    order: Option<usize>,
    #[arg(long)]
    a_min: Option<f64>,
    #[arg(long)]
    a_max: Option<f64>,
    #[arg(long)]
    b_min: Option<f64>,
    #[arg(long)]
    b_max: Option<f64>,
    #[arg(long)]
    spacing: Option<f64>,
}

impl CollapseArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = self.common.load()?;
        let c = &mut cfg.collapse;
        if !self.inputs.is_empty() {
            c.inputs = self.inputs.clone();
        }
        for (dst, src) in [
            (&mut c.mask, self.mask),
            (&mut c.a_min, self.a_min),
            (&mut c.a_max, self.a_max),
            (&mut c.b_min, self.b_min),
            (&mut c.b_max, self.b_max),
            (&mut c.spacing, self.spacing),
        ] {
            if let Some(v) = src {
                *dst = v;
            }
        }
        if self.x_max.is_some() {
            c.x_max = self.x_max;
        }
        if let Some(o) = self.order {
            c.order = o;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct ObservablesArgs {
    #[command(flatten)]
    common: Common,
    /// Observable CSVs, or directories searched for observables.csv.
    inputs: Vec<PathBuf>,
    /// Shot count for the error-floor reference line.
    #[arg(long)]
    shots: Option<u64>,
}

#[derive(Args, Debug)]
struct QasmArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    /// Step counts: `10`, `8..32` (inclusive) or a comma list.
    #[arg(long)]
    steps: Option<String>,
    #[arg(long, conflicts_with = "qcp")]
    full: bool,
    #[arg(long)]
    qcp: bool,
    /// z, x or both.
    #[arg(long, value_delimiter = ',')]
    basis: Vec<String>,
    /// Check each circuit against the dense oracle (N <= 14).
    #[arg(long)]
    verify: bool,
}

#[derive(Args, Debug)]
struct ReproduceArgs {
    #[command(flatten)]
    common: Common,
    /// Figure ids, or `all`.
    figures: Vec<String>,
    /// List figure ids and exit.
    #[arg(long)]
    list: bool,
    /// Exit nonzero when an asserted target is missed.
    #[arg(long)]
    strict: bool,
}

/// Exit status for a run whose targets were not all met under `--strict`.
const EXIT_TARGET_MISSED: u8 = 3;

fn run(cli: Cli) -> Result<ExitCode> {
    let args = json!(std::env::args().skip(1).collect::<Vec<_>>());
    let dir = match cli.cmd {
        Command::Quench(a) => {
            let cfg = a.config()?;
            info!("{}", commands::describe(&cfg));
            commands::quench(&cfg, args)?
        }
        Command::Oracle(a) => {
            let cfg = a.config()?;
            info!("{}", commands::describe(&cfg));
            commands::oracle(&cfg, args)?
        }
        Command::Collapse(a) => commands::collapse(&a.config()?, args)?,
        Command::Observables(a) => {
            let mut cfg = a.common.load()?;
            if !a.inputs.is_empty() {
                cfg.observables.inputs = a.inputs.clone();
            }
            if a.shots.is_some() {
                cfg.observables.shots = a.shots;
            }
            commands::observables(&cfg, args)?
        }
        Command::EmitQasm(a) => {
            let mut cfg = a.common.load()?;
            if let Some(n) = a.n {
                cfg.mode_dynamics.n = n;
            }
            if let Some(dt) = a.dt {
                cfg.protocol.dt = dt;
            }
            if let Some(s) = &a.steps {
                cfg.protocol.steps = parse_steps(s)?;
            }
            if a.full {
                cfg.protocol.variant = Variant::FullQuench;
            }
            if a.qcp {
                cfg.protocol.variant = Variant::ToCriticalPoint;
            }
            if !a.basis.is_empty() {
                cfg.circuit.basis = a.basis.clone();
            }
            if a.verify {
                cfg.circuit.verify = true;
            }
            cfg.protocol.evolution = EvolutionKind::Trotter;
            commands::emit_qasm(&cfg, args)?
        }
        Command::Reproduce(a) => {
            if a.list {
                for f in FigureId::ALL {
                    println!("{}", f.name());
                }
                return Ok(ExitCode::SUCCESS);
            }
            let figs: Vec<FigureId> = if a.figures.iter().any(|f| f == "all") {
                FigureId::ALL.to_vec()
            } else {
                anyhow::ensure!(!a.figures.is_empty(), "no figure ids given (try --list)");
                a.figures.iter().map(|f| FigureId::parse(f)).collect::<qkz_core::Result<_>>()?
            };
            let (dir, ok) = commands::reproduce(&a.common.load()?, &figs, args)?;
            println!("outputs in {}", dir.display());
            return Ok(if ok || !a.strict { ExitCode::SUCCESS } else { ExitCode::from(EXIT_TARGET_MISSED) });
        }
    };
    println!("outputs in {}", dir.display());
    Ok(ExitCode::SUCCESS)
}

fn error_kind(e: &anyhow::Error) -> &'static str {
    use qkz_core::Error as E;
    for cause in e.chain() {
        if let Some(c) = cause.downcast_ref::<E>() {
            return match c {
                E::Domain(_) => "domain",
                E::Integration { .. } => "integration",
                E::Unsupported(_) => "unsupported",
                E::Consistency(_) => "consistency",
                E::Resource(_) => "resource",
                E::Parse { .. } => "parse",
                E::Io(_) => "io",
                E::Csv(_) => "csv",
                E::Json(_) => "json",
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return "io";
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return "config";
        }
    }
    "error"
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let msg = e.render().to_string();
            eprintln!("{}", json!({ "error": { "kind": "usage", "message": msg.trim() } }));
            return ExitCode::from(2);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!(
                "{}",
                json!({ "error": { "kind": error_kind(&e), "message": chain.join(": "), "chain": chain } })
            );
            ExitCode::FAILURE
        }
    }
}
