use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use dgvisc_core::experiments::{
    self, config, CompareConfig, ConvergenceConfig, ExperimentError, MeshGenConfig, ModelSpec, SolveConfig, TrainRunConfig,
};

/// Discontinuous Galerkin solver with entropy and neural artificial viscosity.
#[derive(Parser, Debug)]
#[command(name = "dgvisc", version)]
struct Cli {
    /// TOML config for the subcommand; command-line flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed for network initialisation and minibatch shuffling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads; all cores when absent.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one test case and write fields, metrics and a summary.
    Solve(SolveArgs),
    /// L2 errors and rates under mesh refinement.
    Convergence(ConvergenceArgs),
    /// Train a neural viscosity model.
    Train,
    /// Run several viscosity models on the same discretization.
    Compare(CompareArgs),
    /// Write a structured mesh file.
    MeshGen(MeshGenArgs),
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[arg(long)]
    case: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// none, ev, ev:<c_k>:<c_max>, nn:<checkpoint>[:<c_max>]
    #[arg(long)]
    model: Option<ModelSpec>,
    #[arg(long)]
    reference_levels: Option<usize>,
    #[arg(long)]
    fixed_dt: bool,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    #[arg(long)]
    case: Option<u32>,
    /// Polynomial degrees, e.g. `--k 1,2,3`.
    #[arg(long, value_delimiter = ',')]
    k: Vec<usize>,
    /// Number of meshes, each halving h.
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    n0: Option<usize>,
    #[arg(long)]
    model: Option<ModelSpec>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    #[arg(long)]
    case: Option<u32>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    cfl: Option<f64>,
    #[arg(long)]
    t_final: Option<f64>,
    #[arg(long)]
    mesh: Option<PathBuf>,
    /// Repeat for each model to compare.
    #[arg(long = "model")]
    models: Vec<ModelSpec>,
    #[arg(long)]
    reference_levels: Option<usize>,
}

#[derive(Args, Debug)]
struct MeshGenArgs {
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long, num_args = 1..=2, value_delimiter = ',')]
    lo: Vec<f64>,
    #[arg(long, num_args = 1..=2, value_delimiter = ',')]
    hi: Vec<f64>,
    /// Walls instead of periodic boundaries.
    #[arg(long)]
    no_periodic: bool,
    #[arg(long)]
    refine: Option<usize>,
    /// Mesh file name inside the output directory.
    #[arg(long, default_value = "mesh.txt")]
    file: String,
}

fn usage(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Config(msg.into())
}

fn load_or<T: serde::de::DeserializeOwned>(path: Option<&Path>, fallback: &str) -> Result<T, ExperimentError> {
    match path {
        Some(p) => config::load(p),
        None => config::parse(fallback),
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}

fn set_opt<T>(slot: &mut Option<T>, v: Option<T>) {
    if v.is_some() {
        *slot = v;
    }
}

fn print_json<T: Serialize>(v: &T) {
    match serde_json::to_string_pretty(v) {
        Ok(s) => println!("{s}"),
        Err(e) => log::warn!("could not print summary: {e}"),
    }
}

fn solve(cli: &Cli, a: &SolveArgs) -> Result<(), ExperimentError> {
    let fallback = match a.case {
        Some(c) => format!("case = {c}"),
        None if cli.config.is_none() => return Err(usage("solve needs --case or --config")),
        None => String::new(),
    };
    let mut cfg: SolveConfig = load_or(cli.config.as_deref(), &fallback)?;
    set(&mut cfg.case, a.case);
    set(&mut cfg.k, a.k);
    set_opt(&mut cfg.n, a.n);
    set_opt(&mut cfg.cfl, a.cfl);
    set_opt(&mut cfg.t_final, a.t_final);
    set_opt(&mut cfg.mesh, a.mesh.clone());
    set(&mut cfg.model, a.model.clone());
    set(&mut cfg.reference_levels, a.reference_levels);
    cfg.fixed_dt |= a.fixed_dt;
    let summary = experiments::solve(&cfg, &cli.out)?;
    print_json(&summary);
    Ok(())
}

fn convergence(cli: &Cli, a: &ConvergenceArgs) -> Result<(), ExperimentError> {
    let mut cfg: ConvergenceConfig = load_or(cli.config.as_deref(), "")?;
    set(&mut cfg.case, a.case);
    if !a.k.is_empty() {
        cfg.ks = a.k.clone();
    }
    set(&mut cfg.levels, a.levels);
    set(&mut cfg.n0, a.n0);
    set(&mut cfg.model, a.model.clone());
    let table = experiments::convergence(&cfg, Some(&cli.out))?;
    println!("{:>3} {:>6} {:>12} {:>14} {:>8}", "k", "n", "h", "L2 error", "rate");
    for r in &table.rows {
        let rate = r.rate.map_or("-".to_string(), |v| format!("{v:.3}"));
        println!("{:>3} {:>6} {:>12.5e} {:>14.6e} {:>8}", r.k, r.n, r.h, r.error, rate);
    }
    for (k, s) in &table.slopes {
        match s {
            Some(s) => println!("k = {k}: least-squares slope {s:.3}"),
            None => println!("k = {k}: slope undefined (single refinement)"),
        }
    }
    Ok(())
}

fn train(cli: &Cli) -> Result<(), ExperimentError> {
    let path = cli.config.as_deref().ok_or_else(|| usage("train needs --config <training config>"))?;
    let mut cfg: TrainRunConfig = config::load(path)?;
    if let Some(s) = cli.seed {
        cfg.net_seed = s;
        cfg.train.seed = s;
    }
    let summary = experiments::train_run(&cfg, &cli.out)?;
    print_json(&summary);
    Ok(())
}

fn compare(cli: &Cli, a: &CompareArgs) -> Result<(), ExperimentError> {
    let fallback = match a.case {
        Some(c) => format!("case = {c}\nmodels = []"),
        None if cli.config.is_none() => return Err(usage("compare needs --case or --config")),
        None => String::new(),
    };
    let mut cfg: CompareConfig = load_or(cli.config.as_deref(), &fallback)?;
    set(&mut cfg.case, a.case);
    set(&mut cfg.k, a.k);
    set_opt(&mut cfg.n, a.n);
    set_opt(&mut cfg.cfl, a.cfl);
    set_opt(&mut cfg.t_final, a.t_final);
    set_opt(&mut cfg.mesh, a.mesh.clone());
    if !a.models.is_empty() {
        cfg.models = a.models.clone();
    }
    set(&mut cfg.reference_levels, a.reference_levels);
    let summary = experiments::compare(&cfg, &cli.out)?;
    let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.5e}"));
    println!(
        "{:<24} {:<8} {:>12} {:>12} {:>12} {:>12} {:>12}",
        "model", "status", "eps", "grad eps", "jump eps", "o/u", "mv"
    );
    for r in &summary.rows {
        println!(
            "{:<24} {:<8} {:>12} {:>12} {:>12} {:>12} {:>12.5e}",
            r.model,
            r.status,
            fmt(r.eps),
            fmt(r.grad_eps),
            fmt(r.jump_eps),
            fmt(r.ou),
            r.mv
        );
    }
    for (metric, model) in &summary.winners {
        println!("best {metric}: {model}");
    }
    Ok(())
}

fn mesh_gen(cli: &Cli, a: &MeshGenArgs) -> Result<(), ExperimentError> {
    let mut cfg: MeshGenConfig = match &cli.config {
        Some(p) => config::load(p)?,
        None => MeshGenConfig::default(),
    };
    set(&mut cfg.dim, a.dim);
    set(&mut cfg.n, a.n);
    set_opt(&mut cfg.ny, a.ny);
    for (slot, v) in [(&mut cfg.lo, &a.lo), (&mut cfg.hi, &a.hi)] {
        match v.as_slice() {
            [] => {}
            [x] => slot[0] = *x,
            [x, y] => *slot = [*x, *y],
            _ => unreachable!("clap limits the count"),
        }
    }
    cfg.periodic &= !a.no_periodic;
    set(&mut cfg.refine, a.refine);
    let path = cli.out.join(&a.file);
    let cells = experiments::mesh_gen(&cfg, &path)?;
    println!("wrote {} ({cells} cells)", path.display());
    Ok(())
}

fn run(cli: &Cli) -> Result<(), ExperimentError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(format!("--threads: {e}")))?;
    }
    match &cli.command {
        Command::Solve(a) => solve(cli, a),
        Command::Convergence(a) => convergence(cli, a),
        Command::Train => train(cli),
        Command::Compare(a) => compare(cli, a),
        Command::MeshGen(a) => mesh_gen(cli, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
