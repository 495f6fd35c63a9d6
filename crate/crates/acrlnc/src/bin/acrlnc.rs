//! Experiment runner: simulate one cell or a whole sweep, evaluate the
//! closed-form bounds, and join the two into factor reports.

use acrlnc::config::{ExperimentConfig, ProtocolChoice};
use acrlnc::report::{
    compare, output_paths, run_bounds, run_experiment, write_csv, write_jsonl,
};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "acrlnc", about = "Coded multipath/multi-hop experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the config's base seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long)]
    parallel: Option<usize>,
    /// Override the config's protocol
    #[arg(long)]
    protocol: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the first sweep cell only
    Simulate(CommonArgs),
    /// Run the full sweep grid
    Sweep(CommonArgs),
    /// Evaluate the closed-form bounds of the config's [bounds] section
    Bounds {
        #[command(flatten)]
        common: CommonArgs,
        /// Fraction of slots without feedback (overrides the config)
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Join a simulation summary with a bounds table by sweep cell
    Compare {
        /// Summary JSON-lines produced by simulate/sweep
        #[arg(long)]
        sim: PathBuf,
        /// Bounds CSV produced by the bounds subcommand
        #[arg(long)]
        bounds: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_config(args: &CommonArgs) -> Result<ExperimentConfig, String> {
    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| format!("cannot read {}: {e}", args.config.display()))?;
    let mut cfg = ExperimentConfig::from_toml(&text).map_err(|e| e.to_string())?;
    if let Some(seed) = args.seed {
        cfg.base_seed = seed;
    }
    Ok(cfg)
}

fn protocol_override(args: &CommonArgs) -> Result<Option<ProtocolChoice>, String> {
    match &args.protocol {
        None => Ok(None),
        Some(name) => ProtocolChoice::parse(name)
            .map(Some)
            .ok_or_else(|| format!("unknown protocol '{name}'")),
    }
}

fn install_pool(parallel: Option<usize>) -> Result<(), String> {
    if let Some(n) = parallel {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    Ok(())
}

fn simulate(args: &CommonArgs, whole_sweep: bool) -> Result<(), String> {
    install_pool(args.parallel)?;
    let mut cfg = load_config(args)?;
    if !whole_sweep && !cfg.sweep.is_empty() {
        for group in cfg.sweep.iter_mut() {
            group.values.truncate(1);
        }
    }
    let over = protocol_override(args)?;
    let out = run_experiment(&cfg, over).map_err(|e| e.to_string())?;
    let paths = output_paths(&args.out, &cfg.name);
    write_csv(&paths.results, &out.rows).map_err(|e| e.to_string())?;
    write_jsonl(&paths.summary, &out.summaries).map_err(|e| e.to_string())?;
    for s in &out.summaries {
        println!(
            "cell {} (sweep {:?}/{:?}): throughput {:.3} +/- {:.3}, mean delay {:.1}, max delay {:.0}",
            s.cell, s.sweep_a, s.sweep_b, s.throughput_mean, s.throughput_std,
            s.mean_delay_mean, s.max_delay_mean
        );
    }
    println!("wrote {}", paths.results.display());
    println!("wrote {}", paths.summary.display());
    Ok(())
}

fn bounds(common: &CommonArgs, lambda: Option<f64>) -> Result<(), String> {
    let cfg = load_config(common)?;
    let rows = run_bounds(&cfg, lambda).map_err(|e| e.to_string())?;
    let paths = output_paths(&common.out, &cfg.name);
    write_csv(&paths.bounds, &rows).map_err(|e| e.to_string())?;
    for r in &rows {
        println!(
            "cell {} (x = {:.2}): capacity {:.3}, ub {:.3}, lb {:.3}, mean delay ub {:.1}, max delay ub {}",
            r.cell, r.sweep_value, r.capacity, r.throughput_ub,
            r.throughput_lb, r.mean_delay_ub, r.max_delay_ub
        );
    }
    println!("wrote {}", paths.bounds.display());
    Ok(())
}

fn compare_files(sim: &PathBuf, bounds_path: &PathBuf, out: &PathBuf) -> Result<(), String> {
    let text = std::fs::read_to_string(sim).map_err(|e| format!("{}: {e}", sim.display()))?;
    let summaries: Vec<acrlnc::report::SummaryRow> = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect::<Result<_, _>>()
        .map_err(|e| format!("parse {}: {e}", sim.display()))?;
    let mut rdr = csv::Reader::from_path(bounds_path)
        .map_err(|e| format!("{}: {e}", bounds_path.display()))?;
    let bound_rows: Vec<acrlnc::report::BoundRow> = rdr
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| format!("parse {}: {e}", bounds_path.display()))?;
    let rows = compare(&summaries, &bound_rows);
    if rows.is_empty() {
        return Err("no cells matched between the two files".into());
    }
    let path = out.join("compare.csv");
    write_csv(&path, &rows).map_err(|e| e.to_string())?;
    for r in &rows {
        println!(
            "cell {}: sim {:.3} in [lb {:.3}, cap {:.3}] = {}, mean delay {:.1} vs [genie {:.1}, ub {:.1}] = {}, F_D_mean {:.2}",
            r.cell, r.throughput_sim, r.throughput_lb, r.capacity, r.throughput_sandwich_ok,
            r.mean_delay_sim, r.genie_delay_lb, r.mean_delay_ub, r.mean_delay_within_bounds,
            r.f_d_mean
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(args) => simulate(args, false),
        Command::Sweep(args) => simulate(args, true),
        Command::Bounds { common, lambda } => bounds(common, *lambda),
        Command::Compare { sim, bounds, out } => compare_files(sim, bounds, out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
