use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use pccb::experiment::export::{ensure_dir, write_stats};
use pccb::experiment::{
    aggregate_stats, export_outputs, read_records_csv, run_comparison, ExperimentConfig, RunMode,
    SteeringSpec,
};

/// Phase-center-constrained beamforming experiments.
#[derive(Parser)]
#[command(name = "pccb", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for the restarts.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Number of restarts per direction.
    #[arg(long, global = true)]
    restarts: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (0 = one per CPU).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Conventional beamformer for every configured direction.
    Steer,
    /// Optimize a single steering direction.
    Pccb {
        /// Azimuth in degrees; defaults to the first configured direction.
        #[arg(long, allow_hyphen_values = true, requires = "phi_deg")]
        theta_deg: Option<f64>,
        /// Elevation in degrees.
        #[arg(long, allow_hyphen_values = true, requires = "theta_deg")]
        phi_deg: Option<f64>,
    },
    /// CBF and multi-start PCCB for every configured direction.
    Sweep,
    /// Recompute stats.json from an existing records.csv.
    Stats {
        /// Defaults to <out>/records.csv.
        #[arg(long)]
        records: Option<PathBuf>,
    },
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::from_file(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.solver.base_seed = seed;
    }
    if let Some(r) = common.restarts {
        cfg.solver.n_restarts = r;
    }
    if let Some(out) = &common.out {
        cfg.output_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn sweep(cfg: &ExperimentConfig, mode: RunMode) -> Result<()> {
    let run = run_comparison(cfg, mode)?;
    for f in &run.failures {
        eprintln!("warning: direction {} failed: {}", f.dir_idx, f.message);
    }
    if run.records.is_empty() {
        bail!("no direction produced a record");
    }
    let bundle = aggregate_stats(&run.records, &cfg.stats);
    let written = export_outputs(&bundle, &run, cfg, &cfg.output_dir)?;
    let s = &bundle.summary;
    println!(
        "{} directions, {} CBF records, {} PCCB records ({} converged), {} failures",
        s.n_directions,
        s.n_cbf_records,
        s.n_pccb_records,
        s.n_pccb_converged,
        run.failures.len()
    );
    print_summary(&bundle);
    println!(
        "wrote {} files to {}",
        written.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

fn print_summary(bundle: &pccb::experiment::StatsBundle) {
    for d in &bundle.per_direction {
        let fmt = |x: Option<f64>| x.map_or("-".to_string(), |v| format!("{:.4}", v * 1e3));
        println!(
            "dir {:>3}  SR {:>5.1} deg  CBF {:>8} mm  PCCB best {:>8} mm  ratio {}",
            d.dir_idx,
            d.steering_range_deg,
            fmt(d.cbf_norm_m),
            fmt(d.pccb_best_norm_m),
            d.reduction.map_or("-".to_string(), |r| format!("{r:.2}"))
        );
    }
    if let Some(m) = bundle.summary.median_reduction_15_60 {
        println!(
            "median reduction over {} directions 15-60 deg off boresight: {m:.2}",
            bundle.summary.n_directions_15_60
        );
    }
}

fn stats(cfg: &ExperimentConfig, records: &Path) -> Result<()> {
    let recs = read_records_csv(records)?;
    if recs.is_empty() {
        bail!("{} holds no records", records.display());
    }
    let bundle = aggregate_stats(&recs, &cfg.stats);
    let path = write_stats(&bundle, &cfg.output_dir)?;
    print_summary(&bundle);
    println!("wrote {}", path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = load_config(&cli.common)?;
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Steer => sweep(&cfg, RunMode::CbfOnly),
        Command::Sweep => sweep(&cfg, RunMode::Full),
        Command::Pccb { theta_deg, phi_deg } => {
            let dir = match (theta_deg, phi_deg) {
                (Some(t), Some(p)) => [t, p],
                _ => {
                    let (t, p) = cfg.steering_directions()?[0];
                    [t.to_degrees(), p.to_degrees()]
                }
            };
            cfg.steering = SteeringSpec::List {
                directions: vec![dir],
            };
            cfg.validate()?;
            sweep(&cfg, RunMode::Full)
        }
        Command::Stats { records } => {
            let records = records.unwrap_or_else(|| cfg.output_dir.join("records.csv"));
            ensure_dir(&cfg.output_dir)?;
            stats(&cfg, &records)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
