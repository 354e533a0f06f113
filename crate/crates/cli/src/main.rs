//! Command-line driver: distance criteria, Lemma-1 verification, NMSE sweeps,
//! complexity accounting, and single-trial debugging.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xlmimo::harness::{
    complexity_csv, criteria_csv, lemma1_csv, run_sweep, run_trial_with_trace, sweep_csv,
    ExperimentConfig, SweepAxis,
};
use xlmimo::nlos::StoppingRule;

#[derive(Parser)]
#[command(name = "xlmimo", about = "Near-field XL-MIMO channel simulation and estimation")]
struct Cli {
    /// JSON experiment config; desk-scale defaults when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Start from the headline-scale defaults instead of the desk profile.
    #[arg(long, global = true)]
    paper_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    /// ASAGM xi-grid size.
    #[arg(long)]
    q_xi: Option<usize>,
    /// ASAGM curvature-grid size.
    #[arg(long)]
    q_alpha: Option<usize>,
    /// ASAGM alternation count.
    #[arg(long)]
    t_iter: Option<usize>,
    /// Smallest range covered by the ASAGM curvature grid (meters).
    #[arg(long)]
    r_min: Option<f64>,
    /// Polar-dictionary angle-grid size.
    #[arg(long)]
    q_angle: Option<usize>,
    /// Polar-dictionary curvature levels per angle.
    #[arg(long)]
    q_curv: Option<usize>,
    /// Assumed per-side path count for the sparse stage.
    #[arg(long)]
    l_hat: Option<usize>,
    /// Stopping rule for the refined OMP: fixed | residual.
    #[arg(long)]
    stopping: Option<String>,
    /// Trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Base seed for the deterministic trial streams.
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed SNR in dB for non-SNR sweeps.
    #[arg(long)]
    snr_db: Option<f64>,
    /// Worker threads (also honors XLMIMO_THREADS).
    #[arg(long)]
    threads: Option<usize>,
    /// Suppress wall-time measurements in the CSV for byte-identical reruns.
    #[arg(long)]
    no_timing: bool,
}

impl Overrides {
    fn apply(&self, cfg: &mut ExperimentConfig) -> Result<(), String> {
        if let Some(v) = self.q_xi {
            cfg.asagm.q_xi = v;
        }
        if let Some(v) = self.q_alpha {
            cfg.asagm.q_alpha = v;
        }
        if let Some(v) = self.t_iter {
            cfg.asagm.t_iter = v;
        }
        if let Some(v) = self.r_min {
            cfg.asagm.r_min_m = v;
        }
        if let Some(v) = self.q_angle {
            cfg.nlos.q_angle = v;
        }
        if let Some(v) = self.q_curv {
            cfg.nlos.q_curv = v;
        }
        if self.l_hat.is_some() {
            cfg.nlos.l_hat = self.l_hat;
        }
        if let Some(s) = &self.stopping {
            cfg.nlos.stopping = match s.as_str() {
                "fixed" => StoppingRule::FixedSparsity,
                "residual" => StoppingRule::ResidualThreshold,
                other => return Err(format!("unknown stopping rule '{other}'")),
            };
        }
        if let Some(v) = self.trials {
            cfg.sweep.trials = v;
        }
        if let Some(v) = self.seed {
            cfg.sweep.base_seed = v;
        }
        if let Some(v) = self.snr_db {
            cfg.sweep.snr_db = v;
        }
        if self.threads.is_some() {
            cfg.threads = self.threads;
        }
        if self.no_timing {
            cfg.record_timing = false;
        }
        Ok(())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the near-field distance criteria (CSV) for the configured array.
    Criteria {
        /// Power-ratio threshold for the uniform power distance.
        #[arg(long, default_value_t = 0.9)]
        threshold: f64,
    },
    /// Brute-force the worst-case subarray-model phase error against the
    /// closed-form bound at the given ranges.
    VerifyLemma1 {
        /// Comma-separated ranges in meters.
        #[arg(long, default_value = "50,100,200")]
        ranges: String,
        /// Coarse points per angle in the maximization.
        #[arg(long, default_value_t = 64)]
        grid: usize,
    },
    /// Run the configured Monte-Carlo sweep and emit the NMSE CSV.
    Sweep {
        /// Sweep axis override: distance | snr | pilots.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated sweep points (defaults depend on the axis).
        #[arg(long)]
        points: Option<String>,
        /// Output file; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Analytical complexity figures plus measured counter growth ratios.
    Complexity {
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Run one trial and dump the per-estimator results as JSON.
    Trial {
        #[arg(long)]
        sweep_value: f64,
        #[arg(long, default_value_t = 0)]
        trial_index: u64,
        /// Write the ASAGM objective trace to this CSV file.
        #[arg(long)]
        dump_trace: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the active config as JSON (useful as a template).
    PrintConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, String> {
    match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            ExperimentConfig::from_json(&text).map_err(|e| format!("bad config: {e}"))
        }
        None if cli.paper_scale => Ok(ExperimentConfig::paper_scale()),
        None => Ok(ExperimentConfig::desk_scale()),
    }
}

fn parse_points(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|e| format!("bad point '{s}': {e}")))
        .collect()
}

fn default_points(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Distance => vec![10.0, 20.0, 30.0, 50.0, 75.0, 100.0, 150.0, 200.0],
        SweepAxis::Snr => vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
        SweepAxis::Pilots => vec![8.0, 16.0, 24.0, 32.0, 48.0, 64.0],
    }
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    let mut cfg = load_config(&cli)?;

    match &cli.command {
        Command::Criteria { threshold } => {
            let array = cfg.array.to_config().map_err(|e| e.to_string())?;
            let csv = criteria_csv(&array, *threshold).map_err(|e| e.to_string())?;
            print!("{csv}");
        }
        Command::VerifyLemma1 { ranges, grid } => {
            let array = cfg.array.to_config().map_err(|e| e.to_string())?;
            let ranges = parse_points(ranges)?;
            print!("{}", lemma1_csv(&array, &ranges, *grid));
        }
        Command::Sweep {
            axis,
            points,
            out,
            overrides,
        } => {
            overrides.apply(&mut cfg)?;
            if let Some(axis) = axis {
                cfg.sweep.axis = match axis.as_str() {
                    "distance" => SweepAxis::Distance,
                    "snr" => SweepAxis::Snr,
                    "pilots" => SweepAxis::Pilots,
                    other => return Err(format!("unknown axis '{other}'")),
                };
                if points.is_none() {
                    cfg.sweep.points = default_points(cfg.sweep.axis);
                }
            }
            if let Some(points) = points {
                cfg.sweep.points = parse_points(points)?;
            }
            let rows = run_sweep(&cfg).map_err(|e| e.to_string())?;
            let csv = sweep_csv(&cfg, &rows);
            match out {
                Some(path) => fs::write(path, &csv)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
                None => print!("{csv}"),
            }
        }
        Command::Complexity { overrides } => {
            overrides.apply(&mut cfg)?;
            print!("{}", complexity_csv(&cfg).map_err(|e| e.to_string())?);
        }
        Command::Trial {
            sweep_value,
            trial_index,
            dump_trace,
            overrides,
        } => {
            overrides.apply(&mut cfg)?;
            let (record, trace) = run_trial_with_trace(&cfg, *sweep_value, *trial_index)
                .map_err(|e| e.to_string())?;
            println!("{}", record.to_json_pretty());
            if let Some(path) = dump_trace {
                let mut csv = String::from("half_step,objective\n");
                if let Some(trace) = trace {
                    for (i, v) in trace.iter().enumerate() {
                        csv.push_str(&format!("{i},{v:.12e}\n"));
                    }
                }
                fs::write(path, csv)
                    .map_err(|e| format!("cannot write {}: {e}", path.display()))?;
            }
        }
        Command::PrintConfig => println!("{}", cfg.to_json_pretty()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
