use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use regflex_core::harness::{
    replay_tracking, run_experiment, scheduling_problem, score_files, sweep_file, ExperimentConfig,
    ReplayConfig, OUT_DIR_ENV, TICK_S,
};
use regflex_core::perfmetrics::{
    pjm_scores_records, report_rows, tracking_metrics, write_report_csv, write_scores_csv,
    PjmConfig,
};
use regflex_core::regsignal::{downsample, load_signal_csv, DelayModel};
use regflex_core::regtrack::write_tracking_csv;
use regflex_core::scheduler::{
    schedule_reserves, write_reserve_csv, write_schedule_csv, HourReserve,
};
use regflex_core::Error;

#[derive(Parser)]
#[command(
    name = "regflex",
    version,
    about = "Frequency regulation with a building supply fan"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Build the default configuration from this seed instead of a file.
    #[arg(long, conflicts_with = "config")]
    seed: Option<u64>,
    /// Output directory; beats REGFLEX_OUT_DIR and the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one day's reserve schedule (reserve.csv, schedule.csv).
    Schedule {
        #[command(flatten)]
        common: Common,
        /// Day index within the weather trace.
        #[arg(long, default_value_t = 0)]
        date: usize,
        #[arg(long, conflicts_with = "asymmetric")]
        symmetric: bool,
        #[arg(long)]
        asymmetric: bool,
        #[arg(long, conflicts_with = "no_setback")]
        setback: bool,
        #[arg(long)]
        no_setback: bool,
    },
    /// Run the full two-cell experiment and write all artifacts.
    Run(Common),
    /// Recompute report.csv and scores.csv from an existing tracking log.
    Score {
        #[arg(long)]
        tracking: PathBuf,
        #[arg(long)]
        reserves: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tracking metrics restricted to capacities at or above each threshold.
    Sweep {
        /// Tracking log; defaults to tracking.csv in the output directory.
        #[arg(long)]
        tracking: Option<PathBuf>,
        /// Comma-separated thresholds in W.
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Track a signal file open-loop at a fixed baseline and capacity.
    Replay {
        #[arg(long)]
        signal: PathBuf,
        #[arg(long, default_value_t = 1250.0)]
        baseline: f64,
        #[arg(long, default_value_t = 750.0)]
        reserve_up: f64,
        #[arg(long, default_value_t = 750.0)]
        reserve_down: f64,
        /// Seconds of signal to replay; the whole file by default.
        #[arg(long)]
        duration: Option<f64>,
        /// Lognormal delivery delay as mean,p95 in seconds.
        #[arg(long, value_delimiter = ',', num_args = 2)]
        delay: Option<Vec<f64>>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>, configured: Option<&Path>) -> PathBuf {
    if let Some(p) = flag {
        return p;
    }
    match std::env::var_os(OUT_DIR_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => configured.map_or_else(|| PathBuf::from("."), Path::to_path_buf),
    }
}

fn load(common: &Common) -> Result<ExperimentConfig, Error> {
    match (&common.config, common.seed) {
        (Some(path), _) => ExperimentConfig::load(path),
        (None, Some(seed)) => Ok(ExperimentConfig::with_seed(seed)),
        (None, None) => Err(Error::Config(
            "either --config or --seed is required".into(),
        )),
    }
}

fn execute(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Schedule {
            common,
            date,
            symmetric,
            asymmetric,
            setback,
            no_setback,
        } => {
            let mut cfg = load(&common)?;
            if symmetric || asymmetric {
                cfg.symmetric = symmetric;
            }
            if setback || no_setback {
                cfg.setback = setback;
            }
            if date >= cfg.days {
                cfg.days = date + 1;
            }
            cfg.validate()?;
            let dir = out_dir(common.out, cfg.output_dir.as_deref());
            let weather = cfg.weather_trace()?;
            let problem = scheduling_problem(
                &cfg,
                &weather,
                date,
                [cfg.initial.room_c, cfg.initial.mass_c],
            );
            let outcome = schedule_reserves(&problem)?;
            write_reserve_csv(&dir.join("reserve.csv"), &outcome.schedule)?;
            write_schedule_csv(&dir.join("schedule.csv"), &outcome.schedule)?;
            println!(
                "objective {:.4} EUR, average capacity {:.1} W, written to {}",
                outcome.objective_eur,
                outcome.schedule.average_capacity_w(),
                dir.display()
            );
        }
        Command::Run(common) => {
            let cfg = load(&common)?;
            let dir = out_dir(common.out, cfg.output_dir.as_deref());
            let art = run_experiment(&cfg, &dir)?;
            let m = &art.manifest;
            println!(
                "{} day(s): {} schedule commits, {} MPC solves ({} relaxed), {} ticks; artifacts in {}",
                m.days,
                m.schedule_commits,
                m.mpc_solves,
                m.mpc_relaxed,
                m.ticks,
                dir.display()
            );
        }
        Command::Score {
            tracking,
            reserves,
            out,
        } => {
            let dir = out_dir(out, None);
            let o = score_files(&tracking, &reserves, &dir)?;
            println!("wrote {} and {}", o.report.display(), o.scores.display());
        }
        Command::Sweep {
            tracking,
            thresholds,
            out,
        } => {
            let dir = out_dir(out, None);
            let tracking = tracking.unwrap_or_else(|| dir.join("tracking.csv"));
            if thresholds.windows(2).any(|w| !(w[0] <= w[1])) {
                return Err(Error::Config("thresholds must be ascending".into()));
            }
            let path = dir.join("sweep.csv");
            sweep_file(&tracking, &thresholds, &path)?;
            println!("wrote {} ({} thresholds)", path.display(), thresholds.len());
        }
        Command::Replay {
            signal,
            baseline,
            reserve_up,
            reserve_down,
            duration,
            delay,
            seed,
            out,
        } => {
            let dir = out_dir(out, None);
            let mut sig = load_signal_csv(&signal)?;
            if sig.period_s() < TICK_S {
                sig = downsample(&sig, TICK_S)?;
            }
            let cfg = ReplayConfig {
                baseline_w: baseline,
                r_up_w: reserve_up,
                r_down_w: reserve_down,
                duration_s: duration,
                delay: delay.map(|d| DelayModel::lognormal(d[0], d[1], seed)),
                ..ReplayConfig::default()
            };
            let outcome = replay_tracking(&sig, &cfg)?;
            write_tracking_csv(&dir.join("tracking.csv"), &outcome.records)?;
            let hours = (outcome.records.len() as f64 * TICK_S / 3600.0).ceil() as usize;
            let reserves = vec![
                HourReserve {
                    r_up_w: reserve_up,
                    r_down_w: reserve_down
                };
                hours
            ];
            let metrics = tracking_metrics(&outcome.records)?;
            let scores = pjm_scores_records(&outcome.records, &reserves, &PjmConfig::default())?;
            write_report_csv(&dir.join("report.csv"), &report_rows(&metrics, &scores))?;
            write_scores_csv(&dir.join("scores.csv"), &scores)?;
            info!("replayed {} ticks", outcome.records.len());
            match scores.average {
                Some(a) => println!("e_rmse {:.2} W, S_tot {:.4}", metrics.e_rmse_w, a[3]),
                None => println!("e_rmse {:.2} W, no scored hours", metrics.e_rmse_w),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config_error() { 2 } else { 3 })
        }
    }
}
