//! `gridfuse` — generate synthetic feeder days, impute multi-rate
//! measurements, run matrix-completion state estimation, and sweep the
//! experiment grids. All randomness is seeded (flag or `GRIDFUSE_SEED`),
//! so every artifact is reproducible byte for byte.

mod svg;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

use gridfuse::feeder::{load_feeder, measurement_task_id, FeederModel};
use gridfuse::gp::{impute_on_grid, train_prior, InputEncoding, TaskEncoder, TrainConfig};
use gridfuse::harness::{
    fad_sweep, generate_day, imputation_experiment, write_results, ExperimentConfig, Method,
};
use gridfuse::mc::{dsse_snapshot, BusMeasurement, CompletionConfig};
use gridfuse::timeseries::{
    apply_missingness, linear_interpolate, read_measurements_csv, write_measurements_csv, Phase,
    Quantity, TimeGrid, TimeSeriesTask, SECONDS_PER_DAY,
};

#[derive(Parser)]
#[command(name = "gridfuse", version, about = "Multi-rate feeder measurement fusion")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Gp,
    Linear,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Gp => Method::Gp,
            MethodArg::Linear => Method::Linear,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Imputation,
    Fad,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a 24-hour feeder day and write measurement + truth CSVs
    Generate {
        #[arg(long, env = "GRIDFUSE_SEED", default_value_t = 0)]
        seed: u64,
        /// Relative measurement noise (std as a fraction of each signal's std)
        #[arg(long, default_value_t = 0.005)]
        noise_rel: f64,
        /// Feeder topology JSON; defaults to the built-in 37-bus feeder
        #[arg(long)]
        feeder: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Impute measurement tasks onto a uniform grid
    Impute {
        /// Measurement CSV (task_id,bus_id,phase,quantity,timestamp_s,value)
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "gp")]
        method: MethodArg,
        /// Fraction of each task's samples to drop before imputing
        #[arg(long, default_value_t = 0.0)]
        fraction: f64,
        #[arg(long, default_value_t = 60.0)]
        grid_step: f64,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, env = "GRIDFUSE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        feeder: Option<PathBuf>,
    },
    /// Estimate per-bus states at one instant via matrix completion
    Dsse {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fraction of available data fed to the estimator
        #[arg(long, default_value_t = 0.9)]
        fad: f64,
        /// Snapshot time in seconds since midnight
        #[arg(long, default_value_t = 43200.0)]
        time: f64,
        #[arg(long, value_enum, default_value = "gp")]
        method: MethodArg,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, env = "GRIDFUSE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        feeder: Option<PathBuf>,
    },
    /// Run a full experiment sweep and write CSV + text tables
    Sweep {
        #[arg(long, value_enum)]
        kind: SweepKind,
        #[arg(long, env = "GRIDFUSE_SEED", default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        trials: usize,
        #[arg(long, default_value_t = 100)]
        epochs: usize,
        #[arg(long, default_value_t = 0.005)]
        noise_rel: f64,
        /// Comma-separated missing fractions (imputation sweep)
        #[arg(long)]
        fractions: Option<String>,
        /// Comma-separated data-availability fractions (fad sweep)
        #[arg(long)]
        fads: Option<String>,
        #[arg(long)]
        feeder: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Render a sweep result CSV as an SVG line plot
    Plot {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "rmse_percent")]
        metric: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve_feeder(path: &Option<PathBuf>) -> anyhow::Result<FeederModel> {
    match path {
        Some(p) if p.exists() => {
            load_feeder(p).with_context(|| format!("loading feeder {}", p.display()))
        }
        Some(p) if p.file_name().map_or(false, |n| n == "ieee37_sp.json") => {
            // the built-in topology ships with the binary
            Ok(FeederModel::ieee37())
        }
        Some(p) => bail!("feeder file not found: {}", p.display()),
        None => Ok(FeederModel::ieee37()),
    }
}

fn parse_list(s: &str) -> anyhow::Result<Vec<f64>> {
    s.split(',')
        .map(|tok| {
            tok.trim()
                .parse::<f64>()
                .with_context(|| format!("bad list entry {tok:?}"))
        })
        .collect()
}

/// Trains the shared prior on the given tasks (thinned for tractability).
fn train_on_tasks(
    tasks: &[TimeSeriesTask],
    feeder: &FeederModel,
    epochs: usize,
    seed: u64,
) -> anyhow::Result<(gridfuse::gp::GpPrior, TaskEncoder)> {
    let thinned: Vec<TimeSeriesTask> = tasks
        .iter()
        .map(|t| {
            if t.len() <= 96 {
                Ok(t.clone())
            } else {
                let s = t.samples();
                t.with_samples((0..96).map(|k| s[k * t.len() / 96]).collect())
            }
        })
        .collect::<Result<_, _>>()?;
    let encoder = TaskEncoder {
        encoding: InputEncoding::TimePlusTaskFeatures,
        horizon: SECONDS_PER_DAY,
        bus_depth: feeder.normalized_depths(),
    };
    let cfg = TrainConfig {
        epochs,
        seed,
        encoding: encoder.encoding,
        ..Default::default()
    };
    let outcome = train_prior(&thinned, &encoder, &cfg)?;
    Ok((outcome.prior, encoder))
}

fn cmd_generate(
    seed: u64,
    noise_rel: f64,
    feeder: &Option<PathBuf>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let feeder = resolve_feeder(feeder)?;
    let day = generate_day(&feeder, seed, noise_rel)?;
    std::fs::create_dir_all(out_dir)?;
    write_measurements_csv(out_dir.join("measurements.csv"), &day.tasks)?;
    // truth curves re-use the measurement schema at one-minute resolution
    let mut truth_ids: Vec<&String> = day.truth_by_task.keys().collect();
    truth_ids.sort();
    let truth_tasks: Vec<TimeSeriesTask> = truth_ids
        .iter()
        .map(|id| {
            let (bus, code) = id.rsplit_once(':').expect("task id format bus:code");
            let quantity = Quantity::from_code(code).expect("known quantity code");
            let samples = day.truth_by_task[*id]
                .iter()
                .enumerate()
                .map(|(i, &v)| (i as f64 * 60.0, v))
                .collect();
            TimeSeriesTask::new(id.to_string(), bus.to_string(), Phase::A, quantity, samples)
        })
        .collect::<Result<_, _>>()?;
    write_measurements_csv(out_dir.join("truth.csv"), &truth_tasks)?;
    println!(
        "wrote {} measurement tasks and {} truth curves to {}",
        day.tasks.len(),
        truth_tasks.len(),
        out_dir.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_impute(
    input: &Path,
    out: &Path,
    method: Method,
    fraction: f64,
    grid_step: f64,
    epochs: usize,
    seed: u64,
    feeder: &Option<PathBuf>,
) -> anyhow::Result<()> {
    let tasks = read_measurements_csv(input)?;
    if tasks.is_empty() {
        bail!("no tasks in {}", input.display());
    }
    let feeder = resolve_feeder(feeder)?;
    let grid = TimeGrid::daily(grid_step)?;
    let grid_times = grid.times();
    let trained = match method {
        Method::Gp => Some(train_on_tasks(&tasks, &feeder, epochs, seed)?),
        Method::Linear => None,
    };
    let mut csv = String::from("task_id,timestamp_s,mean,std\n");
    for task in &tasks {
        let (masked, _) = apply_missingness(
            task,
            fraction,
            gridfuse::seeding::derive(seed, &format!("mask:{}", task.task_id)),
        )?;
        let (means, stds): (Vec<f64>, Vec<f64>) = match method {
            // deterministic interpolation carries no uncertainty estimate
            Method::Linear => {
                let v = linear_interpolate(&masked, &grid)?;
                let n = v.len();
                (v, vec![0.0; n])
            }
            Method::Gp => {
                let (prior, encoder) = trained.as_ref().expect("trained gp prior");
                let pred = impute_on_grid(prior, encoder, &masked, &grid_times, true)?;
                let stds = pred.variance.iter().map(|v| v.max(0.0).sqrt()).collect();
                (pred.mean, stds)
            }
        };
        for (i, &t) in grid_times.iter().enumerate() {
            csv.push_str(&format!("{},{t},{},{}\n", task.task_id, means[i], stds[i]));
        }
    }
    gridfuse::write_atomic(out, csv.as_bytes())?;
    println!("imputed {} tasks onto a {}-point grid", tasks.len(), grid.count());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_dsse(
    input: &Path,
    out: &Path,
    fad: f64,
    time: f64,
    method: Method,
    epochs: usize,
    seed: u64,
    feeder: &Option<PathBuf>,
) -> anyhow::Result<()> {
    let tasks = read_measurements_csv(input)?;
    let feeder = resolve_feeder(feeder)?;
    let trained = match method {
        Method::Gp => Some(train_on_tasks(&tasks, &feeder, epochs, seed)?),
        Method::Linear => None,
    };
    let mut at_time: HashMap<String, f64> = HashMap::new();
    for task in &tasks {
        let v = match method {
            Method::Linear => gridfuse::timeseries::interpolate_at(task.samples(), time),
            Method::Gp => {
                let (prior, encoder) = trained.as_ref().expect("trained gp prior");
                impute_on_grid(prior, encoder, task, &[time], true)?.mean[0]
            }
        };
        at_time.insert(task.task_id.clone(), v);
    }
    let mut meas: Vec<(String, BusMeasurement)> = vec![(
        feeder.root_id().to_string(),
        BusMeasurement {
            re_v: Some(feeder.substation_v_pu),
            im_v: Some(0.0),
            v_mag: Some(feeder.substation_v_pu),
            ..Default::default()
        },
    )];
    for bus in feeder.load_bus_ids() {
        let lookup = |q: Quantity| at_time.get(&measurement_task_id(&bus, q)).copied();
        meas.push((
            bus.clone(),
            BusMeasurement {
                v_mag: lookup(Quantity::VoltageMagPu),
                re_s: lookup(Quantity::ActivePowerKw).map(|p| p / feeder.s_base_kw),
                im_s: lookup(Quantity::ReactivePowerKvar).map(|q| q / feeder.s_base_kw),
                ..Default::default()
            },
        ));
    }
    let states = dsse_snapshot(&meas, &feeder, fad, seed, &CompletionConfig::default())?;
    let mut csv = String::from("bus_id,re_v,im_v,v_mag,re_s,im_s,consistency_residual\n");
    for s in &states {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            s.bus_id, s.v.re, s.v.im, s.v_mag, s.s.re, s.s.im, s.consistency_residual
        ));
    }
    gridfuse::write_atomic(out, csv.as_bytes())?;
    println!("estimated {} bus states at t={time}s (fad={fad})", states.len());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_sweep(
    kind: SweepKind,
    seed: u64,
    trials: usize,
    epochs: usize,
    noise_rel: f64,
    fractions: &Option<String>,
    fads: &Option<String>,
    feeder: &Option<PathBuf>,
    out_dir: &Path,
) -> anyhow::Result<()> {
    let feeder = resolve_feeder(feeder)?;
    let mut config = ExperimentConfig {
        seed,
        trials,
        epochs,
        noise_rel,
        ..Default::default()
    };
    if let Some(f) = fractions {
        config.missing_fractions = parse_list(f)?;
    }
    if let Some(f) = fads {
        config.fads = parse_list(f)?;
    }
    let (table, stem) = match kind {
        SweepKind::Imputation => (imputation_experiment(&feeder, &config)?, "imputation"),
        SweepKind::Fad => (fad_sweep(&feeder, &config)?, "fad"),
    };
    write_results(&table, out_dir, stem)?;
    print!("{}", table.to_text_table());
    println!("wrote {stem}.csv and {stem}.txt to {}", out_dir.display());
    Ok(())
}

fn cmd_plot(input: &Path, metric: &str, out: &Path) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(input)
        .with_context(|| format!("reading {}", input.display()))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header != "method,quantity,sweep_name,sweep_value,metric,value,trial_std" {
        bail!("unrecognized result CSV header: {header:?}");
    }
    let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    let mut sweep_name = String::new();
    for (i, line) in lines.enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 7 {
            bail!("line {}: expected 7 columns, got {}", i + 2, cols.len());
        }
        if cols[4] != metric {
            continue;
        }
        sweep_name = cols[2].to_string();
        let x: f64 = cols[3].parse().with_context(|| format!("line {}", i + 2))?;
        let y: f64 = cols[5].parse().with_context(|| format!("line {}", i + 2))?;
        let label = format!("{} {}", cols[0], cols[1]);
        match series.iter_mut().find(|(l, _)| *l == label) {
            Some((_, pts)) => pts.push((x, y)),
            None => series.push((label, vec![(x, y)])),
        }
    }
    if series.is_empty() {
        bail!("no rows with metric {metric:?} in {}", input.display());
    }
    let plotted: Vec<svg::Series> = series
        .into_iter()
        .map(|(label, mut points)| {
            points.sort_by(|a, b| a.0.total_cmp(&b.0));
            svg::Series { label, points }
        })
        .collect();
    let body = svg::emit_svg_plot(metric, &sweep_name, metric, &plotted);
    gridfuse::write_atomic(out, body.as_bytes())?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Generate {
            seed,
            noise_rel,
            feeder,
            out_dir,
        } => cmd_generate(*seed, *noise_rel, feeder, out_dir),
        Command::Impute {
            input,
            out,
            method,
            fraction,
            grid_step,
            epochs,
            seed,
            feeder,
        } => cmd_impute(
            input,
            out,
            (*method).into(),
            *fraction,
            *grid_step,
            *epochs,
            *seed,
            feeder,
        ),
        Command::Dsse {
            input,
            out,
            fad,
            time,
            method,
            epochs,
            seed,
            feeder,
        } => cmd_dsse(
            input,
            out,
            *fad,
            *time,
            (*method).into(),
            *epochs,
            *seed,
            feeder,
        ),
        Command::Sweep {
            kind,
            seed,
            trials,
            epochs,
            noise_rel,
            fractions,
            fads,
            feeder,
            out_dir,
        } => cmd_sweep(
            *kind, *seed, *trials, *epochs, *noise_rel, fractions, fads, feeder, out_dir,
        ),
        Command::Plot { input, metric, out } => cmd_plot(input, metric, out),
    }
}

fn main() -> ExitCode {
    // exit 0 = success, 1 = user error, 2 = numerical failure
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not errors
            if e.use_stderr() {
                e.print().ok();
                return ExitCode::FAILURE;
            }
            e.print().ok();
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let numerical = matches!(
                e.downcast_ref::<gridfuse::Error>(),
                Some(gridfuse::Error::NumericalFailure(_) | gridfuse::Error::TrainingDiverged(_))
            );
            ExitCode::from(if numerical { 2 } else { 1 })
        }
    }
}
