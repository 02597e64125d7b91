//! Metrics and orchestrated experiments: imputation RMSE vs. missing
//! fraction, state-estimation error vs. fraction of available data, and
//! confidence-interval coverage.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::{
    generate_load_profiles, measurement_task_id, solve_day, FeederModel, LoadProfile,
};
use crate::gp::{
    confidence_interval, impute_on_grid, train_prior, GpPrior, InputEncoding, PosteriorPrediction,
    TaskEncoder, TrainConfig,
};
use crate::mc::{dsse_snapshot, BusMeasurement, CompletionConfig};
use crate::seeding;
use crate::timeseries::{
    apply_missingness, interpolate_at, linear_interpolate, Quantity, TimeGrid, TimeSeriesTask,
    SECONDS_PER_DAY,
};

pub const POWER_FACTOR: f64 = 0.87;
const AMI_STEP_S: f64 = 900.0;
const SCADA_STEP_S: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Gp,
    Linear,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Gp => "gp",
            Method::Linear => "linear",
        }
    }

    pub fn from_name(s: &str) -> Option<Method> {
        match s {
            "gp" => Some(Method::Gp),
            "linear" => Some(Method::Linear),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub missing_fractions: Vec<f64>,
    pub fads: Vec<f64>,
    /// Reconciliation grid step in seconds (whole minutes dividing 86400).
    pub grid_step: f64,
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Relative measurement noise (std as a fraction of each signal's std).
    pub noise_rel: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Training tasks are thinned to at most this many points each.
    pub max_train_points: usize,
    /// Missing fraction applied before the FAD sweep.
    pub fad_missing_fraction: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            missing_fractions: vec![0.6, 0.4, 0.2, 0.1],
            fads: vec![0.5, 0.6, 0.7, 0.8, 0.9],
            grid_step: 60.0,
            methods: vec![Method::Gp, Method::Linear],
            trials: 10,
            noise_rel: 0.005,
            epochs: 100,
            // steeper than the library default: the shared noise variance
            // must travel several log-units within 100 epochs
            learning_rate: 0.05,
            max_train_points: 48,
            fad_missing_fraction: 0.6,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.missing_fractions.iter().any(|f| !(0.0..1.0).contains(f)) {
            return Err(Error::invalid("missing fractions must be in [0,1)"));
        }
        if self.fads.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
            return Err(Error::invalid("fads must be in (0,1]"));
        }
        if self.trials == 0 {
            return Err(Error::invalid("trials must be >= 1"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("at least one method required"));
        }
        if !(self.grid_step > 0.0)
            || (SECONDS_PER_DAY / self.grid_step).fract() != 0.0
            || (self.grid_step / 60.0).fract() != 0.0
        {
            return Err(Error::invalid(
                "grid_step must be a whole number of minutes dividing 86400",
            ));
        }
        if self.noise_rel < 0.0 || self.epochs == 0 || self.max_train_points < 2 {
            return Err(Error::invalid(
                "noise_rel must be >= 0, epochs >= 1, max_train_points >= 2",
            ));
        }
        if !(0.0..1.0).contains(&self.fad_missing_fraction) {
            return Err(Error::invalid("fad_missing_fraction must be in [0,1)"));
        }
        Ok(())
    }
}

/// 100 · RMS(estimate − truth) / RMS(truth).
pub fn rmse_percent(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::invalid("rmse_percent needs equal nonzero lengths"));
    }
    let n = truth.len() as f64;
    let mse = truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| (e - t).powi(2))
        .sum::<f64>()
        / n;
    let ms_truth = truth.iter().map(|t| t * t).sum::<f64>() / n;
    if !(ms_truth > 0.0) {
        return Err(Error::invalid("truth RMS must be > 0"));
    }
    Ok(100.0 * (mse / ms_truth).sqrt())
}

pub fn mean_absolute_error(truth: &[f64], estimate: &[f64]) -> Result<f64> {
    if truth.len() != estimate.len() || truth.is_empty() {
        return Err(Error::invalid(
            "mean_absolute_error needs equal nonzero lengths",
        ));
    }
    Ok(truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| (e - t).abs())
        .sum::<f64>()
        / truth.len() as f64)
}

/// Fraction of truth points inside the prediction's interval at `level`.
pub fn ci_coverage(truth: &[f64], pred: &PosteriorPrediction, level: f64) -> Result<f64> {
    if truth.len() != pred.mean.len() || truth.is_empty() {
        return Err(Error::invalid("ci_coverage needs aligned nonzero lengths"));
    }
    let bounds = confidence_interval(pred, level)?;
    let inside = truth
        .iter()
        .zip(&bounds)
        .filter(|(t, (lo, hi))| **t >= *lo && **t <= *hi)
        .count();
    Ok(inside as f64 / truth.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub method: String,
    pub quantity: String,
    pub sweep_name: String,
    pub sweep_value: f64,
    pub metric: String,
    pub value: f64,
    pub trial_std: f64,
    /// Raw per-trial values behind `value` (not serialized to CSV).
    pub trial_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("method,quantity,sweep_name,sweep_value,metric,value,trial_std\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.method, r.quantity, r.sweep_name, r.sweep_value, r.metric, r.value, r.trial_std
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::write_atomic(path, self.to_csv_string().as_bytes())
    }

    /// Aligned human-readable rendering.
    pub fn to_text_table(&self) -> String {
        let header = ["method", "quantity", "sweep", "value", "metric", "mean", "std"];
        let mut cells: Vec<[String; 7]> = vec![header.map(String::from)];
        for r in &self.rows {
            cells.push([
                r.method.clone(),
                r.quantity.clone(),
                r.sweep_name.clone(),
                format!("{:.3}", r.sweep_value),
                r.metric.clone(),
                format!("{:.6}", r.value),
                format!("{:.6}", r.trial_std),
            ]);
        }
        let mut widths = [0usize; 7];
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = String::new();
        for (i, row) in cells.iter().enumerate() {
            let line: Vec<String> = row
                .iter()
                .zip(widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
            if i == 0 {
                out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 12));
                out.push('\n');
            }
        }
        out
    }

    pub fn find(&self, method: &str, quantity: &str, sweep_value: f64, metric: &str) -> Option<&ResultRow> {
        self.rows.iter().find(|r| {
            r.method == method
                && r.quantity == quantity
                && (r.sweep_value - sweep_value).abs() < 1e-12
                && r.metric == metric
        })
    }
}

/// One synthetic 24-hour day: per-minute ground truth plus sampled
/// multi-rate measurement tasks.
#[derive(Debug, Clone)]
pub struct SyntheticDay {
    pub profiles: Vec<LoadProfile>,
    pub voltages: HashMap<String, Vec<f64>>,
    pub tasks: Vec<TimeSeriesTask>,
    /// Per-minute clean curve per task id.
    pub truth_by_task: HashMap<String, Vec<f64>>,
}

pub fn generate_day(feeder: &FeederModel, seed: u64, noise_rel: f64) -> Result<SyntheticDay> {
    let profiles = generate_load_profiles(feeder, seed, POWER_FACTOR)?;
    let voltages = solve_day(feeder, &profiles)?;
    let tasks = crate::feeder::sample_measurements(
        &profiles,
        &voltages,
        AMI_STEP_S,
        SCADA_STEP_S,
        noise_rel,
        seeding::derive(seed, "sampling"),
    )?;
    let mut truth_by_task = HashMap::new();
    for p in &profiles {
        truth_by_task.insert(
            measurement_task_id(&p.bus_id, Quantity::ActivePowerKw),
            p.p_kw.clone(),
        );
        truth_by_task.insert(
            measurement_task_id(&p.bus_id, Quantity::ReactivePowerKvar),
            p.q_kvar.clone(),
        );
    }
    for (bus, v) in &voltages {
        truth_by_task.insert(measurement_task_id(bus, Quantity::VoltageMagPu), v.clone());
    }
    Ok(SyntheticDay {
        profiles,
        voltages,
        tasks,
        truth_by_task,
    })
}

fn thin_task(task: &TimeSeriesTask, max_points: usize) -> Result<TimeSeriesTask> {
    if task.len() <= max_points {
        return Ok(task.clone());
    }
    let samples = task.samples();
    let picked: Vec<(f64, f64)> = (0..max_points)
        .map(|k| samples[k * task.len() / max_points])
        .collect();
    task.with_samples(picked)
}

/// Trains the shared prior on an independently seeded synthetic day.
pub fn train_for_trial(
    feeder: &FeederModel,
    config: &ExperimentConfig,
    label: &str,
    trial: usize,
) -> Result<(GpPrior, TaskEncoder)> {
    let train_seed = seeding::derive_indexed(config.seed, &format!("{label}-train"), trial as u64);
    let day = generate_day(feeder, train_seed, config.noise_rel)?;
    let train_tasks: Vec<TimeSeriesTask> = day
        .tasks
        .iter()
        .map(|t| thin_task(t, config.max_train_points))
        .collect::<Result<_>>()?;
    let encoder = TaskEncoder {
        encoding: InputEncoding::TimePlusTaskFeatures,
        horizon: SECONDS_PER_DAY,
        bus_depth: feeder.normalized_depths(),
    };
    let cfg = TrainConfig {
        epochs: config.epochs,
        learning_rate: config.learning_rate,
        seed: seeding::derive_indexed(config.seed, &format!("{label}-init"), trial as u64),
        encoding: encoder.encoding,
        ..Default::default()
    };
    let outcome = train_prior(&train_tasks, &encoder, &cfg)?;
    Ok((outcome.prior, encoder))
}

fn aggregate(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, std)
}

type AccKey = (usize, &'static str, &'static str, &'static str);

fn rows_from_acc(
    acc: BTreeMap<AccKey, Vec<f64>>,
    sweep_name: &str,
    sweep_values: &[f64],
) -> Vec<ResultRow> {
    acc.into_iter()
        .map(|((si, method, quantity, metric), values)| {
            let (mean, std) = aggregate(&values);
            ResultRow {
                method: method.to_string(),
                quantity: quantity.to_string(),
                sweep_name: sweep_name.to_string(),
                sweep_value: sweep_values[si],
                metric: metric.to_string(),
                value: mean,
                trial_std: std,
                trial_values: values,
            }
        })
        .collect()
}

/// Imputation accuracy sweep over missing fractions: trains on a disjoint
/// day, masks the test day, imputes active/reactive power onto the
/// reconciliation grid and scores RMSE% (pooled across tasks of a quantity)
/// plus 95% CI coverage for the GP.
pub fn imputation_experiment(
    feeder: &FeederModel,
    config: &ExperimentConfig,
) -> Result<ResultTable> {
    config.validate()?;
    let grid = TimeGrid::daily(config.grid_step)?;
    let grid_times = grid.times();
    let quantities = [Quantity::ActivePowerKw, Quantity::ReactivePowerKvar];
    let mut acc: BTreeMap<AccKey, Vec<f64>> = BTreeMap::new();

    for trial in 0..config.trials {
        let needs_gp = config.methods.contains(&Method::Gp);
        let trained = if needs_gp {
            Some(train_for_trial(feeder, config, "imputation", trial)?)
        } else {
            None
        };
        let test_seed =
            seeding::derive_indexed(config.seed, "imputation-test", trial as u64);
        let day = generate_day(feeder, test_seed, config.noise_rel)?;

        for (fi, &fraction) in config.missing_fractions.iter().enumerate() {
            // pooled (truth, estimate) pairs per method+quantity
            let mut pooled: HashMap<(&str, &str), (Vec<f64>, Vec<f64>)> = HashMap::new();
            let mut coverage: HashMap<&str, (usize, usize)> = HashMap::new();
            for task in day.tasks.iter().filter(|t| quantities.contains(&t.quantity)) {
                let truth_curve = &day.truth_by_task[&task.task_id];
                let truth: Vec<f64> = grid_times
                    .iter()
                    .map(|&t| truth_curve[(t / 60.0) as usize])
                    .collect();
                let mask_seed =
                    seeding::derive(test_seed, &format!("mask:{fi}:{}", task.task_id));
                let (masked, _) = apply_missingness(task, fraction, mask_seed)?;
                for &method in &config.methods {
                    let estimate = match method {
                        Method::Linear => linear_interpolate(&masked, &grid)?,
                        Method::Gp => {
                            let (prior, encoder) = trained.as_ref().expect("gp prior trained");
                            let pred =
                                impute_on_grid(prior, encoder, &masked, &grid_times, true)?;
                            let cov = ci_coverage(&truth, &pred, 0.95)?;
                            let entry = coverage.entry(task.quantity.code()).or_insert((0, 0));
                            entry.0 += (cov * truth.len() as f64).round() as usize;
                            entry.1 += truth.len();
                            pred.mean
                        }
                    };
                    let slot = pooled
                        .entry((method.name(), task.quantity.code()))
                        .or_default();
                    slot.0.extend_from_slice(&truth);
                    slot.1.extend_from_slice(&estimate);
                }
            }
            for ((method, quantity), (truth, est)) in &pooled {
                let rmse = rmse_percent(truth, est)?;
                acc.entry((fi, method, quantity, "rmse_percent"))
                    .or_default()
                    .push(rmse);
            }
            for (quantity, (inside, total)) in &coverage {
                acc.entry((fi, "gp", quantity, "ci_coverage"))
                    .or_default()
                    .push(*inside as f64 / *total as f64);
            }
        }
    }
    Ok(ResultTable {
        rows: rows_from_acc(acc, "missing_fraction", &config.missing_fractions),
    })
}

/// State-estimation error sweep over the fraction of available data: imputes
/// the masked test day with each method, runs matrix-completion snapshots
/// every 15 minutes, and scores mean absolute error per quantity.
pub fn fad_sweep(feeder: &FeederModel, config: &ExperimentConfig) -> Result<ResultTable> {
    config.validate()?;
    let snapshot_times: Vec<f64> = (0..(SECONDS_PER_DAY / AMI_STEP_S) as usize)
        .map(|k| k as f64 * AMI_STEP_S)
        .collect();
    let load_buses = feeder.load_bus_ids();
    let all_buses = feeder.bus_ids();
    let root = feeder.root_id().to_string();
    let completion = CompletionConfig::default();
    let mut acc: BTreeMap<AccKey, Vec<f64>> = BTreeMap::new();

    for trial in 0..config.trials {
        let needs_gp = config.methods.contains(&Method::Gp);
        let trained = if needs_gp {
            Some(train_for_trial(feeder, config, "fad", trial)?)
        } else {
            None
        };
        let test_seed = seeding::derive_indexed(config.seed, "fad-test", trial as u64);
        let day = generate_day(feeder, test_seed, config.noise_rel)?;

        for &method in &config.methods {
            // imputed value per task at every snapshot time
            let mut imputed: HashMap<&str, Vec<f64>> = HashMap::new();
            for task in &day.tasks {
                let mask_seed =
                    seeding::derive(test_seed, &format!("fadmask:{}", task.task_id));
                let (masked, _) =
                    apply_missingness(task, config.fad_missing_fraction, mask_seed)?;
                let series = match method {
                    Method::Linear => snapshot_times
                        .iter()
                        .map(|&t| interpolate_at(masked.samples(), t))
                        .collect(),
                    Method::Gp => {
                        let (prior, encoder) = trained.as_ref().expect("gp prior trained");
                        impute_on_grid(prior, encoder, &masked, &snapshot_times, true)?.mean
                    }
                };
                imputed.insert(task.task_id.as_str(), series);
            }
            let series_for = |bus: &str, q: Quantity| -> &Vec<f64> {
                &imputed[measurement_task_id(bus, q).as_str()]
            };

            for (fad_idx, &fad) in config.fads.iter().enumerate() {
                let mut abs_err: HashMap<&str, Vec<f64>> = HashMap::new();
                for (si, &t) in snapshot_times.iter().enumerate() {
                    let minute = (t / 60.0) as usize;
                    let mut meas: Vec<(String, BusMeasurement)> = Vec::new();
                    meas.push((
                        root.clone(),
                        BusMeasurement {
                            re_v: Some(feeder.substation_v_pu),
                            im_v: Some(0.0),
                            v_mag: Some(feeder.substation_v_pu),
                            ..Default::default()
                        },
                    ));
                    for bus in &load_buses {
                        // the linearized feeder model has zero voltage angle,
                        // so each magnitude reading also fixes the phasor
                        let v = series_for(bus, Quantity::VoltageMagPu)[si];
                        meas.push((
                            bus.clone(),
                            BusMeasurement {
                                re_v: Some(v),
                                im_v: Some(0.0),
                                v_mag: Some(v),
                                re_s: Some(
                                    series_for(bus, Quantity::ActivePowerKw)[si]
                                        / feeder.s_base_kw,
                                ),
                                im_s: Some(
                                    series_for(bus, Quantity::ReactivePowerKvar)[si]
                                        / feeder.s_base_kw,
                                ),
                                ..Default::default()
                            },
                        ));
                    }
                    // method-independent seed: both methods see the same
                    // surviving entry pattern, so the comparison is paired
                    let snap_seed =
                        seeding::derive(test_seed, &format!("fad:{fad_idx}:{si}"));
                    let states = dsse_snapshot(&meas, feeder, fad, snap_seed, &completion)?;
                    let by_bus: HashMap<&str, &crate::mc::BusState> =
                        states.iter().map(|s| (s.bus_id.as_str(), s)).collect();
                    for bus in &load_buses {
                        let st = by_bus[bus.as_str()];
                        let p_true = day.truth_by_task
                            [&measurement_task_id(bus, Quantity::ActivePowerKw)][minute];
                        let q_true = day.truth_by_task
                            [&measurement_task_id(bus, Quantity::ReactivePowerKvar)][minute];
                        abs_err
                            .entry(Quantity::ActivePowerKw.code())
                            .or_default()
                            .push((st.s.re * feeder.s_base_kw - p_true).abs());
                        abs_err
                            .entry(Quantity::ReactivePowerKvar.code())
                            .or_default()
                            .push((st.s.im * feeder.s_base_kw - q_true).abs());
                    }
                    for bus in &all_buses {
                        let st = by_bus[bus.as_str()];
                        let v_true = day.voltages[bus][minute];
                        abs_err
                            .entry(Quantity::VoltageMagPu.code())
                            .or_default()
                            .push((st.v_mag - v_true).abs());
                    }
                }
                for (quantity, errs) in &abs_err {
                    let mae = errs.iter().sum::<f64>() / errs.len() as f64;
                    acc.entry((fad_idx, method.name(), quantity, "mae"))
                        .or_default()
                        .push(mae);
                }
            }
        }
    }
    Ok(ResultTable {
        rows: rows_from_acc(acc, "fad", &config.fads),
    })
}

/// Writes CSV and aligned-text renderings of a result table.
pub fn write_results(table: &ResultTable, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    table.write_csv(dir.join(format!("{stem}.csv")))?;
    let mut buf = Vec::new();
    buf.write_all(table.to_text_table().as_bytes())?;
    crate::write_atomic(dir.join(format!("{stem}.txt")), &buf)
}
