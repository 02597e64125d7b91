//! Canonical data model for multi-rate sensor time series: grids, masking,
//! standardization and the linear-interpolation baseline.

use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    A,
    B,
    C,
}

impl Phase {
    pub fn code(self) -> &'static str {
        match self {
            Phase::A => "A",
            Phase::B => "B",
            Phase::C => "C",
        }
    }

    pub fn from_code(s: &str) -> Option<Phase> {
        match s {
            "A" => Some(Phase::A),
            "B" => Some(Phase::B),
            "C" => Some(Phase::C),
            _ => None,
        }
    }
}

/// Measured quantity of a sensor stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Quantity {
    ActivePowerKw,
    ReactivePowerKvar,
    VoltageMagPu,
}

impl Quantity {
    pub fn code(self) -> &'static str {
        match self {
            Quantity::ActivePowerKw => "P_kW",
            Quantity::ReactivePowerKvar => "Q_kVAr",
            Quantity::VoltageMagPu => "V_pu",
        }
    }

    pub fn from_code(s: &str) -> Option<Quantity> {
        match s {
            "P_kW" => Some(Quantity::ActivePowerKw),
            "Q_kVAr" => Some(Quantity::ReactivePowerKvar),
            "V_pu" => Some(Quantity::VoltageMagPu),
            _ => None,
        }
    }

    pub const ALL: [Quantity; 3] = [
        Quantity::ActivePowerKw,
        Quantity::ReactivePowerKvar,
        Quantity::VoltageMagPu,
    ];
}

/// Uniform reconciliation grid in seconds since midnight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    start: f64,
    step: f64,
    count: usize,
}

impl TimeGrid {
    pub fn new(start: f64, step: f64, count: usize) -> Result<TimeGrid> {
        if !(step > 0.0) || !step.is_finite() || !start.is_finite() {
            return Err(Error::invalid(format!(
                "grid step must be positive and finite, got {step}"
            )));
        }
        if count == 0 {
            return Err(Error::invalid("grid count must be >= 1"));
        }
        Ok(TimeGrid { start, step, count })
    }

    /// Full-day grid at the given step (step must divide 86400).
    pub fn daily(step: f64) -> Result<TimeGrid> {
        if !(step > 0.0) || (SECONDS_PER_DAY / step).fract() != 0.0 {
            return Err(Error::invalid(format!(
                "step {step} does not divide 86400"
            )));
        }
        TimeGrid::new(0.0, step, (SECONDS_PER_DAY / step) as usize)
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn time_at(&self, i: usize) -> f64 {
        self.start + self.step * i as f64
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.count).map(|i| self.time_at(i)).collect()
    }
}

/// One sensor stream: identity plus irregular (timestamp, value) samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesTask {
    pub task_id: String,
    pub bus_id: String,
    pub phase: Phase,
    pub quantity: Quantity,
    samples: Vec<(f64, f64)>,
}

impl TimeSeriesTask {
    pub fn new(
        task_id: impl Into<String>,
        bus_id: impl Into<String>,
        phase: Phase,
        quantity: Quantity,
        samples: Vec<(f64, f64)>,
    ) -> Result<TimeSeriesTask> {
        for (i, &(t, v)) in samples.iter().enumerate() {
            if !t.is_finite() || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "sample {i} is not finite: ({t}, {v})"
                )));
            }
            if i > 0 && t <= samples[i - 1].0 {
                return Err(Error::invalid(format!(
                    "timestamps must be strictly increasing at sample {i}: {} then {t}",
                    samples[i - 1].0
                )));
            }
        }
        Ok(TimeSeriesTask {
            task_id: task_id.into(),
            bus_id: bus_id.into(),
            phase,
            quantity,
            samples,
        })
    }

    pub fn samples(&self) -> &[(f64, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.0).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.1).collect()
    }

    /// Same identity, different samples (validated).
    pub fn with_samples(&self, samples: Vec<(f64, f64)>) -> Result<TimeSeriesTask> {
        TimeSeriesTask::new(
            self.task_id.clone(),
            self.bus_id.clone(),
            self.phase,
            self.quantity,
            samples,
        )
    }
}

/// Record of which pristine samples survived a seeded masking pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissingnessMask {
    pub task_id: String,
    pub kept_indices: Vec<usize>,
    pub seed: u64,
    pub fraction_missing: f64,
}

/// Per-task affine transform used for numerical conditioning.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: f64,
    pub std: f64,
}

impl Standardization {
    pub fn standardize(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    pub fn destandardize(&self, v: f64) -> f64 {
        v * self.std + self.mean
    }
}

/// Keeps round((1-fraction)*n) samples, chosen uniformly without replacement
/// under the seed. Deterministic for a fixed seed.
pub fn apply_missingness(
    task: &TimeSeriesTask,
    fraction: f64,
    seed: u64,
) -> Result<(TimeSeriesTask, MissingnessMask)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::invalid(format!(
            "missing fraction must be in [0,1), got {fraction}"
        )));
    }
    if task.is_empty() {
        return Err(Error::invalid(format!(
            "task {} has no samples to mask",
            task.task_id
        )));
    }
    let n = task.len();
    let keep = ((1.0 - fraction) * n as f64).round() as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut kept: Vec<usize> = rand::seq::index::sample(&mut rng, n, keep).into_vec();
    kept.sort_unstable();
    let samples: Vec<(f64, f64)> = kept.iter().map(|&i| task.samples[i]).collect();
    let masked = task.with_samples(samples)?;
    Ok((
        masked,
        MissingnessMask {
            task_id: task.task_id.clone(),
            kept_indices: kept,
            seed,
            fraction_missing: fraction,
        },
    ))
}

/// Piecewise-linear interpolation onto a grid, with constant-hold
/// extrapolation beyond the first/last sample. Grid instants that coincide
/// with a sample return the sample value exactly.
pub fn linear_interpolate(task: &TimeSeriesTask, grid: &TimeGrid) -> Result<Vec<f64>> {
    if task.is_empty() {
        return Err(Error::NoData(format!(
            "task {} has no samples to interpolate",
            task.task_id
        )));
    }
    let s = &task.samples;
    let mut out = Vec::with_capacity(grid.count());
    for i in 0..grid.count() {
        out.push(interpolate_at(s, grid.time_at(i)));
    }
    Ok(out)
}

/// Interpolation at a single instant; same rules as `linear_interpolate`.
pub fn interpolate_at(samples: &[(f64, f64)], t: f64) -> f64 {
    debug_assert!(!samples.is_empty());
    match samples.binary_search_by(|&(st, _)| st.partial_cmp(&t).unwrap()) {
        Ok(i) => samples[i].1,
        Err(0) => samples[0].1,
        Err(i) if i == samples.len() => samples[samples.len() - 1].1,
        Err(i) => {
            let (t0, v0) = samples[i - 1];
            let (t1, v1) = samples[i];
            v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        }
    }
}

/// Shifts/scales values to sample mean 0 and population std 1. Degenerate
/// variance clamps std to 1 so the transform stays invertible.
pub fn standardize_task(task: &TimeSeriesTask) -> Result<(TimeSeriesTask, Standardization)> {
    let n = task.len();
    if n == 0 {
        return Ok((
            task.clone(),
            Standardization {
                mean: 0.0,
                std: 1.0,
            },
        ));
    }
    let mean = task.samples.iter().map(|s| s.1).sum::<f64>() / n as f64;
    let var = task
        .samples
        .iter()
        .map(|s| (s.1 - mean).powi(2))
        .sum::<f64>()
        / n as f64;
    let std = if var > 0.0 { var.sqrt() } else { 1.0 };
    let params = Standardization { mean, std };
    let samples = task
        .samples
        .iter()
        .map(|&(t, v)| (t, params.standardize(v)))
        .collect();
    Ok((task.with_samples(samples)?, params))
}

/// Maps seconds onto [0,1] over the given horizon.
pub fn normalize_time(t: f64, horizon: f64) -> Result<f64> {
    if !(horizon > 0.0) {
        return Err(Error::invalid(format!(
            "horizon must be positive, got {horizon}"
        )));
    }
    Ok(t / horizon)
}

const CSV_HEADER: [&str; 6] = ["task_id", "bus_id", "phase", "quantity", "timestamp_s", "value"];

/// Reads the measurement CSV format, grouping rows by task id. Rows of a task
/// must agree on identity fields; samples are sorted by timestamp.
pub fn read_measurements_csv(path: impl AsRef<Path>) -> Result<Vec<TimeSeriesTask>> {
    let path = path.as_ref();
    let pstr = path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: pstr.clone(),
        line: 0,
        msg: e.to_string(),
    })?;
    let hdr = rdr.headers().map_err(|e| Error::Parse {
        path: pstr.clone(),
        line: 1,
        msg: e.to_string(),
    })?;
    if hdr.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(Error::Parse {
            path: pstr,
            line: 1,
            msg: format!("expected header {CSV_HEADER:?}"),
        });
    }
    // first-seen order of task ids is preserved
    let mut order: Vec<String> = Vec::new();
    let mut groups: std::collections::HashMap<String, (String, Phase, Quantity, Vec<(f64, f64)>)> =
        std::collections::HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let parse = |msg: String| Error::Parse {
            path: pstr.clone(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        if rec.len() != 6 {
            return Err(parse(format!("expected 6 fields, got {}", rec.len())));
        }
        let task_id = rec[0].to_string();
        let bus_id = rec[1].to_string();
        let phase =
            Phase::from_code(&rec[2]).ok_or_else(|| parse(format!("bad phase {:?}", &rec[2])))?;
        let quantity = Quantity::from_code(&rec[3])
            .ok_or_else(|| parse(format!("bad quantity {:?} (expected P_kW, Q_kVAr or V_pu)", &rec[3])))?;
        let t: f64 = rec[4]
            .parse()
            .map_err(|e| parse(format!("bad timestamp: {e}")))?;
        let v: f64 = rec[5]
            .parse()
            .map_err(|e| parse(format!("bad value: {e}")))?;
        match groups.get_mut(&task_id) {
            Some((b, p, q, samples)) => {
                if *b != bus_id || *p != phase || *q != quantity {
                    return Err(parse(format!(
                        "task {task_id} identity fields conflict with an earlier row"
                    )));
                }
                samples.push((t, v));
            }
            None => {
                order.push(task_id.clone());
                groups.insert(task_id, (bus_id, phase, quantity, vec![(t, v)]));
            }
        }
    }
    let mut out = Vec::with_capacity(order.len());
    for id in order {
        let (bus, phase, quantity, mut samples) = groups.remove(&id).unwrap();
        samples.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out.push(TimeSeriesTask::new(id, bus, phase, quantity, samples)?);
    }
    Ok(out)
}

pub fn write_measurements_csv(path: impl AsRef<Path>, tasks: &[TimeSeriesTask]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(CSV_HEADER.join(",").as_bytes());
    buf.push(b'\n');
    for task in tasks {
        for &(t, v) in task.samples() {
            writeln!(
                buf,
                "{},{},{},{},{},{}",
                task.task_id,
                task.bus_id,
                task.phase.code(),
                task.quantity.code(),
                t,
                v
            )?;
        }
    }
    crate::write_atomic(path, &buf)
}
