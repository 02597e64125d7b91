//! Snapshot state estimation by nuclear-norm matrix completion over the
//! structured per-bus state matrix (soft-impute / singular-value
//! soft-thresholding).

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feeder::FeederModel;

/// Columns of the state matrix, in fixed order.
pub const STATE_COLS: usize = 5;
pub const COL_RE_V: usize = 0;
pub const COL_IM_V: usize = 1;
pub const COL_V_MAG: usize = 2;
pub const COL_RE_S: usize = 3;
pub const COL_IM_S: usize = 4;

/// Partially known quantities at one bus for one snapshot.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BusMeasurement {
    pub re_v: Option<f64>,
    pub im_v: Option<f64>,
    pub v_mag: Option<f64>,
    pub re_s: Option<f64>,
    pub im_s: Option<f64>,
}

impl BusMeasurement {
    fn entries(&self) -> [Option<f64>; STATE_COLS] {
        [self.re_v, self.im_v, self.v_mag, self.re_s, self.im_s]
    }
}

/// n₁×5 masked snapshot matrix; masked-out entries hold 0.0 and are never
/// read as data.
#[derive(Debug, Clone, PartialEq)]
pub struct StateMatrix {
    pub values: DMatrix<f64>,
    pub mask: DMatrix<bool>,
    pub bus_order: Vec<String>,
}

impl StateMatrix {
    pub fn n_buses(&self) -> usize {
        self.bus_order.len()
    }

    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn mask_density(&self) -> f64 {
        self.observed_count() as f64 / (STATE_COLS * self.n_buses()) as f64
    }
}

/// Soft-impute solver parameters. `mu = None` selects
/// 1e-3 · ‖P_Ω(X)‖_F of the (column-scaled) observed matrix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionConfig {
    pub mu: Option<f64>,
    pub max_iters: usize,
    pub tol: f64,
    pub step: f64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        CompletionConfig {
            mu: None,
            max_iters: 500,
            tol: 1e-6,
            step: 1.0,
        }
    }
}

impl CompletionConfig {
    fn validate(&self) -> Result<()> {
        if let Some(mu) = self.mu {
            if !(mu > 0.0) {
                return Err(Error::invalid(format!("mu must be > 0, got {mu}")));
            }
        }
        if self.max_iters == 0 || !(self.tol > 0.0) || !(self.step > 0.0 && self.step <= 1.0) {
            return Err(Error::invalid(
                "max_iters must be >= 1, tol > 0, step in (0,1]",
            ));
        }
        Ok(())
    }
}

/// Builds the snapshot matrix row-per-bus in the order of `buses`.
pub fn build_state_matrix(
    snapshot: &[(String, BusMeasurement)],
    buses: &[String],
) -> Result<StateMatrix> {
    let index: std::collections::HashMap<&str, usize> = buses
        .iter()
        .enumerate()
        .map(|(i, b)| (b.as_str(), i))
        .collect();
    let mut values = DMatrix::zeros(buses.len(), STATE_COLS);
    let mut mask = DMatrix::from_element(buses.len(), STATE_COLS, false);
    for (bus, meas) in snapshot {
        let &row = index
            .get(bus.as_str())
            .ok_or_else(|| Error::invalid(format!("unknown bus id {bus:?}")))?;
        for (col, entry) in meas.entries().iter().enumerate() {
            if let Some(v) = entry {
                values[(row, col)] = *v;
                mask[(row, col)] = true;
            }
        }
    }
    Ok(StateMatrix {
        values,
        mask,
        bus_order: buses.to_vec(),
    })
}

/// U·diag(max(σᵢ−τ, 0))·Vᵀ from the SVD of `m`.
pub fn svd_soft_threshold(m: &DMatrix<f64>, tau: f64) -> Result<DMatrix<f64>> {
    if tau < 0.0 {
        return Err(Error::invalid(format!("tau must be >= 0, got {tau}")));
    }
    let svd = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?;
    let u = svd.u.as_ref().expect("u requested");
    let vt = svd.v_t.as_ref().expect("v_t requested");
    let mut s = svd.singular_values.clone();
    for v in s.iter_mut() {
        *v = (*v - tau).max(0.0);
    }
    let mut scaled_u = u.clone();
    for (j, mut col) in scaled_u.column_iter_mut().enumerate() {
        col *= s[j];
    }
    Ok(scaled_u * vt)
}

#[derive(Debug, Clone)]
pub struct SoftImputeReport {
    pub matrix: DMatrix<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// F(Z_k) = ½‖P_Ω(Z_k − X)‖²_F + μ‖Z_k‖_* per iteration.
    pub objective: Vec<f64>,
    pub mu: f64,
}

/// Proximal-gradient iteration on
/// F(Z) = ½‖P_Ω(Z − X)‖²_F + μ‖Z‖_*, starting from the zero-filled
/// observed matrix. Stops when the relative iterate change drops below
/// `tol`; non-convergence returns the last iterate with `converged = false`.
pub fn soft_impute(
    observed: &DMatrix<f64>,
    mask: &DMatrix<bool>,
    config: &CompletionConfig,
) -> Result<SoftImputeReport> {
    config.validate()?;
    if observed.shape() != mask.shape() {
        return Err(Error::invalid("value/mask shape mismatch"));
    }
    if !mask.iter().any(|&m| m) {
        return Err(Error::NoData("matrix has no observed entries".into()));
    }
    let x = DMatrix::from_fn(observed.nrows(), observed.ncols(), |i, j| {
        if mask[(i, j)] {
            observed[(i, j)]
        } else {
            0.0
        }
    });
    let mu = match config.mu {
        Some(mu) => mu,
        None => 1e-3 * x.norm(),
    };

    let fit_of = |z: &DMatrix<f64>| -> f64 {
        let mut fit = 0.0;
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                if mask[(i, j)] {
                    fit += (z[(i, j)] - x[(i, j)]).powi(2);
                }
            }
        }
        0.5 * fit
    };

    let mut z = x.clone();
    let initial_nuclear = nalgebra::SVD::try_new(z.clone(), false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD did not converge"))?
        .singular_values
        .iter()
        .sum::<f64>();
    let mut objective = vec![fit_of(&z) + mu * initial_nuclear];
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..config.max_iters {
        iterations += 1;
        let mut grad_step = z.clone();
        for i in 0..z.nrows() {
            for j in 0..z.ncols() {
                if mask[(i, j)] {
                    grad_step[(i, j)] -= config.step * (z[(i, j)] - x[(i, j)]);
                }
            }
        }
        // one SVD per iteration serves both the proximal step and the
        // nuclear-norm term of the recorded objective
        let svd = nalgebra::SVD::try_new(grad_step, true, true, f64::EPSILON, 0)
            .ok_or_else(|| Error::numerical("SVD did not converge"))?;
        let (u, vt) = (svd.u.as_ref().unwrap(), svd.v_t.as_ref().unwrap());
        let thresholded: Vec<f64> = svd
            .singular_values
            .iter()
            .map(|s| (s - config.step * mu).max(0.0))
            .collect();
        let mut z_next = DMatrix::zeros(z.nrows(), z.ncols());
        for (k, &s) in thresholded.iter().enumerate() {
            if s > 0.0 {
                z_next += s * u.column(k) * vt.row(k);
            }
        }
        let delta = (&z_next - &z).norm() / z.norm().max(1.0);
        z = z_next;
        objective.push(fit_of(&z) + mu * thresholded.iter().sum::<f64>());
        if delta < config.tol {
            converged = true;
            break;
        }
    }
    Ok(SoftImputeReport {
        matrix: z,
        converged,
        iterations,
        objective,
        mu,
    })
}

/// Completes a state matrix. Columns are centered on their observed mean
/// and scaled to comparable magnitude (max absolute centered value, floored
/// at 1e-6) before the soft-impute iteration, then mapped back afterward;
/// the reported objective is in centered/scaled space. Centering matters
/// for the voltage columns, which sit near 1 p.u. with small spread: the
/// low-rank fit then works on the deviations instead of spending its
/// singular values on a constant offset.
pub fn complete_matrix(x: &StateMatrix, config: &CompletionConfig) -> Result<SoftImputeReport> {
    let mut means = [0.0f64; STATE_COLS];
    let mut scales = [1e-6f64; STATE_COLS];
    for j in 0..STATE_COLS {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..x.n_buses() {
            if x.mask[(i, j)] {
                sum += x.values[(i, j)];
                count += 1;
            }
        }
        if count > 0 {
            means[j] = sum / count as f64;
        }
        for i in 0..x.n_buses() {
            if x.mask[(i, j)] {
                scales[j] = scales[j].max((x.values[(i, j)] - means[j]).abs());
            }
        }
    }
    let scaled = DMatrix::from_fn(x.n_buses(), STATE_COLS, |i, j| {
        if x.mask[(i, j)] {
            (x.values[(i, j)] - means[j]) / scales[j]
        } else {
            0.0
        }
    });
    let mut report = soft_impute(&scaled, &x.mask, config)?;
    for j in 0..STATE_COLS {
        for i in 0..x.n_buses() {
            report.matrix[(i, j)] = report.matrix[(i, j)] * scales[j] + means[j];
        }
    }
    Ok(report)
}

/// Per-bus estimated state read back from a completed matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BusState {
    pub bus_id: String,
    pub v: Complex64,
    pub v_mag: f64,
    pub s: Complex64,
    /// | |v| column − |Re(v)+jIm(v)| |, diagnostic only.
    pub consistency_residual: f64,
}

pub fn extract_states(z: &DMatrix<f64>, bus_order: &[String]) -> Result<Vec<BusState>> {
    if z.nrows() != bus_order.len() || z.ncols() != STATE_COLS {
        return Err(Error::invalid(format!(
            "expected {}x{} matrix, got {}x{}",
            bus_order.len(),
            STATE_COLS,
            z.nrows(),
            z.ncols()
        )));
    }
    Ok(bus_order
        .iter()
        .enumerate()
        .map(|(i, bus)| {
            let v = Complex64::new(z[(i, COL_RE_V)], z[(i, COL_IM_V)]);
            let v_mag = z[(i, COL_V_MAG)];
            BusState {
                bus_id: bus.clone(),
                v,
                v_mag,
                s: Complex64::new(z[(i, COL_RE_S)], z[(i, COL_IM_S)]),
                consistency_residual: (v_mag - v.norm()).abs(),
            }
        })
        .collect())
}

/// Subsamples the available entries to the requested fraction of available
/// data (uniform over entries, seeded), completes the matrix and extracts
/// states.
pub fn dsse_snapshot(
    measurements: &[(String, BusMeasurement)],
    feeder: &FeederModel,
    fad: f64,
    seed: u64,
    config: &CompletionConfig,
) -> Result<Vec<BusState>> {
    if !(fad > 0.0 && fad <= 1.0) {
        return Err(Error::invalid(format!("fad must be in (0,1], got {fad}")));
    }
    let buses = feeder.bus_ids();
    let mut matrix = build_state_matrix(measurements, &buses)?;
    let observed: Vec<(usize, usize)> = (0..matrix.n_buses())
        .flat_map(|i| (0..STATE_COLS).map(move |j| (i, j)))
        .filter(|&(i, j)| matrix.mask[(i, j)])
        .collect();
    let keep = ((fad * observed.len() as f64).round() as usize).max(1);
    if keep < observed.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let kept = rand::seq::index::sample(&mut rng, observed.len(), keep);
        let kept: std::collections::HashSet<usize> = kept.into_iter().collect();
        for (idx, &(i, j)) in observed.iter().enumerate() {
            if !kept.contains(&idx) {
                matrix.mask[(i, j)] = false;
                matrix.values[(i, j)] = 0.0;
            }
        }
    }
    let report = complete_matrix(&matrix, config)?;
    extract_states(&report.matrix, &matrix.bus_order)
}

const SNAPSHOT_HEADER: [&str; 7] = [
    "bus_id", "re_v", "im_v", "v_mag", "re_s", "im_s", "mask_bits",
];

/// Writes a snapshot matrix as CSV with a 5-char 0/1 mask string per row.
pub fn write_snapshot_csv(path: impl AsRef<Path>, m: &StateMatrix) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(SNAPSHOT_HEADER.join(",").as_bytes());
    buf.push(b'\n');
    for (i, bus) in m.bus_order.iter().enumerate() {
        let bits: String = (0..STATE_COLS)
            .map(|j| if m.mask[(i, j)] { '1' } else { '0' })
            .collect();
        writeln!(
            buf,
            "{},{},{},{},{},{},{}",
            bus,
            m.values[(i, 0)],
            m.values[(i, 1)],
            m.values[(i, 2)],
            m.values[(i, 3)],
            m.values[(i, 4)],
            bits
        )?;
    }
    crate::write_atomic(path, &buf)
}

pub fn read_snapshot_csv(path: impl AsRef<Path>) -> Result<StateMatrix> {
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
    if hdr.iter().collect::<Vec<_>>() != SNAPSHOT_HEADER {
        return Err(Error::Parse {
            path: pstr,
            line: 1,
            msg: format!("expected header {SNAPSHOT_HEADER:?}"),
        });
    }
    let mut bus_order = Vec::new();
    let mut rows: Vec<([f64; STATE_COLS], [bool; STATE_COLS])> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let line = i + 2;
        let parse = |msg: String| Error::Parse {
            path: pstr.clone(),
            line,
            msg,
        };
        let rec = rec.map_err(|e| parse(e.to_string()))?;
        if rec.len() != 7 {
            return Err(parse(format!("expected 7 fields, got {}", rec.len())));
        }
        bus_order.push(rec[0].to_string());
        let mut vals = [0.0; STATE_COLS];
        for (j, v) in vals.iter_mut().enumerate() {
            *v = rec[j + 1]
                .parse()
                .map_err(|e| parse(format!("bad value: {e}")))?;
        }
        let bits = &rec[6];
        if bits.len() != STATE_COLS || bits.chars().any(|c| c != '0' && c != '1') {
            return Err(parse(format!("bad mask_bits {bits:?}")));
        }
        let mut mask = [false; STATE_COLS];
        for (j, c) in bits.chars().enumerate() {
            mask[j] = c == '1';
        }
        rows.push((vals, mask));
    }
    let n = rows.len();
    let values = DMatrix::from_fn(n, STATE_COLS, |i, j| {
        if rows[i].1[j] {
            rows[i].0[j]
        } else {
            0.0
        }
    });
    let mask = DMatrix::from_fn(n, STATE_COLS, |i, j| rows[i].1[j]);
    Ok(StateMatrix {
        values,
        mask,
        bus_order,
    })
}
