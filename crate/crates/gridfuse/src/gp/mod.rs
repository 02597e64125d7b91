//! Multi-task GP prior with a shared MLP mean and RBF kernel: log marginal
//! likelihood, analytic gradients, posterior prediction and confidence
//! intervals.

pub mod kernel;
pub mod mean_net;
mod train;

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::timeseries::{standardize_task, TimeSeriesTask};

pub use kernel::{factor_system, kernel_cross, kernel_matrix, rbf_kernel, KernelParams};
pub use mean_net::{MeanNet, MeanNetGrad};
pub use train::{daily_encoder, train_prior, TrainConfig, TrainOutcome};

/// How a task's samples are encoded as mean-network inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum InputEncoding {
    /// Normalized time only (d_in = 1).
    TimeOnly,
    /// Normalized time, one-hot quantity and normalized bus depth (d_in = 5).
    TimePlusTaskFeatures,
}

impl InputEncoding {
    pub fn input_dim(self) -> usize {
        match self {
            InputEncoding::TimeOnly => 1,
            InputEncoding::TimePlusTaskFeatures => 5,
        }
    }
}

/// Builds mean-net inputs and normalized kernel inputs for a task.
#[derive(Debug, Clone)]
pub struct TaskEncoder {
    pub encoding: InputEncoding,
    /// Horizon mapping raw timestamps onto [0,1]; kernel length-scales are in
    /// these normalized units.
    pub horizon: f64,
    /// Normalized bus depth per bus id, used by `TimePlusTaskFeatures`.
    pub bus_depth: HashMap<String, f64>,
}

impl TaskEncoder {
    pub fn time_only(horizon: f64) -> TaskEncoder {
        TaskEncoder {
            encoding: InputEncoding::TimeOnly,
            horizon,
            bus_depth: HashMap::new(),
        }
    }

    pub fn normalize(&self, t: f64) -> f64 {
        t / self.horizon
    }

    pub fn encode_times(&self, task: &TimeSeriesTask, times: &[f64]) -> DMatrix<f64> {
        match self.encoding {
            InputEncoding::TimeOnly => {
                DMatrix::from_fn(times.len(), 1, |i, _| self.normalize(times[i]))
            }
            InputEncoding::TimePlusTaskFeatures => {
                let onehot = match task.quantity {
                    crate::timeseries::Quantity::ActivePowerKw => [1.0, 0.0, 0.0],
                    crate::timeseries::Quantity::ReactivePowerKvar => [0.0, 1.0, 0.0],
                    crate::timeseries::Quantity::VoltageMagPu => [0.0, 0.0, 1.0],
                };
                let depth = self.bus_depth.get(&task.bus_id).copied().unwrap_or(0.0);
                DMatrix::from_fn(times.len(), 5, |i, j| match j {
                    0 => self.normalize(times[i]),
                    1..=3 => onehot[j - 1],
                    _ => depth,
                })
            }
        }
    }
}

/// Shared trainable mean plus kernel hyperparameters.
#[derive(Debug, Clone)]
pub struct GpPrior {
    pub mean: MeanNet,
    pub kernel: KernelParams,
    pub encoding: InputEncoding,
}

#[derive(Serialize, Deserialize)]
struct PriorDoc {
    format_version: u32,
    layer_dims: Vec<usize>,
    /// Row-major weight matrix per layer.
    weights: Vec<Vec<f64>>,
    biases: Vec<Vec<f64>>,
    log_lengthscale: f64,
    log_signal_var: f64,
    log_noise_var: f64,
    encoding: InputEncoding,
}

const PRIOR_FORMAT_VERSION: u32 = 1;

impl GpPrior {
    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let (weights, biases) = self.mean.layer_arrays();
        let doc = PriorDoc {
            format_version: PRIOR_FORMAT_VERSION,
            layer_dims: self.mean.dims().to_vec(),
            weights,
            biases,
            log_lengthscale: self.kernel.log_lengthscale,
            log_signal_var: self.kernel.log_signal_var,
            log_noise_var: self.kernel.log_noise_var,
            encoding: self.encoding,
        };
        let text = serde_json::to_string_pretty(&doc)
            .map_err(|e| Error::invalid(format!("prior serialization failed: {e}")))?;
        crate::write_atomic(path, text.as_bytes())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<GpPrior> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        let doc: PriorDoc = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        if doc.format_version != PRIOR_FORMAT_VERSION {
            return Err(Error::invalid(format!(
                "unsupported prior format version {}",
                doc.format_version
            )));
        }
        Ok(GpPrior {
            mean: MeanNet::from_layer_arrays(&doc.layer_dims, &doc.weights, &doc.biases)?,
            kernel: KernelParams {
                log_lengthscale: doc.log_lengthscale,
                log_signal_var: doc.log_signal_var,
                log_noise_var: doc.log_noise_var,
            },
            encoding: doc.encoding,
        })
    }
}

/// Per-query posterior summary. `ci_halfwidth` is at the 95% level; use
/// `confidence_interval` for other levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorPrediction {
    pub query_times: Vec<f64>,
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    pub ci_halfwidth: Vec<f64>,
}

/// Two-sided standard-normal quantile for the given confidence level.
pub fn normal_quantile(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!(
            "confidence level must be in (0,1), got {level}"
        )));
    }
    let n = Normal::new(0.0, 1.0).expect("standard normal");
    Ok(n.inverse_cdf(0.5 + level / 2.0))
}

/// Per-point (lower, upper) bounds at the given confidence level.
pub fn confidence_interval(pred: &PosteriorPrediction, level: f64) -> Result<Vec<(f64, f64)>> {
    let z = normal_quantile(level)?;
    Ok(pred
        .mean
        .iter()
        .zip(&pred.variance)
        .map(|(&m, &v)| {
            let hw = z * v.max(0.0).sqrt();
            (m - hw, m + hw)
        })
        .collect())
}

/// Closed-form per-task log marginal likelihood
/// −½ rᵀ(K+σ²I)⁻¹r − ½ log|K+σ²I| − (n/2) log 2π, via Cholesky.
pub fn log_marginal_likelihood(
    prior: &GpPrior,
    encoder: &TaskEncoder,
    task: &TimeSeriesTask,
) -> Result<f64> {
    if task.is_empty() {
        return Err(Error::NoData(format!("task {} is empty", task.task_id)));
    }
    let times = task.times();
    let xs: Vec<f64> = times.iter().map(|&t| encoder.normalize(t)).collect();
    let sys = factor_system(&xs, &prior.kernel)?;
    let inputs = encoder.encode_times(task, &times);
    let m = prior.mean.forward(&inputs)?;
    let r = DVector::from_vec(task.values()) - m;
    let alpha = sys.chol.solve(&r);
    let n = task.len() as f64;
    let logdet: f64 = (0..task.len())
        .map(|i| sys.chol.l_dirty()[(i, i)].ln())
        .sum::<f64>()
        * 2.0;
    Ok(-0.5 * r.dot(&alpha) - 0.5 * logdet - 0.5 * n * (2.0 * PI).ln())
}

/// Gradient of the summed LML over {kernel log-params, mean parameters}.
#[derive(Debug, Clone)]
pub struct GpGradients {
    pub d_log_lengthscale: f64,
    pub d_log_signal_var: f64,
    pub d_log_noise_var: f64,
    pub mean: MeanNetGrad,
}

impl GpGradients {
    /// Flat layout: [log_lengthscale, log_signal_var, log_noise_var, mean...].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = vec![
            self.d_log_lengthscale,
            self.d_log_signal_var,
            self.d_log_noise_var,
        ];
        out.extend(self.mean.flat());
        out
    }
}

/// Summed LML and its analytic gradient over a set of tasks.
///
/// Kernel gradients use ½ tr((ααᵀ − A⁻¹)·∂A/∂θ) with A = K+σ²I and
/// α = A⁻¹r; mean gradients backpropagate ∂LML/∂m = α through the net.
pub fn lml_and_gradients(
    prior: &GpPrior,
    encoder: &TaskEncoder,
    tasks: &[TimeSeriesTask],
) -> Result<(f64, GpGradients)> {
    let mut total = 0.0;
    let mut grads = GpGradients {
        d_log_lengthscale: 0.0,
        d_log_signal_var: 0.0,
        d_log_noise_var: 0.0,
        mean: prior.mean.zeros_grad(),
    };
    let l2 = prior.kernel.lengthscale().powi(2);
    let noise = prior.kernel.noise_var();
    for task in tasks {
        if task.is_empty() {
            return Err(Error::NoData(format!("task {} is empty", task.task_id)));
        }
        let n = task.len();
        let times = task.times();
        let xs: Vec<f64> = times.iter().map(|&t| encoder.normalize(t)).collect();
        let sys = factor_system(&xs, &prior.kernel)?;
        let inputs = encoder.encode_times(task, &times);
        let (m, cache) = prior.mean.forward_cached(&inputs)?;
        let r = DVector::from_vec(task.values()) - m;
        let alpha = sys.chol.solve(&r);

        let logdet: f64 = (0..n).map(|i| sys.chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        total += -0.5 * r.dot(&alpha) - 0.5 * logdet - 0.5 * n as f64 * (2.0 * PI).ln();

        let a_inv = sys.chol.inverse();
        // B = ααᵀ − A⁻¹, contracted against the parameter direction matrices.
        let mut d_len = 0.0;
        let mut d_sig = 0.0;
        let mut d_noise = 0.0;
        for i in 0..n {
            for j in 0..n {
                let b = alpha[i] * alpha[j] - a_inv[(i, j)];
                let k = sys.kernel[(i, j)];
                let d = xs[i] - xs[j];
                d_sig += b * k;
                d_len += b * k * (d * d / l2);
                if i == j {
                    d_noise += b * noise;
                }
            }
        }
        grads.d_log_lengthscale += 0.5 * d_len;
        grads.d_log_signal_var += 0.5 * d_sig;
        grads.d_log_noise_var += 0.5 * d_noise;
        grads.mean.add_assign(&prior.mean.backward(&cache, &alpha));
    }
    Ok((total, grads))
}

/// Exact GP posterior at the query times given the observed task, in the
/// value space of the inputs (no standardization is applied here).
pub fn posterior_predict(
    prior: &GpPrior,
    encoder: &TaskEncoder,
    observed: &TimeSeriesTask,
    query_times: &[f64],
    include_noise: bool,
) -> Result<PosteriorPrediction> {
    if query_times.is_empty() {
        return Err(Error::invalid("query_times must be nonempty"));
    }
    let noise = prior.kernel.noise_var();
    let prior_var = prior.kernel.signal_var() + if include_noise { noise } else { 0.0 };
    let q_inputs = encoder.encode_times(observed, query_times);
    let mq = prior.mean.forward(&q_inputs)?;
    let qs: Vec<f64> = query_times.iter().map(|&t| encoder.normalize(t)).collect();

    if observed.is_empty() {
        let mean: Vec<f64> = mq.iter().copied().collect();
        let variance = vec![prior_var; query_times.len()];
        return Ok(finish_prediction(query_times, mean, variance));
    }

    let times = observed.times();
    let xs: Vec<f64> = times.iter().map(|&t| encoder.normalize(t)).collect();
    let sys = factor_system(&xs, &prior.kernel)?;
    let inputs = encoder.encode_times(observed, &times);
    let m = prior.mean.forward(&inputs)?;
    let r = DVector::from_vec(observed.values()) - m;
    let alpha = sys.chol.solve(&r);

    let k_cross = kernel_cross(&qs, &xs, &prior.kernel);
    let mean_vec = mq + &k_cross * &alpha;
    // A⁻¹ K^{x*}, solved column-wise against the factorization
    let solved = sys.chol.solve(&k_cross.transpose());
    let mut variance = Vec::with_capacity(query_times.len());
    for j in 0..query_times.len() {
        let reduction = (k_cross.row(j) * solved.column(j))[(0, 0)];
        let mut v = prior.kernel.signal_var() - reduction;
        if include_noise {
            v += noise;
        }
        variance.push(v.max(0.0));
    }
    Ok(finish_prediction(
        query_times,
        mean_vec.iter().copied().collect(),
        variance,
    ))
}

fn finish_prediction(
    query_times: &[f64],
    mean: Vec<f64>,
    variance: Vec<f64>,
) -> PosteriorPrediction {
    let z = normal_quantile(0.95).expect("fixed level");
    let ci_halfwidth = variance.iter().map(|&v| z * v.max(0.0).sqrt()).collect();
    PosteriorPrediction {
        query_times: query_times.to_vec(),
        mean,
        variance,
        ci_halfwidth,
    }
}

/// Full imputation pipeline for one task: standardize, predict with the
/// shared prior, destandardize, and pass observed values through untouched at
/// grid instants that coincide with a sample.
pub fn impute_on_grid(
    prior: &GpPrior,
    encoder: &TaskEncoder,
    observed: &TimeSeriesTask,
    query_times: &[f64],
    include_noise: bool,
) -> Result<PosteriorPrediction> {
    if observed.is_empty() {
        return posterior_predict(prior, encoder, observed, query_times, include_noise);
    }
    let (std_task, std) = standardize_task(observed)?;
    let mut pred = posterior_predict(prior, encoder, &std_task, query_times, include_noise)?;
    for m in &mut pred.mean {
        *m = std.destandardize(*m);
    }
    for v in &mut pred.variance {
        *v *= std.std * std.std;
    }
    for hw in &mut pred.ci_halfwidth {
        *hw *= std.std;
    }
    let samples = observed.samples();
    for (i, &t) in query_times.iter().enumerate() {
        if let Some(v) = sample_at(samples, t) {
            pred.mean[i] = v;
        }
    }
    Ok(pred)
}

fn sample_at(samples: &[(f64, f64)], t: f64) -> Option<f64> {
    let i = samples.partition_point(|&(st, _)| st < t - 1e-6);
    if i < samples.len() && (samples[i].0 - t).abs() <= 1e-6 {
        Some(samples[i].1)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::{Phase, Quantity};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn zero_mean_prior(lengthscale: f64, signal_var: f64, noise_var: f64) -> GpPrior {
        GpPrior {
            mean: MeanNet::from_layer_arrays(
                &[1, 2, 1],
                &[vec![0.0; 2], vec![0.0; 2]],
                &[vec![0.0; 2], vec![0.0]],
            )
            .unwrap(),
            kernel: KernelParams::from_natural(lengthscale, signal_var, noise_var).unwrap(),
            encoding: InputEncoding::TimeOnly,
        }
    }

    fn make_task(samples: Vec<(f64, f64)>) -> TimeSeriesTask {
        TimeSeriesTask::new("t", "b", Phase::A, Quantity::ActivePowerKw, samples).unwrap()
    }

    /// encoder with horizon 1 so raw times are already normalized
    fn unit_encoder() -> TaskEncoder {
        TaskEncoder::time_only(1.0)
    }

    #[test]
    fn lml_scalar_cases() {
        let prior = zero_mean_prior(1.0, 1.0, 0.0);
        let enc = unit_encoder();
        let t0 = make_task(vec![(0.0, 0.0)]);
        assert_relative_eq!(
            log_marginal_likelihood(&prior, &enc, &t0).unwrap(),
            -0.918_938_5,
            epsilon = 1e-6
        );
        let t1 = make_task(vec![(0.0, 1.0)]);
        assert_relative_eq!(
            log_marginal_likelihood(&prior, &enc, &t1).unwrap(),
            -1.418_938_5,
            epsilon = 1e-6
        );
    }

    #[test]
    fn lml_sum_over_tasks_matches_per_task_sum() {
        let prior = zero_mean_prior(0.5, 1.3, 0.05);
        let enc = unit_encoder();
        let tasks = vec![
            make_task(vec![(0.0, 0.3), (0.4, -0.2), (1.0, 0.8)]),
            make_task(vec![(0.1, 1.0), (0.9, -1.0)]),
        ];
        let per_task: f64 = tasks
            .iter()
            .map(|t| log_marginal_likelihood(&prior, &enc, t).unwrap())
            .sum();
        let (total, _) = lml_and_gradients(&prior, &enc, &tasks).unwrap();
        assert_relative_eq!(total, per_task, epsilon = 1e-10);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let prior = zero_mean_prior(0.5, 1.3, 0.05);
        let enc = unit_encoder();
        let a = make_task(vec![(0.0, 0.3), (0.4, -0.2), (1.0, 0.8)]);
        let b = make_task(vec![(0.1, 1.0), (0.9, -1.0)]);
        let (_, ga) = lml_and_gradients(&prior, &enc, std::slice::from_ref(&a)).unwrap();
        let (_, gb) = lml_and_gradients(&prior, &enc, std::slice::from_ref(&b)).unwrap();
        let (_, gab) = lml_and_gradients(&prior, &enc, &[a, b]).unwrap();
        let sum: Vec<f64> = ga.flat().iter().zip(gb.flat()).map(|(x, y)| x + y).collect();
        for (s, t) in sum.iter().zip(gab.flat()) {
            assert_relative_eq!(s, &t, epsilon = 1e-12);
        }
    }

    fn grad_check(n: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let prior = GpPrior {
            mean: MeanNet::new(&[1, 6, 5, 1], &mut rng).unwrap(),
            kernel: KernelParams::from_natural(
                rng.gen_range(0.1..0.6),
                rng.gen_range(0.5..2.0),
                rng.gen_range(0.01..0.1),
            )
            .unwrap(),
            encoding: InputEncoding::TimeOnly,
        };
        let enc = unit_encoder();
        let mut t = 0.0;
        let samples: Vec<(f64, f64)> = (0..n)
            .map(|_| {
                t += rng.gen_range(0.02..0.2);
                (t, rng.gen_range(-2.0..2.0))
            })
            .collect();
        let task = make_task(samples);
        let tasks = vec![task];
        let (_, g) = lml_and_gradients(&prior, &enc, &tasks).unwrap();
        let analytic = g.flat();

        let eval = |flat: &[f64]| {
            let mut p = prior.clone();
            p.kernel.log_lengthscale = flat[0];
            p.kernel.log_signal_var = flat[1];
            p.kernel.log_noise_var = flat[2];
            p.mean.set_flat_params(&flat[3..]).unwrap();
            log_marginal_likelihood(&p, &enc, &tasks[0]).unwrap()
        };
        let mut base = vec![
            prior.kernel.log_lengthscale,
            prior.kernel.log_signal_var,
            prior.kernel.log_noise_var,
        ];
        base.extend(prior.mean.flat_params());
        let h = 1e-5;
        let mut max_rel = 0.0f64;
        for k in 0..base.len() {
            let mut up = base.clone();
            up[k] += h;
            let mut dn = base.clone();
            dn[k] -= h;
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            let rel = (analytic[k] - fd).abs() / analytic[k].abs().max(fd.abs()).max(1e-3);
            max_rel = max_rel.max(rel);
        }
        max_rel
    }

    #[test]
    fn gradients_match_finite_differences() {
        assert!(grad_check(8, 42) < 1e-4);
    }

    #[test]
    fn posterior_prior_fallback_when_unobserved() {
        let prior = zero_mean_prior(1.0, 1.0, 0.04);
        let enc = unit_encoder();
        let empty = make_task(vec![]);
        let pred = posterior_predict(&prior, &enc, &empty, &[0.0, 0.5], false).unwrap();
        assert_eq!(pred.mean, vec![0.0, 0.0]);
        assert_eq!(pred.variance, vec![1.0, 1.0]);
        let pred = posterior_predict(&prior, &enc, &empty, &[0.0], true).unwrap();
        assert_relative_eq!(pred.variance[0], 1.04);
    }

    #[test]
    fn posterior_noiseless_interpolation_and_distance_one() {
        let prior = zero_mean_prior(1.0, 1.0, 0.0);
        let enc = unit_encoder();
        let obs = make_task(vec![(0.0, 1.0)]);
        let pred = posterior_predict(&prior, &enc, &obs, &[0.0], false).unwrap();
        assert_relative_eq!(pred.mean[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(pred.variance[0], 0.0, epsilon = 1e-12);

        let pred = posterior_predict(&prior, &enc, &obs, &[1.0], false).unwrap();
        assert_relative_eq!(pred.mean[0], (-0.5f64).exp(), epsilon = 1e-10);
        assert_relative_eq!(pred.variance[0], 1.0 - (-1.0f64).exp(), epsilon = 1e-10);
    }

    #[test]
    fn posterior_variance_never_exceeds_prior() {
        let prior = zero_mean_prior(0.3, 1.7, 0.02);
        let enc = unit_encoder();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut t = 0.0;
        let samples: Vec<(f64, f64)> = (0..12)
            .map(|_| {
                t += rng.gen_range(0.01..0.15);
                (t, rng.gen_range(-2.0..2.0))
            })
            .collect();
        let obs = make_task(samples);
        let queries: Vec<f64> = (0..50).map(|i| i as f64 / 25.0).collect();
        for &include_noise in &[false, true] {
            let pred = posterior_predict(&prior, &enc, &obs, &queries, include_noise).unwrap();
            let prior_var = 1.7 + if include_noise { 0.02 } else { 0.0 };
            for &v in &pred.variance {
                assert!(v <= prior_var + 1e-10);
                assert!(v >= 0.0);
            }
        }
    }

    #[test]
    fn posterior_reverts_to_prior_far_from_observations() {
        let prior = zero_mean_prior(0.05, 1.0, 0.0);
        let enc = unit_encoder();
        let obs = make_task(vec![(0.0, 2.0), (0.02, 1.5)]);
        // 10 lengthscales away
        let pred = posterior_predict(&prior, &enc, &obs, &[0.6], false).unwrap();
        assert_relative_eq!(pred.mean[0], 0.0, epsilon = 1e-6);
        assert_relative_eq!(pred.variance[0], 1.0, epsilon = 1e-6);
    }

    #[test]
    fn posterior_mean_reproduces_observations_noiselessly() {
        let prior = zero_mean_prior(0.2, 1.0, 0.0);
        let enc = unit_encoder();
        let obs = make_task(vec![(0.1, 0.7), (0.35, -0.4), (0.8, 1.2)]);
        let pred = posterior_predict(&prior, &enc, &obs, &[0.1, 0.35, 0.8], false).unwrap();
        assert_relative_eq!(pred.mean[0], 0.7, epsilon = 1e-8);
        assert_relative_eq!(pred.mean[1], -0.4, epsilon = 1e-8);
        assert_relative_eq!(pred.mean[2], 1.2, epsilon = 1e-8);
    }

    #[test]
    fn confidence_interval_examples() {
        let pred = PosteriorPrediction {
            query_times: vec![0.0, 1.0],
            mean: vec![0.0, 3.0],
            variance: vec![1.0, 0.0],
            ci_halfwidth: vec![0.0, 0.0],
        };
        let ci = confidence_interval(&pred, 0.95).unwrap();
        assert_relative_eq!(ci[0].0, -1.959_964, epsilon = 1e-5);
        assert_relative_eq!(ci[0].1, 1.959_964, epsilon = 1e-5);
        assert_eq!(ci[1], (3.0, 3.0));

        let wide = confidence_interval(&pred, 0.99).unwrap();
        assert!(wide[0].0 < ci[0].0 && wide[0].1 > ci[0].1);

        assert!(confidence_interval(&pred, 0.0).is_err());
        assert!(confidence_interval(&pred, 1.0).is_err());
    }

    #[test]
    fn impute_passes_observed_values_through() {
        let prior = zero_mean_prior(0.1, 1.0, 0.01);
        let enc = TaskEncoder::time_only(86_400.0);
        let obs = make_task(vec![(0.0, 10.0), (900.0, 12.0), (1800.0, 11.0)]);
        let grid: Vec<f64> = (0..31).map(|i| i as f64 * 60.0).collect();
        let pred = impute_on_grid(&prior, &enc, &obs, &grid, true).unwrap();
        assert_eq!(pred.mean[0], 10.0);
        assert_eq!(pred.mean[15], 12.0);
        assert_eq!(pred.mean[30], 11.0);
    }

    #[test]
    fn prior_save_load_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let prior = GpPrior {
            mean: MeanNet::new(&[1, 4, 3, 1], &mut rng).unwrap(),
            kernel: KernelParams::from_natural(0.17, 1.4, 0.02).unwrap(),
            encoding: InputEncoding::TimeOnly,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prior.json");
        prior.save_json(&path).unwrap();
        let back = GpPrior::load_json(&path).unwrap();
        assert_eq!(back.mean, prior.mean);
        assert_eq!(back.kernel, prior.kernel);
        assert_eq!(back.encoding, prior.encoding);
    }
}
