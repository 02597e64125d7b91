//! RBF kernel, kernel matrices and robust Cholesky factorization.

use nalgebra::{Cholesky, DMatrix, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Log-parameterized RBF hyperparameters plus observation noise. Log values
/// are clamped to [-20, 20] during optimization so the exponentiated values
/// stay finite and positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub log_lengthscale: f64,
    pub log_signal_var: f64,
    pub log_noise_var: f64,
}

pub const LOG_PARAM_BOUND: f64 = 20.0;

impl KernelParams {
    /// From natural-space values (lengthscale in normalized-time units).
    pub fn from_natural(lengthscale: f64, signal_var: f64, noise_var: f64) -> Result<KernelParams> {
        if !(lengthscale > 0.0 && signal_var > 0.0 && noise_var >= 0.0) {
            return Err(Error::invalid(
                "lengthscale and signal variance must be > 0, noise variance >= 0",
            ));
        }
        Ok(KernelParams {
            log_lengthscale: lengthscale.ln(),
            log_signal_var: signal_var.ln(),
            // ln(0) -> -inf; clamp keeps the parameterization usable for exact tests
            log_noise_var: noise_var.ln().max(-1e6),
        })
    }

    pub fn lengthscale(&self) -> f64 {
        self.log_lengthscale.exp()
    }

    pub fn signal_var(&self) -> f64 {
        self.log_signal_var.exp()
    }

    pub fn noise_var(&self) -> f64 {
        self.log_noise_var.exp()
    }

    pub fn clamp_logs(&mut self) {
        self.log_lengthscale = self.log_lengthscale.clamp(-LOG_PARAM_BOUND, LOG_PARAM_BOUND);
        self.log_signal_var = self.log_signal_var.clamp(-LOG_PARAM_BOUND, LOG_PARAM_BOUND);
        self.log_noise_var = self.log_noise_var.clamp(-1e6, LOG_PARAM_BOUND);
    }
}

/// σ_s² · exp(−(x−x')² / (2 l²)).
pub fn rbf_kernel(x: f64, x2: f64, params: &KernelParams) -> f64 {
    let l = params.lengthscale();
    let d = x - x2;
    params.signal_var() * (-d * d / (2.0 * l * l)).exp()
}

/// Pairwise kernel matrix with `jitter` added to the diagonal.
pub fn kernel_matrix(xs: &[f64], params: &KernelParams, jitter: f64) -> DMatrix<f64> {
    let n = xs.len();
    let mut k = DMatrix::zeros(n, n);
    let sv = params.signal_var();
    let inv_2l2 = 0.5 / (params.lengthscale() * params.lengthscale());
    for i in 0..n {
        k[(i, i)] = sv + jitter;
        for j in 0..i {
            let d = xs[i] - xs[j];
            let v = sv * (-d * d * inv_2l2).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cross-covariance between two point sets (rows: xs, cols: xs2).
pub fn kernel_cross(xs: &[f64], xs2: &[f64], params: &KernelParams) -> DMatrix<f64> {
    let sv = params.signal_var();
    let inv_2l2 = 0.5 / (params.lengthscale() * params.lengthscale());
    DMatrix::from_fn(xs.len(), xs2.len(), |i, j| {
        let d = xs[i] - xs2[j];
        sv * (-d * d * inv_2l2).exp()
    })
}

/// Factorization of K(xs) + σ²I. The first attempt uses no jitter so that
/// noiseless closed-form cases stay exact; on failure the jitter escalates
/// from 1e-6·σ_s² by factors of 10 up to 1e-4·σ_s².
pub struct FactoredSystem {
    pub kernel: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub jitter: f64,
}

pub fn factor_system(xs: &[f64], params: &KernelParams) -> Result<FactoredSystem> {
    let noise = params.noise_var();
    let jitters = [
        0.0,
        1e-6 * params.signal_var(),
        1e-5 * params.signal_var(),
        1e-4 * params.signal_var(),
    ];
    for &jitter in &jitters {
        let kernel = kernel_matrix(xs, params, jitter);
        let mut a = kernel.clone();
        for i in 0..xs.len() {
            a[(i, i)] += noise;
        }
        if let Some(chol) = Cholesky::new(a) {
            return Ok(FactoredSystem {
                kernel,
                chol,
                jitter,
            });
        }
    }
    Err(Error::numerical(format!(
        "Cholesky of {0}x{0} kernel system failed after jitter escalation to 1e-4*signal_var",
        xs.len()
    )))
}
