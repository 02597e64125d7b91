//! Small fully-connected network used as the shared trend (mean) function.
//! Forward pass, manual backprop and flat parameter views for the optimizer.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};

/// Feed-forward net with ReLU hidden activations and identity output.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanNet {
    dims: Vec<usize>,
    /// weights[l] has shape dims[l+1] x dims[l]
    weights: Vec<DMatrix<f64>>,
    biases: Vec<DVector<f64>>,
}

#[derive(Debug, Clone)]
pub struct MeanNetGrad {
    pub weights: Vec<DMatrix<f64>>,
    pub biases: Vec<DVector<f64>>,
}

/// Post-activation values per layer, kept for backprop.
pub struct ForwardCache {
    activations: Vec<DMatrix<f64>>,
}

impl MeanNet {
    /// Glorot-uniform initialization: U(±sqrt(6/(fan_in+fan_out))).
    pub fn new(dims: &[usize], rng: &mut impl Rng) -> Result<MeanNet> {
        if dims.len() < 2 || dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("bad layer dims {dims:?}")));
        }
        if *dims.last().unwrap() != 1 {
            return Err(Error::invalid("output dimension must be 1"));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..dims.len() - 1 {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DMatrix::from_fn(fan_out, fan_in, |_, _| {
                rng.gen_range(-bound..bound)
            }));
            biases.push(DVector::zeros(fan_out));
        }
        Ok(MeanNet {
            dims: dims.to_vec(),
            weights,
            biases,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    /// Evaluates the net on a batch (rows are inputs).
    pub fn forward(&self, inputs: &DMatrix<f64>) -> Result<DVector<f64>> {
        Ok(self.forward_cached(inputs)?.0)
    }

    pub fn forward_cached(&self, inputs: &DMatrix<f64>) -> Result<(DVector<f64>, ForwardCache)> {
        if inputs.ncols() != self.dims[0] {
            return Err(Error::invalid(format!(
                "input dimension {} does not match layer dims {:?}",
                inputs.ncols(),
                self.dims
            )));
        }
        let n_layers = self.weights.len();
        let mut activations = Vec::with_capacity(n_layers + 1);
        activations.push(inputs.clone());
        for l in 0..n_layers {
            let mut z = activations[l].clone() * self.weights[l].transpose();
            for mut row in z.row_iter_mut() {
                row += self.biases[l].transpose();
            }
            if l + 1 < n_layers {
                z.apply(|v| *v = v.max(0.0));
            }
            activations.push(z);
        }
        let out = DVector::from_column_slice(activations[n_layers].column(0).as_slice());
        Ok((out, ForwardCache { activations }))
    }

    /// Backprop of a per-point output gradient through the cached forward
    /// pass. Returns gradients in the same shapes as the parameters.
    pub fn backward(&self, cache: &ForwardCache, out_grad: &DVector<f64>) -> MeanNetGrad {
        let n_layers = self.weights.len();
        let mut grad = self.zeros_grad();
        let mut delta = DMatrix::from_column_slice(out_grad.len(), 1, out_grad.as_slice());
        for l in (0..n_layers).rev() {
            grad.weights[l] = delta.transpose() * &cache.activations[l];
            grad.biases[l] = DVector::from_iterator(
                delta.ncols(),
                delta.column_iter().map(|c| c.sum()),
            );
            if l > 0 {
                let mut back = delta * &self.weights[l];
                back.zip_apply(&cache.activations[l], |g, a| {
                    if a <= 0.0 {
                        *g = 0.0;
                    }
                });
                delta = back;
            }
        }
        grad
    }

    pub fn zeros_grad(&self) -> MeanNetGrad {
        MeanNetGrad {
            weights: self
                .weights
                .iter()
                .map(|w| DMatrix::zeros(w.nrows(), w.ncols()))
                .collect(),
            biases: self.biases.iter().map(|b| DVector::zeros(b.len())).collect(),
        }
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum::<usize>()
            + self.biases.iter().map(|b| b.len()).sum::<usize>()
    }

    /// Parameters as a flat vector: per layer, row-major weights then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in 0..self.weights.len() {
            push_row_major(&self.weights[l], &mut out);
            out.extend_from_slice(self.biases[l].as_slice());
        }
        out
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.n_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                self.n_params(),
                flat.len()
            )));
        }
        let mut k = 0;
        for l in 0..self.weights.len() {
            let w = &mut self.weights[l];
            for i in 0..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] = flat[k];
                    k += 1;
                }
            }
            for i in 0..self.biases[l].len() {
                self.biases[l][i] = flat[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Row-major weight and bias arrays per layer, for serialization.
    pub fn layer_arrays(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for l in 0..self.weights.len() {
            let mut w = Vec::with_capacity(self.weights[l].len());
            push_row_major(&self.weights[l], &mut w);
            ws.push(w);
            bs.push(self.biases[l].as_slice().to_vec());
        }
        (ws, bs)
    }

    pub fn from_layer_arrays(
        dims: &[usize],
        weights: &[Vec<f64>],
        biases: &[Vec<f64>],
    ) -> Result<MeanNet> {
        if dims.len() < 2 || weights.len() != dims.len() - 1 || biases.len() != dims.len() - 1 {
            return Err(Error::invalid("layer array count does not match dims"));
        }
        let mut ws = Vec::new();
        let mut bs = Vec::new();
        for l in 0..dims.len() - 1 {
            let (rows, cols) = (dims[l + 1], dims[l]);
            if weights[l].len() != rows * cols || biases[l].len() != rows {
                return Err(Error::invalid(format!("layer {l} array size mismatch")));
            }
            ws.push(DMatrix::from_row_slice(rows, cols, &weights[l]));
            bs.push(DVector::from_column_slice(&biases[l]));
        }
        let net = MeanNet {
            dims: dims.to_vec(),
            weights: ws,
            biases: bs,
        };
        if net.flat_params().iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite parameter in layer arrays"));
        }
        Ok(net)
    }
}

impl MeanNetGrad {
    pub fn add_assign(&mut self, other: &MeanNetGrad) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            push_row_major(&self.weights[l], &mut out);
            out.extend_from_slice(self.biases[l].as_slice());
        }
        out
    }
}

fn push_row_major(m: &DMatrix<f64>, out: &mut Vec<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(vals: &[f64]) -> DMatrix<f64> {
        DMatrix::from_column_slice(vals.len(), 1, vals)
    }

    /// 1-1-1-1 net with every weight `w` and bias `b`.
    fn chain_net(w: f64, b: f64) -> MeanNet {
        MeanNet::from_layer_arrays(
            &[1, 1, 1, 1],
            &[vec![w], vec![w], vec![w]],
            &[vec![b], vec![b], vec![b]],
        )
        .unwrap()
    }

    #[test]
    fn zero_weights_output_bias() {
        let net = MeanNet::from_layer_arrays(
            &[1, 2, 1],
            &[vec![0.0; 2], vec![0.0; 2]],
            &[vec![0.0; 2], vec![3.5]],
        )
        .unwrap();
        let out = net.forward(&batch(&[-7.0, 0.0, 12.0])).unwrap();
        assert_eq!(out.as_slice(), &[3.5, 3.5, 3.5]);
    }

    #[test]
    fn relu_passes_positive_kills_negative() {
        let net = chain_net(1.0, 0.0);
        let out = net.forward(&batch(&[2.0, -5.0])).unwrap();
        assert_relative_eq!(out[0], 2.0);
        assert_relative_eq!(out[1], 0.0);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let net = chain_net(1.0, 0.0);
        let bad = DMatrix::from_row_slice(1, 2, &[0.0, 1.0]);
        assert!(net.forward(&bad).is_err());
    }

    #[test]
    fn flat_param_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut net = MeanNet::new(&[2, 4, 3, 1], &mut rng).unwrap();
        let flat = net.flat_params();
        assert_eq!(flat.len(), net.n_params());
        let mut shifted = flat.clone();
        for v in &mut shifted {
            *v += 0.25;
        }
        net.set_flat_params(&shifted).unwrap();
        assert_eq!(net.flat_params(), shifted);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let net = MeanNet::new(&[2, 5, 4, 1], &mut rng).unwrap();
        let inputs = DMatrix::from_fn(6, 2, |_, _| rng.gen_range(-1.0..1.0));
        let out_grad = DVector::from_fn(6, |i, _| 0.3 + 0.1 * i as f64);

        let (_, cache) = net.forward_cached(&inputs).unwrap();
        let analytic = net.backward(&cache, &out_grad).flat();

        // scalar objective: sum_i g_i * f(x_i)
        let eval = |flat: &[f64]| {
            let mut n = net.clone();
            n.set_flat_params(flat).unwrap();
            n.forward(&inputs).unwrap().dot(&out_grad)
        };
        let base = net.flat_params();
        let h = 1e-6;
        for (k, &g) in analytic.iter().enumerate() {
            let mut up = base.clone();
            up[k] += h;
            let mut dn = base.clone();
            dn[k] -= h;
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            assert_relative_eq!(g, fd, epsilon = 1e-6, max_relative = 1e-5);
        }
    }
}
