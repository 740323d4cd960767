use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::RlError;

/// Fully connected Q-network: rectified-linear hidden layers, linear output.
/// Weights are row-major `out x in` per layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QNetwork {
    pub layer_sizes: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

/// Layer activations kept from a forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `activations[0]` is the input, the last entry the output.
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("at least input")
    }
}

impl QNetwork {
    pub fn zeros(layer_sizes: &[usize]) -> Self {
        assert!(layer_sizes.len() >= 2, "need input and output layers");
        let weights = layer_sizes.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        Self {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            biases,
        }
    }

    /// He-uniform weights, zero biases.
    pub fn random<R: Rng + ?Sized>(layer_sizes: &[usize], rng: &mut R) -> Self {
        let mut net = Self::zeros(layer_sizes);
        for (l, w) in net.weights.iter_mut().enumerate() {
            let bound = (6.0 / layer_sizes[l] as f64).sqrt();
            for x in w.iter_mut() {
                *x = rng.random_range(-bound..bound);
            }
        }
        net
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("non-empty")
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn is_finite(&self) -> bool {
        self.params().all(|p| p.is_finite())
    }

    /// Shape check used after deserialization.
    pub fn check_shape(&self) -> Result<(), String> {
        let n = self.layer_sizes.len();
        if n < 2 || self.weights.len() != n - 1 || self.biases.len() != n - 1 {
            return Err("layer count does not match weights/biases".into());
        }
        for l in 0..n - 1 {
            let (i, o) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            if self.weights[l].len() != i * o || self.biases[l].len() != o {
                return Err(format!("layer {l} has wrong parameter count"));
            }
        }
        Ok(())
    }

    pub fn params(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().zip(&self.biases).flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache, RlError> {
        if x.len() != self.input_size() || x.iter().any(|v| !v.is_finite()) {
            return Err(RlError::NonFiniteInput);
        }
        let layers = self.weights.len();
        let mut activations = Vec::with_capacity(layers + 1);
        activations.push(x.to_vec());
        for l in 0..layers {
            let (n_in, n_out) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let input = &activations[l];
            let w = &self.weights[l];
            let mut out = self.biases[l].clone();
            for (o, z) in out.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                *z += row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
                if l + 1 < layers {
                    *z = z.max(0.0);
                }
            }
            debug_assert_eq!(out.len(), n_out);
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Action values for one state.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, RlError> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.activations.pop().expect("output"))
    }

    /// Accumulates into `grads` the gradient of `sum_k d_out[k] * Q_k(x)`
    /// with respect to every parameter.
    pub fn backward(&self, cache: &ForwardCache, d_out: &[f64], grads: &mut QNetwork) {
        let layers = self.weights.len();
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let n_in = self.layer_sizes[l];
            let input = &cache.activations[l];
            let gw = &mut grads.weights[l];
            for (o, d) in delta.iter().enumerate() {
                if *d == 0.0 {
                    continue;
                }
                grads.biases[l][o] += d;
                for (g, a) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(input) {
                    *g += d * a;
                }
            }
            if l == 0 {
                break;
            }
            let w = &self.weights[l];
            let mut prev = vec![0.0; n_in];
            for (o, d) in delta.iter().enumerate() {
                for (p, wv) in prev.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                    *p += d * wv;
                }
            }
            // ReLU derivative of the hidden layer feeding this one
            for (p, a) in prev.iter_mut().zip(input) {
                if *a <= 0.0 {
                    *p = 0.0;
                }
            }
            delta = prev;
        }
    }
}

pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Adaptive-moment optimizer state.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(num_params: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
            t: 0,
        }
    }

    /// One descent step along `grads`.
    pub fn step(&mut self, net: &mut QNetwork, grads: &QNetwork) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in net
            .params_mut()
            .zip(grads.params())
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_zero_output() {
        let net = QNetwork::zeros(&[6, 64, 64, 4]);
        assert_eq!(net.forward(&[1.0, -2.0, 3.0, 0.5, 0.1, 9.0]).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn single_unit_chain_by_hand() {
        let mut net = QNetwork::zeros(&[1, 1, 1, 1]);
        net.weights = vec![vec![2.0], vec![-3.0], vec![0.5]];
        net.biases = vec![vec![1.0], vec![10.0], vec![-1.0]];
        // x = 2: h1 = relu(5) = 5, h2 = relu(-15 + 10) = 0, y = -1
        assert_eq!(net.forward(&[2.0]).unwrap(), vec![-1.0]);
        // x = -1: h1 = relu(-1) = 0, h2 = relu(10) = 10, y = 4
        assert_eq!(net.forward(&[-1.0]).unwrap(), vec![4.0]);
    }

    #[test]
    fn rejects_non_finite_input() {
        let net = QNetwork::zeros(&[2, 3, 1]);
        assert!(matches!(net.forward(&[f64::NAN, 0.0]), Err(RlError::NonFiniteInput)));
        assert!(matches!(net.forward(&[0.0]), Err(RlError::NonFiniteInput)));
    }

    #[test]
    fn adam_decreases_a_quadratic() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = QNetwork::random(&[2, 8, 1], &mut rng);
        let mut opt = Adam::new(net.num_params(), 1e-2);
        let x = [0.3, -0.7];
        let loss = |n: &QNetwork| (n.forward(&x).unwrap()[0] - 2.0).powi(2);
        let before = loss(&net);
        for _ in 0..200 {
            let cache = net.forward_cached(&x).unwrap();
            let mut g = QNetwork::zeros(&net.layer_sizes);
            net.backward(&cache, &[2.0 * (cache.output()[0] - 2.0)], &mut g);
            opt.step(&mut net, &g);
        }
        assert!(loss(&net) < 1e-3 * before.max(1.0));
    }
}
