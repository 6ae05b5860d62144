//! Dense building blocks with hand-written backward passes.

use rand::Rng;

/// Affine map `y = W x + b` with a row-major `out_dim x in_dim` weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub out_dim: usize,
    pub in_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Linear {
    pub fn zeros(out_dim: usize, in_dim: usize) -> Self {
        Linear {
            out_dim,
            in_dim,
            weight: vec![0.0; out_dim * in_dim],
            bias: vec![0.0; out_dim],
        }
    }

    /// Uniform entries in `[-1/sqrt(in_dim), 1/sqrt(in_dim))`.
    pub fn init<R: Rng>(rng: &mut R, out_dim: usize, in_dim: usize) -> Self {
        let bound = init_bound(in_dim);
        Linear {
            out_dim,
            in_dim,
            weight: uniform_vec(rng, out_dim * in_dim, bound),
            bias: uniform_vec(rng, out_dim, bound),
        }
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| dot(row, x) + b)
            .collect()
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[f64], grad_out: &[f64], grad: &mut Linear) -> Vec<f64> {
        let mut grad_in = vec![0.0; self.in_dim];
        for (r, &g) in grad_out.iter().enumerate() {
            if g == 0.0 {
                continue;
            }
            let row = &self.weight[r * self.in_dim..(r + 1) * self.in_dim];
            let grow = &mut grad.weight[r * self.in_dim..(r + 1) * self.in_dim];
            for k in 0..self.in_dim {
                grow[k] += g * x[k];
                grad_in[k] += g * row[k];
            }
            grad.bias[r] += g;
        }
        grad_in
    }
}

pub fn init_bound(fan_in: usize) -> f64 {
    1.0 / (fan_in.max(1) as f64).sqrt()
}

pub fn uniform_vec<R: Rng>(rng: &mut R, len: usize, bound: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(-bound..bound)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn add_into(x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += xi;
    }
}

pub fn tanh_in_place(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// `grad * (1 - y^2)` for `y = tanh(u)`.
pub fn tanh_backward(y: &[f64], grad: &[f64]) -> Vec<f64> {
    y.iter().zip(grad).map(|(y, g)| g * (1.0 - y * y)).collect()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Backward of softmax: `dz_j = p_j (g_j - sum_k p_k g_k)`.
pub fn softmax_backward(probs: &[f64], grad: &[f64]) -> Vec<f64> {
    let inner = dot(probs, grad);
    probs.iter().zip(grad).map(|(p, g)| p * (g - inner)).collect()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let lin = Linear::init(&mut rng, 3, 4);
        let x = uniform_vec(&mut rng, 4, 1.0);
        let g = uniform_vec(&mut rng, 3, 1.0);
        let mut grad = Linear::zeros(3, 4);
        let gx = lin.backward(&x, &g, &mut grad);
        let f = |x: &[f64]| dot(&lin.forward(x), &g);
        for k in 0..4 {
            let mut xp = x.clone();
            xp[k] += 1e-6;
            let mut xm = x.clone();
            xm[k] -= 1e-6;
            let fd = (f(&xp) - f(&xm)) / 2e-6;
            assert!((fd - gx[k]).abs() < 1e-8);
        }
        assert_eq!(grad.bias, g);
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 999.0, -5.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(softmax(&[3.0]), vec![1.0]);
        assert!((sigmoid(-800.0)).abs() < 1e-300 && sigmoid(800.0) == 1.0);
    }
}
