//! Gaussian MLP policy and value networks.
//!
//! The policy maps an observation to the mean of a diagonal Gaussian; the
//! log standard deviation is a free, state-independent vector stored at the
//! tail of the flat parameter vector. Sampled actions are clamped to the
//! action box and densities are evaluated at the raw, pre-clamp sample.
//!
//! All derivatives are analytic: reverse mode for gradients, forward mode
//! (a Jacobian-vector product of the mean network) for Fisher-vector
//! products.

pub mod adam;
pub mod mlp;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use adam::Adam;
pub use mlp::Mlp;

use crate::error::{Error, Result};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
pub const LOG_STD_INIT: f64 = -0.5;

const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistParams {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
}

impl DistParams {
    pub fn log_prob(&self, action: &[f64]) -> f64 {
        gaussian_log_prob(&self.mean, &self.log_std, action)
    }

    /// Raw (unclamped) draw `mean + std ⊙ ε`.
    pub fn sample(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.log_std)
            .map(|(&m, &s)| {
                let eps: f64 = rng.sample(StandardNormal);
                m + s.exp() * eps
            })
            .collect()
    }
}

fn gaussian_log_prob(mean: &[f64], log_std: &[f64], x: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(x)
        .map(|((&m, &s), &a)| {
            let z = (a - m) * (-s).exp();
            -0.5 * z * z - s - HALF_LOG_TWO_PI
        })
        .sum()
}

fn clamp_log_std(raw: f64) -> (f64, f64) {
    if raw < LOG_STD_MIN {
        (LOG_STD_MIN, 0.0)
    } else if raw > LOG_STD_MAX {
        (LOG_STD_MAX, 0.0)
    } else {
        (raw, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    net: Mlp,
    flat: Vec<f64>,
}

/// Everything the trust-region step needs from one sampled batch, frozen at
/// the behaviour policy.
#[derive(Debug, Clone)]
pub struct PolicyBatch {
    pub observations: Array2<f64>,
    pub raw_actions: Array2<f64>,
    pub old_means: Array2<f64>,
    pub old_log_std: Vec<f64>,
    pub old_log_probs: Vec<f64>,
}

impl PolicyBatch {
    pub fn new(policy: &PolicyParams, observations: Array2<f64>, raw_actions: Array2<f64>) -> Self {
        let (old_means, old_log_std) = policy.forward_batch(observations.view());
        let old_log_probs = (0..observations.nrows())
            .map(|i| {
                gaussian_log_prob(
                    old_means.row(i).as_slice().unwrap(),
                    &old_log_std,
                    raw_actions.row(i).as_slice().unwrap(),
                )
            })
            .collect();
        PolicyBatch {
            observations,
            raw_actions,
            old_means,
            old_log_std,
            old_log_probs,
        }
    }

    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl PolicyParams {
    /// `hidden` are the hidden layer widths; hidden weights use gain √2 and
    /// the mean head gain 0.01.
    pub fn new(input: usize, hidden: &[usize], action_dim: usize, rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(action_dim);
        let net = Mlp::new(sizes)?;
        let mut flat = net.init(rng, std::f64::consts::SQRT_2, 0.01);
        flat.extend(std::iter::repeat_n(LOG_STD_INIT, action_dim));
        Ok(PolicyParams { net, flat })
    }

    pub fn from_flat(net: Mlp, flat: Vec<f64>) -> Result<Self> {
        let p = PolicyParams { net, flat: Vec::new() };
        p.check_len(&flat)?;
        Ok(PolicyParams { flat, ..p })
    }

    fn check_len(&self, flat: &[f64]) -> Result<()> {
        let want = self.param_count();
        if flat.len() != want {
            return Err(Error::Contract(format!("policy expects {want} parameters, got {}", flat.len())));
        }
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(Error::Contract("non-finite policy parameter".into()));
        }
        Ok(())
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn set_flat(&mut self, flat: Vec<f64>) -> Result<()> {
        self.check_len(&flat)?;
        self.flat = flat;
        Ok(())
    }

    /// A copy with `flat + step`.
    pub fn offset(&self, step: &[f64]) -> PolicyParams {
        let flat = self.flat.iter().zip(step).map(|(a, b)| a + b).collect();
        PolicyParams {
            net: self.net.clone(),
            flat,
        }
    }

    pub fn param_count(&self) -> usize {
        self.net.param_count() + self.action_dim()
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    fn net_params(&self) -> &[f64] {
        &self.flat[..self.net.param_count()]
    }

    pub fn log_std(&self) -> Vec<f64> {
        self.flat[self.net.param_count()..].iter().map(|&s| clamp_log_std(s).0).collect()
    }

    pub fn forward(&self, observation: &[f64]) -> DistParams {
        DistParams {
            mean: self.net.predict_one(self.net_params(), observation).to_vec(),
            log_std: self.log_std(),
        }
    }

    pub fn forward_batch(&self, observations: ArrayView2<f64>) -> (Array2<f64>, Vec<f64>) {
        let cache = self.net.forward(self.net_params(), observations);
        (cache.output().clone(), self.log_std())
    }

    /// Importance-weighted surrogate `mean_i exp(logπ(a_i) − logπ_old(a_i))·A_i`.
    pub fn surrogate(&self, batch: &PolicyBatch, advantages: &[f64]) -> f64 {
        let (means, log_std) = self.forward_batch(batch.observations.view());
        let n = batch.len() as f64;
        (0..batch.len())
            .map(|i| {
                let lp = gaussian_log_prob(
                    means.row(i).as_slice().unwrap(),
                    &log_std,
                    batch.raw_actions.row(i).as_slice().unwrap(),
                );
                (lp - batch.old_log_probs[i]).exp() * advantages[i]
            })
            .sum::<f64>()
            / n
    }

    pub fn surrogate_grad(&self, batch: &PolicyBatch, advantages: &[f64]) -> (f64, Vec<f64>) {
        let np = self.net.param_count();
        let cache = self.net.forward(self.net_params(), batch.observations.view());
        let means = cache.output();
        let log_std = self.log_std();
        let inv_var: Vec<f64> = log_std.iter().map(|s| (-2.0 * s).exp()).collect();
        let n = batch.len() as f64;
        let a_dim = self.action_dim();
        let mut grad_mean = Array2::<f64>::zeros(means.raw_dim());
        let mut grad_log_std = vec![0.0; a_dim];
        let mut value = 0.0;
        for i in 0..batch.len() {
            let mu = means.row(i);
            let act = batch.raw_actions.row(i);
            let lp = gaussian_log_prob(mu.as_slice().unwrap(), &log_std, act.as_slice().unwrap());
            let w = (lp - batch.old_log_probs[i]).exp() * advantages[i] / n;
            value += w;
            for j in 0..a_dim {
                let diff = act[j] - mu[j];
                grad_mean[[i, j]] = w * diff * inv_var[j];
                grad_log_std[j] += w * (diff * diff * inv_var[j] - 1.0);
            }
        }
        let mut grad = self.net.backward(self.net_params(), &cache, grad_mean.view());
        grad.reserve(a_dim);
        for (j, g) in grad_log_std.into_iter().enumerate() {
            grad.push(g * clamp_log_std(self.flat[np + j]).1);
        }
        (value, grad)
    }

    /// Batch mean of KL(self ‖ old) in closed form.
    pub fn mean_kl(&self, batch: &PolicyBatch) -> f64 {
        let (means, log_std) = self.forward_batch(batch.observations.view());
        let per_dim: f64 = log_std
            .iter()
            .zip(&batch.old_log_std)
            .map(|(&s, &so)| so - s + 0.5 * (2.0 * (s - so)).exp() - 0.5)
            .sum();
        let inv_var_old: Vec<f64> = batch.old_log_std.iter().map(|s| (-2.0 * s).exp()).collect();
        let mut quad = 0.0;
        for (row, old) in means.outer_iter().zip(batch.old_means.outer_iter()) {
            for j in 0..row.len() {
                let d = row[j] - old[j];
                quad += 0.5 * d * d * inv_var_old[j];
            }
        }
        per_dim + quad / batch.len() as f64
    }

    pub fn mean_kl_grad(&self, batch: &PolicyBatch) -> Vec<f64> {
        let np = self.net.param_count();
        let cache = self.net.forward(self.net_params(), batch.observations.view());
        let inv_var_old = Array1::from_iter(batch.old_log_std.iter().map(|s| (-2.0 * s).exp()));
        let n = batch.len() as f64;
        let grad_mean = (cache.output() - &batch.old_means) * &inv_var_old / n;
        let mut grad = self.net.backward(self.net_params(), &cache, grad_mean.view());
        for (j, (&s, &so)) in self.log_std().iter().zip(&batch.old_log_std).enumerate() {
            grad.push(((2.0 * (s - so)).exp() - 1.0) * clamp_log_std(self.flat[np + j]).1);
        }
        grad
    }

    /// `(H + damping·I)·v`, where `H` is the Hessian of the mean KL to the
    /// batch's behaviour policy, evaluated at the current parameters.
    ///
    /// Uses `H = Jᵀ Σ_old⁻¹ J / N` for the mean block and the diagonal
    /// `2σ²/σ_old²` for the log-std block. At the behaviour policy these are
    /// the exact second derivatives, because the terms involving the second
    /// derivative of the mean network are multiplied by `μ − μ_old = 0`.
    pub fn fisher_vector_product(&self, batch: &PolicyBatch, v: &[f64], damping: f64) -> Vec<f64> {
        let np = self.net.param_count();
        let cache = self.net.forward(self.net_params(), batch.observations.view());
        let jv = self.net.jvp(self.net_params(), &cache, &v[..np]);
        let inv_var_old = Array1::from_iter(batch.old_log_std.iter().map(|s| (-2.0 * s).exp()));
        let n = batch.len() as f64;
        let weighted = jv * &inv_var_old / n;
        let mut out = self.net.backward(self.net_params(), &cache, weighted.view());
        for (j, (&s, &so)) in self.log_std().iter().zip(&batch.old_log_std).enumerate() {
            let gate = clamp_log_std(self.flat[np + j]).1;
            out.push(2.0 * (2.0 * (s - so)).exp() * gate * v[np + j]);
        }
        for (o, x) in out.iter_mut().zip(v) {
            *o += damping * x;
        }
        out
    }
}

/// A scalar value network with its own optimizer state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueNet {
    net: Mlp,
    flat: Vec<f64>,
    optimizer: Adam,
}

impl ValueNet {
    pub fn new(input: usize, hidden: &[usize], lr: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut sizes = vec![input];
        sizes.extend_from_slice(hidden);
        sizes.push(1);
        let net = Mlp::new(sizes)?;
        let flat = net.init(rng, std::f64::consts::SQRT_2, 1.0);
        let optimizer = Adam::new(flat.len(), lr);
        Ok(ValueNet { net, flat, optimizer })
    }

    pub fn flat(&self) -> &[f64] {
        &self.flat
    }

    pub fn set_flat(&mut self, flat: Vec<f64>) -> Result<()> {
        if flat.len() != self.flat.len() {
            return Err(Error::Contract(format!(
                "value net expects {} parameters, got {}",
                self.flat.len(),
                flat.len()
            )));
        }
        self.flat = flat;
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn predict(&self, inputs: ArrayView2<f64>) -> Vec<f64> {
        self.net.forward(&self.flat, inputs).output().column(0).to_vec()
    }

    /// Mean over elements of `(ŷ_t − y_t)²·(1 + w·1[ŷ_t > y_{t−1}])`.
    ///
    /// `prev_targets[t]` is `y_{t−1}`; pass `f64::INFINITY` at the first
    /// step of every episode so that step is never weighted. `w = 0` gives
    /// plain mean-squared error.
    pub fn weighted_loss(&self, inputs: ArrayView2<f64>, targets: &[f64], prev_targets: &[f64], w: f64) -> f64 {
        let pred = self.predict(inputs);
        weighted_loss_terms(&pred, targets, prev_targets, w).0
    }

    pub fn weighted_loss_grad(
        &self,
        inputs: ArrayView2<f64>,
        targets: &[f64],
        prev_targets: &[f64],
        w: f64,
    ) -> (f64, Vec<f64>) {
        let cache = self.net.forward(&self.flat, inputs);
        let pred = cache.output().column(0).to_vec();
        let (loss, dpred) = weighted_loss_terms(&pred, targets, prev_targets, w);
        let g = Array2::from_shape_vec((pred.len(), 1), dpred).unwrap();
        (loss, self.net.backward(&self.flat, &cache, g.view()))
    }

    /// Full-batch Adam on the weighted loss; returns the final loss.
    pub fn fit(&mut self, inputs: ArrayView2<f64>, targets: &[f64], prev_targets: &[f64], w: f64, iters: usize) -> f64 {
        for _ in 0..iters {
            let (_, grad) = self.weighted_loss_grad(inputs, targets, prev_targets, w);
            self.optimizer.step(&mut self.flat, &grad);
        }
        self.weighted_loss(inputs, targets, prev_targets, w)
    }

    /// Plain mean-squared-error regression.
    pub fn fit_mse(&mut self, inputs: ArrayView2<f64>, targets: &[f64], iters: usize) -> f64 {
        let unweighted = vec![f64::INFINITY; targets.len()];
        self.fit(inputs, targets, &unweighted, 0.0, iters)
    }
}

/// Loss value and its derivative with respect to each prediction; the weight
/// is held constant when differentiating.
fn weighted_loss_terms(pred: &[f64], targets: &[f64], prev_targets: &[f64], w: f64) -> (f64, Vec<f64>) {
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for ((&p, &y), &prev) in pred.iter().zip(targets).zip(prev_targets) {
        let weight = if p > prev { 1.0 + w } else { 1.0 };
        let e = p - y;
        loss += weight * e * e;
        grad.push(2.0 * weight * e / n);
    }
    (loss / n, grad)
}

/// `y_{t−1}` for each element given per-episode target sequences, with
/// `+∞` at every episode start.
pub fn previous_targets(episodes: &[Vec<f64>]) -> Vec<f64> {
    let mut out = Vec::with_capacity(episodes.iter().map(Vec::len).sum());
    for ep in episodes {
        if ep.is_empty() {
            continue;
        }
        out.push(f64::INFINITY);
        out.extend_from_slice(&ep[..ep.len() - 1]);
    }
    out
}

/// Stack rows into a matrix.
pub fn stack_rows<R: AsRef<[f64]>>(rows: &[R], width: usize) -> Array2<f64> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for r in rows {
        debug_assert_eq!(r.as_ref().len(), width);
        flat.extend_from_slice(r.as_ref());
    }
    Array2::from_shape_vec((rows.len(), width), flat).unwrap()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn setup() -> (PolicyParams, PolicyBatch) {
        let mut r = rng::stream(5, &[]);
        let mut p = PolicyParams::new(4, &[6, 5], 2, &mut r).unwrap();
        // give the head real weight so gradients are not tiny
        let mut flat = p.flat().to_vec();
        for (k, x) in flat.iter_mut().enumerate() {
            *x += 0.3 * ((k as f64) * 1.3).sin();
        }
        p.set_flat(flat).unwrap();
        let obs = Array2::from_shape_fn((9, 4), |(i, j)| ((i * 4 + j) as f64 * 0.61).cos());
        let acts = Array2::from_shape_fn((9, 2), |(i, j)| 0.4 * ((i * 2 + j) as f64 * 1.7).sin());
        let batch = PolicyBatch::new(&p, obs, acts);
        (p, batch)
    }

    fn fd_grad(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|k| {
                let mut p = x.to_vec();
                p[k] += h;
                let up = f(&p);
                p[k] -= 2.0 * h;
                (up - f(&p)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_ok(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn log_prob_closed_forms() {
        let d = DistParams {
            mean: vec![0.2, -0.1],
            log_std: vec![-0.5, 0.3],
        };
        let at_mean = d.log_prob(&[0.2, -0.1]);
        assert_close!(at_mean, 0.5 - 0.3 - (2.0 * std::f64::consts::PI).ln(), 1e-12);
        assert_close!(d.log_prob(&[0.5, 0.0]), d.log_prob(&[-0.1, -0.2]), 1e-12);
        let manual: f64 = (0..2)
            .map(|j| {
                let s = d.log_std[j].exp();
                let x = [0.9, 0.4][j];
                (-(x - d.mean[j]).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
            })
            .product::<f64>()
            .ln();
        assert_close!(d.log_prob(&[0.9, 0.4]), manual, 1e-12);
    }

    #[test]
    fn sampling_is_stream_deterministic_and_unbiased() {
        let d = DistParams {
            mean: vec![0.3, -0.7],
            log_std: vec![-0.5, -1.0],
        };
        let a = d.sample(&mut rng::stream(1, &[2]));
        let b = d.sample(&mut rng::stream(1, &[2]));
        assert_eq!(a, b);
        let mut r = rng::stream(9, &[]);
        let n = 100_000;
        let mut sums = [0.0; 2];
        for _ in 0..n {
            let x = d.sample(&mut r);
            sums[0] += x[0];
            sums[1] += x[1];
        }
        for j in 0..2 {
            let se = d.log_std[j].exp() / (n as f64).sqrt();
            assert!((sums[j] / n as f64 - d.mean[j]).abs() <= 3.0 * se);
        }
        let tiny = DistParams {
            mean: vec![1.4, -0.2],
            log_std: vec![LOG_STD_MIN, LOG_STD_MIN],
        };
        let x = crate::env2d::Action::from_slice(&tiny.sample(&mut r));
        assert_close!(x.accel_cmd, 1.0, 1e-8);
        assert_close!(x.turn_cmd, -0.2, 1e-8);
    }

    #[test]
    fn surrogate_gradient_matches_finite_differences() {
        let (p, batch) = setup();
        let adv: Vec<f64> = (0..batch.len()).map(|i| ((i as f64) * 0.9).sin()).collect();
        // evaluate away from the behaviour policy so the ratio is not 1
        let q = p.offset(&vec![0.05; p.param_count()]);
        let (_, g) = q.surrogate_grad(&batch, &adv);
        let fd = fd_grad(
            |x| PolicyParams::from_flat(q.net().clone(), x.to_vec()).unwrap().surrogate(&batch, &adv),
            q.flat(),
            1e-5,
        );
        for k in 0..g.len() {
            assert!(rel_ok(g[k], fd[k], 1e-4), "param {k}: {} vs {}", g[k], fd[k]);
        }
        // linearity in the advantages
        let scaled: Vec<f64> = adv.iter().map(|a| 2.5 * a).collect();
        let (_, g2) = q.surrogate_grad(&batch, &scaled);
        for k in 0..g.len() {
            assert_close!(g2[k], 2.5 * g[k], 1e-12);
        }
    }

    #[test]
    fn kl_is_zero_with_zero_gradient_at_the_behaviour_policy() {
        let (p, batch) = setup();
        assert_close!(p.mean_kl(&batch), 0.0, 1e-14);
        assert!(p.mean_kl_grad(&batch).iter().all(|g| g.abs() < 1e-14));
        let q = p.offset(&vec![0.02; p.param_count()]);
        assert!(q.mean_kl(&batch) > 0.0);
    }

    #[test]
    fn kl_gradient_matches_finite_differences() {
        let (p, batch) = setup();
        let q = p.offset(&(0..p.param_count()).map(|k| 0.05 * ((k as f64) * 0.3).cos()).collect::<Vec<_>>());
        let g = q.mean_kl_grad(&batch);
        let fd = fd_grad(
            |x| PolicyParams::from_flat(q.net().clone(), x.to_vec()).unwrap().mean_kl(&batch),
            q.flat(),
            1e-5,
        );
        for k in 0..g.len() {
            assert!(rel_ok(g[k], fd[k], 1e-4), "param {k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn kl_matches_quadrature_in_one_dimension() {
        let mut r = rng::stream(2, &[]);
        let p = PolicyParams::new(1, &[3], 1, &mut r).unwrap();
        let obs = Array2::from_elem((1, 1), 0.4);
        let batch = PolicyBatch::new(&p, obs.clone(), Array2::zeros((1, 1)));
        let q = p.offset(&vec![0.3; p.param_count()]);
        let new = q.forward(&[0.4]);
        let old = p.forward(&[0.4]);
        // trapezoid rule for ∫ p_new (log p_new − log p_old)
        let (lo, hi, steps) = (-12.0, 12.0, 200_000);
        let h = (hi - lo) / steps as f64;
        let mut integral = 0.0;
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let lpn = new.log_prob(&[x]);
            let lpo = old.log_prob(&[x]);
            let wgt = if i == 0 || i == steps { 0.5 } else { 1.0 };
            integral += wgt * lpn.exp() * (lpn - lpo) * h;
        }
        assert_close!(q.mean_kl(&batch), integral, 1e-7);
    }

    #[test]
    fn fisher_vector_product_matches_kl_hessian() {
        let (p, batch) = setup();
        let dim = p.param_count();
        assert!(dim <= 200);
        let v: Vec<f64> = (0..dim).map(|k| ((k as f64) * 0.77).sin()).collect();
        let hv = p.fisher_vector_product(&batch, &v, 0.0);
        let h = 1e-5;
        let gp = p.offset(&v.iter().map(|x| h * x).collect::<Vec<_>>()).mean_kl_grad(&batch);
        let gm = p.offset(&v.iter().map(|x| -h * x).collect::<Vec<_>>()).mean_kl_grad(&batch);
        for k in 0..dim {
            let fd = (gp[k] - gm[k]) / (2.0 * h);
            assert!((hv[k] - fd).abs() <= 1e-3 * fd.abs().max(1e-3), "param {k}: {} vs {fd}", hv[k]);
        }
        let u: Vec<f64> = (0..dim).map(|k| ((k as f64) * 0.31 + 1.0).cos()).collect();
        let hu = p.fisher_vector_product(&batch, &u, 0.1);
        let hv = p.fisher_vector_product(&batch, &v, 0.1);
        let uhv: f64 = u.iter().zip(&hv).map(|(a, b)| a * b).sum();
        let vhu: f64 = v.iter().zip(&hu).map(|(a, b)| a * b).sum();
        assert!((uhv - vhu).abs() <= 1e-6);
        let vhv: f64 = v.iter().zip(&hv).map(|(a, b)| a * b).sum();
        assert!(vhv >= -1e-8);
        assert!(p.fisher_vector_product(&batch, &vec![0.0; dim], 0.1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn params_round_trip() {
        let (p, _) = setup();
        let mut q = p.clone();
        q.set_flat(p.flat().to_vec()).unwrap();
        assert_eq!(p, q);
        assert!(q.set_flat(vec![0.0; 3]).is_err());
    }

    #[test]
    fn weighted_loss_hand_value_and_boundary() {
        let terms = weighted_loss_terms(&[0.9], &[0.5], &[0.7], 1.0);
        assert_close!(terms.0, 0.32, 1e-12);
        let first = weighted_loss_terms(&[0.9], &[0.5], &[f64::INFINITY], 1.0);
        assert_close!(first.0, 0.16, 1e-12);
        assert_eq!(previous_targets(&[vec![0.5, 0.2], vec![0.1]]), vec![f64::INFINITY, 0.5, f64::INFINITY]);
    }

    #[test]
    fn weighted_loss_dominates_and_reduces_to_mse() {
        let mut r = rng::stream(4, &[]);
        let net = ValueNet::new(3, &[5], 1e-3, &mut r).unwrap();
        let x = Array2::from_shape_fn((8, 3), |(i, j)| (i as f64 - j as f64) * 0.2);
        let y: Vec<f64> = (0..8).map(|i| 1.0 - 0.1 * i as f64).collect();
        let prev = previous_targets(&[y[..4].to_vec(), y[4..].to_vec()]);
        let plain = net.weighted_loss(x.view(), &y, &prev, 0.0);
        let pred = net.predict(x.view());
        let mse = pred.iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 8.0;
        assert_close!(plain, mse, 1e-12);
        assert!(net.weighted_loss(x.view(), &y, &prev, 1.0) >= plain);

        let (_, g) = net.weighted_loss_grad(x.view(), &y, &prev, 1.0);
        let fd = fd_grad(
            |f| {
                let mut n2 = net.clone();
                n2.set_flat(f.to_vec()).unwrap();
                n2.weighted_loss(x.view(), &y, &prev, 1.0)
            },
            net.flat(),
            1e-6,
        );
        for k in 0..g.len() {
            assert!(rel_ok(g[k], fd[k], 1e-4), "param {k}: {} vs {}", g[k], fd[k]);
        }
    }

    #[test]
    fn value_fit_reduces_loss() {
        let mut r = rng::stream(8, &[]);
        let mut net = ValueNet::new(2, &[16, 16], 1e-2, &mut r).unwrap();
        let x = Array2::from_shape_fn((40, 2), |(i, j)| ((i * 2 + j) as f64 * 0.13).sin());
        let y: Vec<f64> = x.rows().into_iter().map(|r| r[0] * 2.0 - r[1]).collect();
        let before = net.weighted_loss(x.view(), &y, &vec![f64::INFINITY; 40], 0.0);
        let after = net.fit_mse(x.view(), &y, 300);
        assert!(after < 0.05 * before, "{before} -> {after}");
    }
}
