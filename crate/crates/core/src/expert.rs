//! Actor-critic experts over a Gaussian RBF encoding of the arm's joints.
//!
//! The four normalized joint angles are encoded by a 5x5x5x5 grid of
//! Gaussian units. A linear critic and a logistic actor read the encoding;
//! both are trained online with TD(0). Exploration noise is Gaussian,
//! low-pass filtered, and shrinks as the expert's success rate grows.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::world::JOINTS;

const MAX_SEPARABLE: usize = 16;

/// Gaussian RBF grid with equally spaced centers on [0, 1] per joint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfEncoder {
    per_dim: usize,
    centers: Vec<f64>,
    sigma2: f64,
}

impl RbfEncoder {
    /// Widths satisfy `sigma^2 = spacing^2 / (8 ln 2)`, which puts both
    /// neighbours at 0.5 activation halfway between their centers.
    pub fn new(per_dim: usize) -> Result<Self> {
        if per_dim < 2 {
            return Err(Error::Config(format!(
                "RBF grid needs at least 2 centers per joint, got {per_dim}"
            )));
        }
        let spacing = 1.0 / (per_dim - 1) as f64;
        let centers = (0..per_dim).map(|k| k as f64 * spacing).collect();
        let sigma2 = spacing * spacing / (8.0 * std::f64::consts::LN_2);
        Ok(Self {
            per_dim,
            centers,
            sigma2,
        })
    }

    pub fn per_dim(&self) -> usize {
        self.per_dim
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn units(&self) -> usize {
        self.per_dim.pow(JOINTS as u32)
    }

    /// Grid coordinates of unit `i`; joint 0 is the slowest-varying index.
    pub fn unit_coords(&self, mut i: usize) -> [usize; JOINTS] {
        let mut out = [0; JOINTS];
        for d in (0..JOINTS).rev() {
            out[d] = i % self.per_dim;
            i /= self.per_dim;
        }
        out
    }

    /// Writes the activations for `input` (clamped to [0, 1]) into `out`.
    pub fn encode_into(&self, input: &[f64; JOINTS], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.units());
        let n = self.per_dim;
        let inv = 1.0 / (2.0 * self.sigma2);
        if n <= MAX_SEPARABLE {
            let mut g = [[0.0f64; MAX_SEPARABLE]; JOINTS];
            for d in 0..JOINTS {
                let x = input[d].clamp(0.0, 1.0);
                for k in 0..n {
                    let diff = x - self.centers[k];
                    g[d][k] = (-diff * diff * inv).exp();
                }
            }
            let mut i = 0;
            for k0 in 0..n {
                let a = g[0][k0];
                for k1 in 0..n {
                    let ab = a * g[1][k1];
                    for k2 in 0..n {
                        let abc = ab * g[2][k2];
                        for k3 in 0..n {
                            out[i] = abc * g[3][k3];
                            i += 1;
                        }
                    }
                }
            }
        } else {
            for (i, y) in out.iter_mut().enumerate() {
                let coords = self.unit_coords(i);
                let mut sq = 0.0;
                for d in 0..JOINTS {
                    let diff = input[d].clamp(0.0, 1.0) - self.centers[coords[d]];
                    sq += diff * diff;
                }
                *y = (-sq * inv).exp();
            }
        }
    }

    pub fn encode(&self, input: &[f64; JOINTS]) -> Vec<f64> {
        let mut out = vec![0.0; self.units()];
        self.encode_into(input, &mut out);
        out
    }
}

/// Learning rates and discount of one expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningParams {
    pub critic_rate: f64,
    pub actor_rate: f64,
    pub discount: f64,
}

impl Default for LearningParams {
    fn default() -> Self {
        Self {
            critic_rate: 0.02,
            actor_rate: 0.4,
            discount: 0.99,
        }
    }
}

/// Linear critic plus logistic actor with four outputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpertNet {
    pub critic_weights: Vec<f64>,
    pub critic_bias: f64,
    /// Row-major: output `j` owns `actor_weights[j * units..(j + 1) * units]`.
    pub actor_weights: Vec<f64>,
    pub actor_biases: [f64; JOINTS],
}

impl ExpertNet {
    /// All-zero parameters: critic reads 0, actor outputs 0.5 (no motion).
    pub fn zeros(units: usize) -> Self {
        Self {
            critic_weights: vec![0.0; units],
            critic_bias: 0.0,
            actor_weights: vec![0.0; units * JOINTS],
            actor_biases: [0.0; JOINTS],
        }
    }

    pub fn units(&self) -> usize {
        self.critic_weights.len()
    }

    pub fn actor_row(&self, j: usize) -> &[f64] {
        let n = self.units();
        &self.actor_weights[j * n..(j + 1) * n]
    }

    pub fn is_finite(&self) -> bool {
        self.critic_bias.is_finite()
            && self.critic_weights.iter().all(|w| w.is_finite())
            && self.actor_weights.iter().all(|w| w.is_finite())
            && self.actor_biases.iter().all(|b| b.is_finite())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize the reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `V = sum_i y_i u_i + b_V`.
pub fn critic_value(features: &[f64], net: &ExpertNet) -> f64 {
    dot(features, &net.critic_weights) + net.critic_bias
}

/// `o_j = logistic(b_j + sum_i u_ji y_i)`.
pub fn actor_output(features: &[f64], net: &ExpertNet) -> [f64; JOINTS] {
    let mut out = [0.0; JOINTS];
    for (j, o) in out.iter_mut().enumerate() {
        *o = logistic(net.actor_biases[j] + dot(features, net.actor_row(j)));
    }
    out
}

/// `delta = r + discount * V_now - V_prev`, with `V_now = 0` on terminal steps.
pub fn td_error(reward: f64, v_now: f64, v_prev: f64, terminal: bool, discount: f64) -> f64 {
    let bootstrap = if terminal { 0.0 } else { v_now };
    reward + discount * bootstrap - v_prev
}

/// One TD(0) update of critic and actor from the previous step's features.
///
/// Critic: `du_i = eta_c * delta * y_i`. Actor:
/// `du_ji = eta_a * delta * (o^n_j - o_j) * o_j (1 - o_j) * y_i`.
/// Biases use an input of 1.
pub fn learn_step(
    net: &mut ExpertNet,
    features_prev: &[f64],
    delta: f64,
    outputs: &[f64; JOINTS],
    commands: &[f64; JOINTS],
    params: &LearningParams,
) {
    if delta == 0.0 {
        return;
    }
    let c = params.critic_rate * delta;
    axpy(c, features_prev, &mut net.critic_weights);
    net.critic_bias += c;
    let n = net.units();
    for j in 0..JOINTS {
        let o = outputs[j];
        let a = params.actor_rate * delta * (commands[j] - o) * o * (1.0 - o);
        if a != 0.0 {
            axpy(a, features_prev, &mut net.actor_weights[j * n..(j + 1) * n]);
            net.actor_biases[j] += a;
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    pub base_sd: f64,
    /// EMA factor folding each fresh sample into the smoothed noise.
    pub smoothing: f64,
    /// EMA factor of the success signal driving the noise decrease.
    pub decrease_rate: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            base_sd: 2.0,
            smoothing: 0.08,
            decrease_rate: 0.0005,
        }
    }
}

/// Per-expert exploration state.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseState {
    pub smoothed: [f64; JOINTS],
    /// Noise decrease `d`, an EMA of the expert's success.
    pub decrease: f64,
}

impl NoiseState {
    pub fn effective_sd(&self, params: &NoiseParams) -> f64 {
        params.base_sd * (1.0 - self.decrease)
    }

    /// Clears the filtered noise at the start of a trial.
    pub fn reset_trial(&mut self) {
        self.smoothed = [0.0; JOINTS];
    }

    pub fn record_outcome(&mut self, success: bool, params: &NoiseParams) {
        let s = if success { 1.0 } else { 0.0 };
        self.decrease += params.decrease_rate * (s - self.decrease);
    }
}

/// Draws fresh noise with sd `S_eT`, filters it and returns the clamped
/// motor commands `o + n`.
pub fn apply_noise<R: Rng + ?Sized>(
    outputs: &[f64; JOINTS],
    noise: &mut NoiseState,
    params: &NoiseParams,
    rng: &mut R,
) -> [f64; JOINTS] {
    let sd = noise.effective_sd(params);
    let mut commands = [0.0; JOINTS];
    for j in 0..JOINTS {
        let z: f64 = rng.sample(StandardNormal);
        let n = &mut noise.smoothed[j];
        *n += params.smoothing * (sd * z - *n);
        commands[j] = (outputs[j] + *n).clamp(0.0, 1.0);
    }
    commands
}

/// A policy slot: network plus its own exploration schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expert {
    pub net: ExpertNet,
    pub noise: NoiseState,
}

impl Expert {
    pub fn new(units: usize) -> Self {
        Self {
            net: ExpertNet::zeros(units),
            noise: NoiseState::default(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn enc() -> RbfEncoder {
        RbfEncoder::new(5).unwrap()
    }

    /// Naive per-unit oracle: explicit squared distance, then one exp.
    fn naive_encode(e: &RbfEncoder, x: &[f64; JOINTS]) -> Vec<f64> {
        let n = e.per_dim();
        let spacing = 1.0 / (n - 1) as f64;
        let sigma2 = spacing * spacing / (8.0 * 2f64.ln());
        let mut out = Vec::new();
        for k0 in 0..n {
            for k1 in 0..n {
                for k2 in 0..n {
                    for k3 in 0..n {
                        let c = [k0, k1, k2, k3].map(|k| k as f64 * spacing);
                        let sq: f64 = (0..JOINTS).map(|d| (x[d] - c[d]).powi(2) / (2.0 * sigma2)).sum();
                        out.push((-sq).exp());
                    }
                }
            }
        }
        out
    }

    #[test]
    fn grid_has_625_units() {
        assert_eq!(enc().units(), 625);
    }

    #[test]
    fn vertex_input_activates_its_unit_fully() {
        let e = enc();
        let y = e.encode(&[0.25, 0.5, 0.0, 1.0]);
        let i = ((1 * 5 + 2) * 5 + 0) * 5 + 4;
        assert_eq!(y[i], 1.0);
    }

    #[test]
    fn midpoint_between_neighbours_gives_half_activation() {
        let e = enc();
        let y = e.encode(&[0.125, 0.5, 0.5, 0.5]);
        let a = ((0 * 5 + 2) * 5 + 2) * 5 + 2;
        let b = ((1 * 5 + 2) * 5 + 2) * 5 + 2;
        assert!((y[a] - 0.5).abs() < 1e-12);
        assert!((y[b] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn encoding_matches_naive_oracle() {
        let e = enc();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let x = [0; JOINTS].map(|_| rng.random::<f64>());
            let fast = e.encode(&x);
            let slow = naive_encode(&e, &x);
            let worst = fast.iter().zip(&slow).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-12, "max diff {worst}");
        }
    }

    #[test]
    fn critic_reads_zero_and_sums_features() {
        let e = enc();
        let y = e.encode(&[0.3, 0.6, 0.1, 0.9]);
        let mut net = ExpertNet::zeros(e.units());
        assert_eq!(critic_value(&y, &net), 0.0);
        net.critic_weights.fill(1.0);
        let sum: f64 = y.iter().sum();
        assert!((critic_value(&y, &net) - sum).abs() < 1e-12);
    }

    #[test]
    fn critic_matches_sequential_dot_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y: Vec<f64> = (0..625).map(|_| rng.random()).collect();
        let mut net = ExpertNet::zeros(625);
        for w in net.critic_weights.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        net.critic_bias = 0.3;
        // Reverse-order accumulation as an independent route.
        let mut oracle = 0.0;
        for i in (0..625).rev() {
            oracle += y[i] * net.critic_weights[i];
        }
        oracle += 0.3;
        assert!((critic_value(&y, &net) - oracle).abs() <= 1e-12);
    }

    #[test]
    fn zero_actor_outputs_half() {
        let y = enc().encode(&[0.5; 4]);
        let net = ExpertNet::zeros(625);
        assert_eq!(actor_output(&y, &net), [0.5; 4]);
    }

    #[test]
    fn actor_saturates_but_stays_bounded() {
        let y = enc().encode(&[0.5; 4]);
        let mut net = ExpertNet::zeros(625);
        net.actor_weights.fill(1e3);
        net.actor_biases = [-1e3, 0.0, 0.0, 0.0];
        let o = actor_output(&y, &net);
        for v in o {
            assert!(v <= 1.0 && v > 0.99);
        }
    }

    #[test]
    fn actor_matches_logistic_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y: Vec<f64> = (0..625).map(|_| rng.random()).collect();
        let mut net = ExpertNet::zeros(625);
        for w in net.actor_weights.iter_mut() {
            *w = rng.random_range(-0.01..0.01);
        }
        net.actor_biases = [0.1, -0.2, 0.3, -0.4];
        let o = actor_output(&y, &net);
        for j in 0..JOINTS {
            let pre: f64 = net.actor_biases[j]
                + (0..625).rev().map(|i| net.actor_weights[j * 625 + i] * y[i]).sum::<f64>();
            let expect = (1.0 + (-pre).exp()).recip();
            assert!((o[j] - expect).abs() <= 1e-12);
        }
    }

    #[test]
    fn td_error_cases() {
        assert_eq!(td_error(1.0, 123.0, 0.0, true, 0.99), 1.0);
        let c = 2.5;
        assert!((td_error(0.0, c, c, false, 0.99) - (-0.01 * c)).abs() < 1e-15);
        assert!((td_error(-1.0, 9.0, 0.5, true, 0.99) - (-1.5)).abs() < 1e-15);
    }

    #[test]
    fn zero_delta_leaves_net_untouched() {
        let y = enc().encode(&[0.2; 4]);
        let mut net = ExpertNet::zeros(625);
        let before = net.clone();
        learn_step(&mut net, &y, 0.0, &[0.5; 4], &[0.9; 4], &LearningParams::default());
        assert_eq!(net, before);
    }

    #[test]
    fn update_arithmetic() {
        let mut y = vec![0.0; 625];
        y[0] = 0.5;
        y[1] = 1.0;
        let mut net = ExpertNet::zeros(625);
        let outputs = [0.5; 4];
        let commands = [0.6, 0.5, 0.5, 0.5];
        learn_step(&mut net, &y, 1.0, &outputs, &commands, &LearningParams::default());
        assert!((net.critic_weights[0] - 0.01).abs() < 1e-15);
        // 0.4 * 1 * 0.1 * 0.25 * 1
        assert!((net.actor_weights[1] - 0.01).abs() < 1e-15);
        assert_eq!(net.actor_weights[625 + 1], 0.0);
    }

    #[test]
    fn critic_update_is_the_value_gradient() {
        // Finite-difference check of dV/du_i against du_i / (eta_c * delta).
        let e = enc();
        let y = e.encode(&[0.31, 0.77, 0.05, 0.5]);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut net = ExpertNet::zeros(625);
        for w in net.critic_weights.iter_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let params = LearningParams::default();
        let delta = 0.7;
        let mut updated = net.clone();
        learn_step(&mut updated, &y, delta, &[0.5; 4], &[0.5; 4], &params);
        let h = 1e-6;
        for i in (0..625).step_by(13) {
            let analytic = (updated.critic_weights[i] - net.critic_weights[i]) / (params.critic_rate * delta);
            let mut plus = net.clone();
            plus.critic_weights[i] += h;
            let mut minus = net.clone();
            minus.critic_weights[i] -= h;
            let fd = (critic_value(&y, &plus) - critic_value(&y, &minus)) / (2.0 * h);
            if y[i] > 1e-3 {
                assert!(((analytic - fd) / fd).abs() <= 1e-6, "unit {i}: {analytic} vs {fd}");
            } else {
                assert!((analytic - fd).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn full_decrease_silences_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let params = NoiseParams::default();
        let mut noise = NoiseState {
            smoothed: [0.0; 4],
            decrease: 1.0,
        };
        let outputs = [0.1, 0.4, 0.6, 0.9];
        for _ in 0..50 {
            assert_eq!(apply_noise(&outputs, &mut noise, &params, &mut rng), outputs);
        }
        assert_eq!(NoiseState::default().effective_sd(&params), 2.0);
    }

    #[test]
    fn filtered_noise_has_lag_one_autocorrelation_of_one_minus_smoothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let params = NoiseParams::default();
        let mut noise = NoiseState::default();
        let n = 100_000;
        let mut xs = Vec::with_capacity(n);
        for _ in 0..n {
            apply_noise(&[0.5; 4], &mut noise, &params, &mut rng);
            xs.push(noise.smoothed[0]);
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        let cov: f64 = xs.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        let rho = cov / var;
        assert!((rho - 0.92).abs() < 0.01, "lag-1 autocorrelation {rho}");
    }

    #[test]
    fn noise_decrease_grows_under_success() {
        let params = NoiseParams::default();
        let mut noise = NoiseState::default();
        let mut last_sd = noise.effective_sd(&params);
        for _ in 0..1000 {
            noise.record_outcome(true, &params);
            let sd = noise.effective_sd(&params);
            assert!(sd <= last_sd && sd >= 0.0);
            last_sd = sd;
        }
    }
}
