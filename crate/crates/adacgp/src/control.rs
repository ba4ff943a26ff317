//! Step-size selection, sparsity-weight schedules and steady-state
//! detection for the online estimator.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Dimension};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the steady-state detector.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// EMA smoothing factor.
    pub alpha: f64,
    /// Steps without sufficient improvement before firing.
    pub patience: usize,
    /// Relative improvement on the best EMA that resets the counter.
    pub rel_improvement: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self { alpha: 0.995, patience: 500, rel_improvement: 0.01 }
    }
}

/// Exponential-moving-average plateau detector.
///
/// Fires when the EMA of the monitored metric has not improved on its best
/// value by at least `rel_improvement` for `patience` consecutive updates.
#[derive(Debug, Clone)]
pub struct SteadyStateDetector {
    cfg: DetectorConfig,
    ema: Option<f64>,
    best: f64,
    counter: usize,
}

impl SteadyStateDetector {
    pub fn new(cfg: DetectorConfig) -> Self {
        Self { cfg, ema: None, best: f64::INFINITY, counter: 0 }
    }

    pub fn ema(&self) -> Option<f64> {
        self.ema
    }

    /// Feed one metric value; returns whether the detector has fired.
    pub fn update(&mut self, value: f64) -> Result<bool> {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "steady-state detector fed a non-finite or negative value: {value}"
            )));
        }
        let ema = match self.ema {
            // Initialise from the first observation to avoid zero-init bias.
            None => value,
            Some(prev) => self.cfg.alpha * prev + (1.0 - self.cfg.alpha) * value,
        };
        self.ema = Some(ema);
        if ema < self.best * (1.0 - self.cfg.rel_improvement) {
            self.best = ema;
            self.counter = 0;
        } else {
            self.counter += 1;
        }
        Ok(self.counter >= self.cfg.patience)
    }
}

/// Warm-started power iteration for the largest eigenvalue of a symmetric
/// positive semidefinite matrix.
#[derive(Debug, Clone)]
pub struct PowerIteration {
    v: Array1<f64>,
    iters: usize,
}

impl PowerIteration {
    /// `dim` is the matrix dimension; `iters` the sweeps per call.
    pub fn new(dim: usize, iters: usize) -> Self {
        let v = Array1::from_elem(dim, 1.0 / (dim.max(1) as f64).sqrt());
        Self { v, iters }
    }

    /// Current largest-eigenvalue estimate of `m`, refining the cached
    /// eigenvector. Returns 0 for a (numerically) zero matrix.
    pub fn lambda_max(&mut self, m: &Array2<f64>) -> f64 {
        debug_assert_eq!(m.nrows(), self.v.len());
        for _ in 0..self.iters {
            let w = m.dot(&self.v);
            let norm = w.dot(&w).sqrt();
            if norm < 1e-300 {
                // Restart direction in case the iterate fell in the null space.
                let dim = self.v.len() as f64;
                self.v.fill(1.0 / dim.sqrt());
                return 0.0;
            }
            self.v = w / norm;
        }
        // Rayleigh quotient; exact once the eigenvector has converged.
        self.v.dot(&m.dot(&self.v)).max(0.0)
    }
}

/// Adaptive step size `alpha_t = 2 / lambda_max(R_t) * 1 / (||x||^2 + eps)`
/// with the eigenvalue tracked by warm-started power iteration.
#[derive(Debug, Clone)]
pub struct AdaptiveStep {
    power: PowerIteration,
    pub epsilon: f64,
    /// Returned when the correlation matrix is still zero.
    pub fallback: f64,
}

impl AdaptiveStep {
    pub fn new(dim: usize, epsilon: f64) -> Self {
        Self { power: PowerIteration::new(dim, 8), epsilon, fallback: 1e-3 }
    }

    pub fn step(&mut self, r: &Array2<f64>, x_window_norm_sq: f64) -> f64 {
        self.step_and_bound(r, x_window_norm_sq).0
    }

    /// Adaptive step together with the plain `2 / lambda_max` stability
    /// bound, which line searches use as their initial trial step.
    pub fn step_and_bound(&mut self, r: &Array2<f64>, x_window_norm_sq: f64) -> (f64, f64) {
        let lambda = self.power.lambda_max(r);
        if lambda <= 0.0 {
            return (self.fallback, self.fallback);
        }
        let bound = 2.0 / lambda;
        (bound / (x_window_norm_sq + self.epsilon), bound)
    }
}

/// Backtracking parameters for the Armijo rule.
#[derive(Debug, Clone, Copy)]
pub struct ArmijoParams {
    pub c: f64,
    pub ratio: f64,
    pub max_backtracks: usize,
}

impl Default for ArmijoParams {
    fn default() -> Self {
        Self { c: 1e-4, ratio: 0.5, max_backtracks: 20 }
    }
}

/// Largest step `s = init * ratio^k` satisfying
/// `f(point - s grad) <= f(point) - c s ||grad||^2`.
///
/// The boolean flag is set when no step within the backtrack budget
/// satisfied the condition; the minimum trial step is returned in that case.
pub fn armijo_step<D, F>(
    objective: F,
    gradient: &ndarray::Array<f64, D>,
    point: &ndarray::Array<f64, D>,
    init_step: f64,
    params: ArmijoParams,
) -> (f64, bool)
where
    D: Dimension,
    F: Fn(&ndarray::Array<f64, D>) -> f64,
{
    let grad_norm_sq: f64 = gradient.iter().map(|g| g * g).sum();
    let f0 = objective(point);
    let mut s = init_step;
    for _ in 0..=params.max_backtracks {
        let candidate = point - &(s * gradient);
        if objective(&candidate) <= f0 - params.c * s * grad_norm_sq {
            return (s, false);
        }
        s *= params.ratio;
    }
    (s / params.ratio, true)
}

/// Norm-scaled sparsity weight `mu_{p,t} = mu_p ||P_{p,t} - gamma Q_{p,t}||_inf`
/// where the norm is the largest absolute entry.
pub fn sparsity_weight(
    pxy_block: ArrayView2<'_, f64>,
    q_block: Option<ArrayView2<'_, f64>>,
    gamma: f64,
    mu_base: f64,
) -> f64 {
    let max_abs = match q_block {
        Some(q) => pxy_block
            .iter()
            .zip(q.iter())
            .map(|(p, qv)| (p - gamma * qv).abs())
            .fold(0.0, f64::max),
        None => pxy_block.iter().map(|p| p.abs()).fold(0.0, f64::max),
    };
    mu_base * max_abs
}

/// Companion schedule for the coefficient stage:
/// `eta_t = eta ||Y^T x_t||_inf`.
pub fn eta_weight(ytx: ArrayView1<'_, f64>, eta_base: f64) -> f64 {
    eta_base * ytx.iter().map(|v| v.abs()).fold(0.0, f64::max)
}
