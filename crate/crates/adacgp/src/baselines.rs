//! Sparse adaptive VAR baseline and its causality-to-GSO mapping.
//!
//! The baseline tracks stacked lag-coefficient blocks with an
//! instantaneous prox-gradient update: an LMS step on the forgetting-
//! factor least-squares objective followed by group soft-thresholding of
//! each edge's coefficients across lags. Unlike the split estimator it
//! has no mechanism that zeroes entries exactly before the threshold is
//! reached, which is what makes it a useful false-alarm contrast.

use ndarray::{Array1, Array2, ArrayView1};

use crate::control::AdaptiveStep;
use crate::error::{Error, Result};
use crate::estimator::RecursiveStats;
use crate::sim::DIVERGENCE_GUARD;

/// Configuration of the adaptive VAR tracker.
#[derive(Debug, Clone)]
pub struct AdaptiveVarConfig {
    pub order: usize,
    /// Group soft-threshold scale (per unit step size).
    pub sparsity_weight: f64,
    /// Forgetting factor of the correlation statistics.
    pub lambda: f64,
    pub epsilon: f64,
    /// Fixed step size; `None` selects the adaptive rule.
    pub fixed_step: Option<f64>,
}

impl AdaptiveVarConfig {
    pub fn new(order: usize) -> Self {
        Self { order, sparsity_weight: 0.0, lambda: 0.98, epsilon: 1e-8, fixed_step: None }
    }
}

/// Online sparse VAR coefficient tracker.
#[derive(Debug, Clone)]
pub struct AdaptiveVar {
    cfg: AdaptiveVarConfig,
    n: usize,
    /// Stacked lag blocks, N x NP.
    coeffs: Array2<f64>,
    stats: RecursiveStats,
    step_rule: AdaptiveStep,
    window: Array1<f64>,
    step_count: usize,
}

/// Per-step observables of the baseline.
#[derive(Debug, Clone, Copy)]
pub struct VarStepRecord {
    pub step: usize,
    pub nmse_pred: Option<f64>,
}

impl AdaptiveVar {
    pub fn new(n: usize, cfg: AdaptiveVarConfig) -> Result<Self> {
        if n == 0 || cfg.order == 0 {
            return Err(Error::InvalidParameter("need n >= 1 and order >= 1".into()));
        }
        if !(cfg.lambda > 0.0 && cfg.lambda <= 1.0) {
            return Err(Error::InvalidParameter("forgetting factor must lie in (0, 1]".into()));
        }
        if cfg.sparsity_weight < 0.0 {
            return Err(Error::InvalidParameter("sparsity weight must be >= 0".into()));
        }
        let order = cfg.order;
        let lambda = cfg.lambda;
        let epsilon = cfg.epsilon;
        Ok(Self {
            n,
            coeffs: Array2::zeros((n, n * order)),
            stats: RecursiveStats::new(n, order, lambda),
            step_rule: AdaptiveStep::new(n * order, epsilon),
            window: Array1::zeros(n * order),
            step_count: 0,
            cfg,
        })
    }

    pub fn coeffs(&self) -> &Array2<f64> {
        &self.coeffs
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Process one sample.
    pub fn step(&mut self, x_t: ArrayView1<'_, f64>) -> Result<VarStepRecord> {
        if x_t.len() != self.n {
            return Err(Error::DimensionMismatch("sample length".into()));
        }
        let step_idx = self.step_count + 1;
        let x_norm_sq = x_t.dot(&x_t);
        let window_norm_sq = self.window.dot(&self.window);

        let pred = self.coeffs.dot(&self.window);
        let nmse_pred = if x_norm_sq > 1e-30 {
            let err: f64 = x_t.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            Some(err / x_norm_sq)
        } else {
            None
        };

        self.stats.update(x_t, self.window.view())?;
        let step = match self.cfg.fixed_step {
            Some(s) => s,
            None => self.step_rule.step(self.stats.r(), window_norm_sq),
        };

        // Instantaneous LMS gradient: (pred - x_t) x_window^T.
        let err = &pred - &x_t;
        for i in 0..self.n {
            let e = err[i];
            if e != 0.0 {
                let mut row = self.coeffs.row_mut(i);
                row.scaled_add(-step * e, &self.window);
            }
        }

        // Group soft-threshold each edge's lag coefficients.
        if self.cfg.sparsity_weight > 0.0 {
            let tau = step * self.cfg.sparsity_weight;
            let order = self.cfg.order;
            for i in 0..self.n {
                for j in 0..self.n {
                    let mut norm_sq = 0.0;
                    for p in 0..order {
                        let v = self.coeffs[[i, p * self.n + j]];
                        norm_sq += v * v;
                    }
                    let norm = norm_sq.sqrt();
                    let scale = if norm > tau { 1.0 - tau / norm } else { 0.0 };
                    for p in 0..order {
                        self.coeffs[[i, p * self.n + j]] *= scale;
                    }
                }
            }
        }

        if self.coeffs.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
            return Err(Error::Divergence { step: step_idx, context: "adaptive VAR".into() });
        }

        // Shift the lag window.
        let slice = self.window.as_slice_mut().expect("window is contiguous");
        slice.rotate_right(self.n);
        for (dst, src) in slice[..self.n].iter_mut().zip(x_t.iter()) {
            *dst = *src;
        }
        self.step_count = step_idx;
        Ok(VarStepRecord { step: step_idx, nmse_pred })
    }

    /// Map the current coefficients to a GSO estimate.
    pub fn gso(&self, tol: f64) -> Array2<f64> {
        var_causality_to_gso(&self.coeffs, self.cfg.order, tol)
    }
}

/// VAR-causality mapping: edge `(i, j)` is causal when any lag coefficient
/// magnitude exceeds `tol`; causal edges get the l2 norm of their lag
/// coefficients as weight, everything else zero.
pub fn var_causality_to_gso(coeffs: &Array2<f64>, order: usize, tol: f64) -> Array2<f64> {
    let n = coeffs.nrows();
    debug_assert_eq!(coeffs.ncols(), n * order);
    let mut w = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut causal = false;
            let mut norm_sq = 0.0;
            for p in 0..order {
                let v = coeffs[[i, p * n + j]];
                causal |= v.abs() > tol;
                norm_sq += v * v;
            }
            if causal {
                w[[i, j]] = norm_sq.sqrt();
            }
        }
    }
    w
}
