//! The AdaCGP online estimator.
//!
//! Per incoming sample the estimator refreshes exponentially weighted
//! correlation statistics, takes a projected gradient step on the split
//! filter bank, and derives the shift operator either through a dedicated
//! sparse sub-problem with commutativity enforcement (Path 1) or directly
//! as the first filter block (Path 2). A second phase re-optimises the
//! detected non-zero pattern without sparsity penalties (debiasing) and
//! estimates the polynomial filter coefficients.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use ndarray::linalg::general_mat_mul;
use serde::{Deserialize, Serialize};

use crate::control::{
    armijo_step, eta_weight, sparsity_weight, AdaptiveStep, ArmijoParams, DetectorConfig,
    SteadyStateDetector,
};
use crate::error::{Error, Result};
use crate::ops;
use crate::sim::{FilterCoeffs, SignalStream};
use crate::split::{FilterBank, SplitGso};

/// Target below this squared norm is treated as zero when normalising.
const ZERO_NORM_GUARD: f64 = 1e-30;

/// How the shift operator is obtained from the filter bank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Path {
    /// Dedicated split sub-problem on W with commutativity enforcement.
    Path1,
    /// W taken verbatim as the first filter block.
    Path2,
}

/// When the debias/coefficient phase runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DebiasMode {
    /// Switch permanently once the filter prediction error plateaus.
    AfterSteadyState,
    /// Run the debias and coefficient steps after every filter update.
    Alternating,
}

/// Step-size policy for the gradient stages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum StepMode {
    /// Filter steps from `2 / (lambda_max(R) (||x||^2 + eps))`; GSO and
    /// coefficient steps from backtracking line search.
    Adaptive,
    /// Backtracking line search everywhere, warm-started from the adaptive
    /// value for the filter stage.
    Armijo,
    /// One fixed step size for every stage.
    Fixed(f64),
}

/// Which samples feed the coefficient update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HUpdateMode {
    /// Gradient from the current sample only.
    Instantaneous,
    /// Gradient from exponentially weighted accumulated statistics.
    Accumulated,
}

/// Full configuration of one estimator instance.
#[derive(Debug, Clone)]
pub struct EstimatorConfig {
    pub order: usize,
    pub path: Path,
    pub debias_mode: DebiasMode,
    /// Base sparsity weight per filter block, rescaled online by the
    /// statistics norms.
    pub mu: Vec<f64>,
    /// Base sparsity weight of the coefficient stage.
    pub eta: f64,
    /// Commutativity weight.
    pub gamma: f64,
    /// Forgetting factor in (0, 1].
    pub lambda: f64,
    /// Division guard.
    pub epsilon: f64,
    /// Floor of the coefficient reweighting `sign(h) / (floor + |h|)`.
    /// Kept well above the division guard so the sparsity pull on small
    /// coefficients stays bounded.
    pub reweight_floor: f64,
    pub step_mode: StepMode,
    /// Fixed step for the shift-operator sub-problem; `None` selects the
    /// Armijo rule. Small values integrate the detected support over many
    /// steps instead of tracking each noisy filter snapshot.
    pub w_step: Option<f64>,
    /// Cap on the debias step as a fraction of the `2 / lambda_max`
    /// stability bound; damping the re-fit trades a little bias for a
    /// large variance reduction on short effective windows.
    pub debias_step_scale: f64,
    pub h_mode: HUpdateMode,
    /// Allowed-edge pattern; entries outside it can never become non-zero.
    pub mask: Option<Array2<bool>>,
    pub detector: DetectorConfig,
}

impl EstimatorConfig {
    pub fn new(order: usize) -> Self {
        Self {
            order,
            path: Path::Path1,
            debias_mode: DebiasMode::AfterSteadyState,
            mu: vec![0.005; order],
            eta: 0.01,
            gamma: 0.1,
            lambda: 0.98,
            epsilon: 1e-8,
            reweight_floor: 0.01,
            step_mode: StepMode::Adaptive,
            w_step: None,
            debias_step_scale: 0.05,
            h_mode: HUpdateMode::Instantaneous,
            mask: None,
            detector: DetectorConfig::default(),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidParameter("model order must be >= 1".into()));
        }
        if self.mu.len() != self.order {
            return Err(Error::InvalidParameter(format!(
                "need {} sparsity weights, got {}",
                self.order,
                self.mu.len()
            )));
        }
        if self.mu.iter().any(|m| *m <= 0.0) {
            return Err(Error::InvalidParameter("sparsity weights must be positive".into()));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "forgetting factor must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if self.gamma < 0.0 {
            return Err(Error::InvalidParameter("commutativity weight must be >= 0".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidParameter("epsilon must be positive".into()));
        }
        if self.reweight_floor <= 0.0 {
            return Err(Error::InvalidParameter("reweighting floor must be positive".into()));
        }
        if let Some(mask) = &self.mask {
            if mask.dim() != (n, n) {
                return Err(Error::DimensionMismatch(format!(
                    "edge mask must be {n}x{n}, got {:?}",
                    mask.dim()
                )));
            }
        }
        Ok(())
    }
}

/// Exponentially weighted correlation state.
#[derive(Debug, Clone)]
pub struct RecursiveStats {
    lambda: f64,
    /// Lagged-input autocorrelation, NP x NP.
    r: Array2<f64>,
    /// Cross-correlation of targets with lagged inputs, N x NP.
    pxy: Array2<f64>,
    /// Shifted-regressor correlation for the coefficient stage, M x M.
    c: Array2<f64>,
    /// Shifted-regressor cross-correlation, M.
    u: Array1<f64>,
    n: usize,
}

impl RecursiveStats {
    pub fn new(n: usize, order: usize, lambda: f64) -> Self {
        let m = FilterCoeffs::len_for_order(order);
        Self {
            lambda,
            r: Array2::zeros((n * order, n * order)),
            pxy: Array2::zeros((n, n * order)),
            c: Array2::zeros((m, m)),
            u: Array1::zeros(m),
            n,
        }
    }

    /// `R <- lambda R + x_w x_w^T`, `Pxy <- lambda Pxy + x_t x_w^T`.
    pub fn update(&mut self, x_t: ArrayView1<'_, f64>, x_window: ArrayView1<'_, f64>) -> Result<()> {
        if x_t.len() != self.n || x_window.len() != self.r.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "stats update with x_t len {} and window len {}",
                x_t.len(),
                x_window.len()
            )));
        }
        let xw_col = x_window.view().insert_axis(Axis(1));
        let xw_row = x_window.view().insert_axis(Axis(0));
        general_mat_mul(1.0, &xw_col, &xw_row, self.lambda, &mut self.r);
        let xt_col = x_t.view().insert_axis(Axis(1));
        general_mat_mul(1.0, &xt_col, &xw_row, self.lambda, &mut self.pxy);
        Ok(())
    }

    /// `C <- lambda C + Y^T Y`, `u <- lambda u + Y^T x_t`.
    pub fn update_h(&mut self, y: &Array2<f64>, x_t: ArrayView1<'_, f64>) {
        general_mat_mul(1.0, &y.t(), &y.view(), self.lambda, &mut self.c);
        self.u *= self.lambda;
        self.u += &y.t().dot(&x_t);
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn r(&self) -> &Array2<f64> {
        &self.r
    }

    pub fn pxy(&self) -> &Array2<f64> {
        &self.pxy
    }

    pub fn c(&self) -> &Array2<f64> {
        &self.c
    }

    pub fn u(&self) -> &Array1<f64> {
        &self.u
    }

    /// Lag-`p` block of the cross-correlation matrix.
    pub fn pxy_block(&self, p: usize) -> ArrayView2<'_, f64> {
        self.pxy.slice(s![.., (p - 1) * self.n..p * self.n])
    }
}

/// Fixed-capacity window of lagged samples, newest lag first.
#[derive(Debug, Clone)]
struct LagWindow {
    n: usize,
    order: usize,
    data: Array1<f64>,
}

impl LagWindow {
    fn new(n: usize, order: usize) -> Self {
        Self { n, order, data: Array1::zeros(n * order) }
    }

    /// Shift lags down and insert `x` as lag 1.
    fn push(&mut self, x: ArrayView1<'_, f64>) {
        let slice = self.data.as_slice_mut().expect("lag window is contiguous");
        slice.rotate_right(self.n);
        for (dst, src) in slice[..self.n].iter_mut().zip(x.iter()) {
            *dst = *src;
        }
    }

    /// Stacked `[x_{t-1}; ...; x_{t-P}]`, zero-padded before warm-up.
    fn stacked(&self) -> ArrayView1<'_, f64> {
        self.data.view()
    }

    fn lag_views(&self) -> Vec<ArrayView1<'_, f64>> {
        (0..self.order).map(|p| self.data.slice(s![p * self.n..(p + 1) * self.n])).collect()
    }
}

/// Debiased estimate maintained by the second phase.
#[derive(Debug, Clone)]
struct DebiasState {
    /// Dense signed filter bank restricted to the detected support.
    psi: Array2<f64>,
    support: Array2<bool>,
}

/// Per-step observables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    /// Prediction error of the active filter bank, when defined.
    pub nmse_psi: Option<f64>,
    /// Prediction error of the coefficient model, when defined.
    pub nmse_h: Option<f64>,
    /// Non-zero count of the reported shift operator.
    pub nnz_w: usize,
    /// Whether the debias/coefficient phase ran this step.
    pub debiasing: bool,
}

/// Snapshot of the reported shift operator at one step.
#[derive(Debug, Clone)]
pub struct GsoSnapshot {
    pub step: usize,
    pub w: Array2<f64>,
}

/// Output of a full estimator run.
#[derive(Debug, Clone)]
pub struct EstimatorTrace {
    pub records: Vec<StepRecord>,
    pub snapshots: Vec<GsoSnapshot>,
    /// Step at which the debias phase first ran.
    pub debias_onset: Option<usize>,
    /// Last processed step (early stopping may cut the stream short).
    pub terminal_step: usize,
    pub final_gso: Array2<f64>,
    pub final_coeffs: FilterCoeffs,
}

/// Controls what [`run_adacgp`] records beyond the per-step metrics.
#[derive(Debug, Clone, Copy)]
pub struct TraceOptions {
    /// Record a GSO snapshot every this many steps (0 disables).
    pub snapshot_stride: usize,
    /// Whether snapshots keep the full matrix.
    pub snapshot_matrices: bool,
}

impl Default for TraceOptions {
    fn default() -> Self {
        Self { snapshot_stride: 100, snapshot_matrices: false }
    }
}

/// One online estimator instance. Updates must be serialised by the
/// caller; independent instances may run in parallel.
#[derive(Debug, Clone)]
pub struct AdaCgp {
    cfg: EstimatorConfig,
    n: usize,
    psi: FilterBank,
    w: SplitGso,
    stats: RecursiveStats,
    window: LagWindow,
    filter_step: AdaptiveStep,
    armijo: ArmijoParams,
    debias: Option<DebiasState>,
    h: FilterCoeffs,
    det_psi: SteadyStateDetector,
    det_h: SteadyStateDetector,
    /// Steady state of phase 1 has been declared.
    switched: bool,
    debias_onset: Option<usize>,
    finished: bool,
    step_count: usize,
}

impl AdaCgp {
    pub fn new(n: usize, cfg: EstimatorConfig) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("node count must be >= 1".into()));
        }
        cfg.validate(n)?;
        let order = cfg.order;
        let detector = cfg.detector;
        let epsilon = cfg.epsilon;
        Ok(Self {
            n,
            psi: FilterBank::zeros(n, order),
            w: SplitGso::zeros(n),
            stats: RecursiveStats::new(n, order, cfg.lambda),
            window: LagWindow::new(n, order),
            filter_step: AdaptiveStep::new(n * order, epsilon),
            armijo: ArmijoParams::default(),
            debias: None,
            h: FilterCoeffs::zeros(order),
            det_psi: SteadyStateDetector::new(detector),
            det_h: SteadyStateDetector::new(detector),
            switched: false,
            debias_onset: None,
            finished: false,
            step_count: 0,
            cfg,
        })
    }

    pub fn config(&self) -> &EstimatorConfig {
        &self.cfg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    /// Coefficient-stage steady state has been reached.
    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Step at which the debias phase started, if it has.
    pub fn debias_onset(&self) -> Option<usize> {
        self.debias_onset
    }

    pub fn stats(&self) -> &RecursiveStats {
        &self.stats
    }

    /// Signed value of the sparse filter bank.
    pub fn psi_value(&self) -> Array2<f64> {
        self.psi.value()
    }

    pub fn psi(&self) -> &FilterBank {
        &self.psi
    }

    /// Split GSO of the Path-1 sub-problem.
    pub fn split_gso(&self) -> &SplitGso {
        &self.w
    }

    pub fn coeffs(&self) -> &FilterCoeffs {
        &self.h
    }

    /// Currently reported shift operator estimate.
    pub fn gso(&self) -> Array2<f64> {
        if let Some(d) = &self.debias {
            return d.psi.slice(s![.., ..self.n]).to_owned();
        }
        match self.cfg.path {
            Path::Path1 => self.w.value(),
            Path::Path2 => self.psi.block(1),
        }
    }

    /// Non-zero pattern of the debiased filter bank, when the debias
    /// phase has started.
    pub fn debias_pattern(&self) -> Option<Array2<bool>> {
        self.debias.as_ref().map(|d| d.psi.mapv(|v| v != 0.0))
    }

    /// Non-zero count of the reported shift operator.
    pub fn gso_nnz(&self) -> usize {
        if let Some(d) = &self.debias {
            return d.psi.slice(s![.., ..self.n]).iter().filter(|v| **v != 0.0).count();
        }
        match self.cfg.path {
            Path::Path1 => self.w.nnz(),
            Path::Path2 => self.psi.block(1).iter().filter(|v| **v != 0.0).count(),
        }
    }

    /// Process one sample.
    pub fn step(&mut self, x_t: ArrayView1<'_, f64>) -> Result<StepRecord> {
        if x_t.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "sample length {} does not match node count {}",
                x_t.len(),
                self.n
            )));
        }
        let step_idx = self.step_count + 1;
        let x_norm_sq = x_t.dot(&x_t);
        let window_norm_sq = self.window.stacked().dot(&self.window.stacked());

        // Prediction error of the active filter before any update.
        let nmse_psi = if x_norm_sq > ZERO_NORM_GUARD {
            let active = self.active_psi_value();
            let pred = active.dot(&self.window.stacked());
            let err: f64 =
                x_t.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            if !err.is_finite() {
                return Err(Error::Divergence { step: step_idx, context: "filter state".into() });
            }
            Some(err / x_norm_sq)
        } else {
            None
        };

        self.stats.update(x_t, self.window.stacked())?;

        let sparse_active =
            !(self.switched && self.cfg.debias_mode == DebiasMode::AfterSteadyState);
        if sparse_active {
            self.sparse_phase_step(window_norm_sq).map_err(|e| at_step(e, step_idx))?;
        }

        let debias_active = self.cfg.debias_mode == DebiasMode::Alternating || self.switched;
        let mut nmse_h = None;
        if debias_active {
            if self.debias.is_none() {
                self.debias = Some(self.init_debias());
                self.debias_onset = Some(step_idx);
            } else if self.cfg.debias_mode == DebiasMode::Alternating {
                self.resync_debias_support();
            }
            nmse_h = self
                .debias_phase_step(x_t, x_norm_sq, window_norm_sq)
                .map_err(|e| at_step(e, step_idx))?;
            if let Some(v) = nmse_h {
                if self.det_h.update(v)? {
                    self.finished = true;
                }
            }
        }

        // Phase-1 plateau detection gates the switch to the debias phase.
        if self.cfg.debias_mode == DebiasMode::AfterSteadyState && !self.switched {
            if let Some(v) = nmse_psi {
                if self.det_psi.update(v)? {
                    self.switched = true;
                }
            }
        }

        self.window.push(x_t);
        self.step_count = step_idx;
        Ok(StepRecord {
            step: step_idx,
            nmse_psi,
            nmse_h,
            nnz_w: self.gso_nnz(),
            debiasing: debias_active,
        })
    }

    /// Filter bank the prediction error is measured against.
    fn active_psi_value(&self) -> Array2<f64> {
        match (&self.debias, self.cfg.debias_mode) {
            (Some(d), DebiasMode::AfterSteadyState) => d.psi.clone(),
            _ => self.psi.value(),
        }
    }

    /// Sparse filter update plus the shift-operator sub-problem.
    fn sparse_phase_step(&mut self, window_norm_sq: f64) -> Result<()> {
        let order = self.cfg.order;
        let gamma = self.cfg.gamma;

        // Commutativity gradient only participates on Path 2.
        let q = match self.cfg.path {
            Path::Path2 if gamma > 0.0 => Some(ops::psi_commutator_gradient(&self.psi)),
            _ => None,
        };
        let mu_t: Vec<f64> = (1..=order)
            .map(|p| {
                let q_block = q.as_ref().map(|q| q.slice(s![.., (p - 1) * self.n..p * self.n]));
                sparsity_weight(self.stats.pxy_block(p), q_block, gamma, self.cfg.mu[p - 1])
            })
            .collect();

        let psi_value = self.psi.value();
        let g = ops::psi_gradient(
            &psi_value,
            self.stats.r(),
            self.stats.pxy(),
            gamma,
            q.as_ref(),
            self.cfg.mask.as_ref(),
        );
        let alpha = self.filter_stage_step(&g, &psi_value, window_norm_sq, q.is_some());
        self.psi.projected_step(&g, &mu_t, &vec![alpha; order])?;

        if self.cfg.path == Path::Path1 {
            let psi1 = self.psi.block(1);
            let w_prev = self.w.value();
            let tail = ops::psi_tail_blocks(&self.psi);
            let mut v = &w_prev - &psi1;
            if gamma > 0.0 && order >= 2 {
                v.scaled_add(gamma, &ops::w_commutator_gradient(&w_prev, &tail));
            }
            if let Some(mask) = &self.cfg.mask {
                ops::apply_block_mask(&mut v, mask);
            }
            let beta = match (self.cfg.w_step, self.cfg.step_mode) {
                (Some(s), _) => s,
                (None, StepMode::Fixed(s)) => s,
                (None, _) => {
                    let objective = |w: &Array2<f64>| {
                        let diff = w - &psi1;
                        0.5 * ops::frobenius_sq(&diff)
                            + gamma * ops::w_commutativity_penalty(w, &tail)
                    };
                    armijo_step(objective, &v, &w_prev, 1.0, self.armijo).0
                }
            };
            self.w.projected_step(&v, mu_t[0], beta)?;
        }
        Ok(())
    }

    /// Step size of the filter stage under the configured policy.
    fn filter_stage_step(
        &mut self,
        g: &Array2<f64>,
        psi_value: &Array2<f64>,
        window_norm_sq: f64,
        with_commutativity: bool,
    ) -> f64 {
        let (adaptive, bound) = self.filter_step.step_and_bound(self.stats.r(), window_norm_sq);
        match self.cfg.step_mode {
            StepMode::Adaptive => adaptive,
            StepMode::Fixed(s) => s,
            StepMode::Armijo => {
                let r = self.stats.r();
                let pxy = self.stats.pxy();
                let gamma = self.cfg.gamma;
                let n = self.n;
                let order = self.cfg.order;
                let objective = |psi: &Array2<f64>| {
                    let quad = 0.5 * (psi.dot(r) * psi).sum() - (psi * pxy).sum();
                    if with_commutativity {
                        let blocks: Vec<Array2<f64>> = (0..order)
                            .map(|p| psi.slice(s![.., p * n..(p + 1) * n]).to_owned())
                            .collect();
                        quad + gamma * ops::psi_commutativity_penalty(&blocks)
                    } else {
                        quad
                    }
                };
                armijo_step(objective, g, psi_value, bound, self.armijo).0
            }
        }
    }

    /// Debias-stage step size: backtracking line search on the
    /// support-restricted least-squares objective, started at the
    /// stability bound. A strong sufficient-decrease constant keeps every
    /// accepted step well inside the stable region, where the filter
    /// stage's window-normalised rule would crawl and the raw bound would
    /// leave the top correlation mode oscillating.
    fn debias_stage_step(
        &mut self,
        g: &Array2<f64>,
        psi_value: &Array2<f64>,
        window_norm_sq: f64,
    ) -> f64 {
        let (_, bound) = self.filter_step.step_and_bound(self.stats.r(), window_norm_sq);
        match self.cfg.step_mode {
            StepMode::Fixed(s) => s,
            _ => {
                let r = self.stats.r();
                let pxy = self.stats.pxy();
                let objective =
                    |psi: &Array2<f64>| 0.5 * (psi.dot(r) * psi).sum() - (psi * pxy).sum();
                let params = ArmijoParams { c: 0.3, ..self.armijo };
                let accepted = armijo_step(objective, g, psi_value, bound, params).0;
                accepted.min(self.cfg.debias_step_scale * bound)
            }
        }
    }

    /// Support for the debias phase: detected shift-operator pattern for
    /// block 1, the sparse filter pattern elsewhere.
    fn debias_support(&self) -> Array2<bool> {
        let mut support = self.psi.support();
        if self.cfg.path == Path::Path1 {
            let w_support = self.w.support();
            support.slice_mut(s![.., ..self.n]).assign(&w_support);
        }
        support
    }

    /// Initial debiased bank: sparse filter values on the support, with
    /// detected edges missing from the filter seeded from the split GSO.
    fn init_debias(&self) -> DebiasState {
        let support = self.debias_support();
        let mut psi = self.psi.value();
        if self.cfg.path == Path::Path1 {
            let w_value = self.w.value();
            let mut block1 = psi.slice_mut(s![.., ..self.n]);
            ndarray::Zip::from(&mut block1).and(&w_value).for_each(|b, &w| {
                if *b == 0.0 && w != 0.0 {
                    *b = w;
                }
            });
        }
        ndarray::Zip::from(&mut psi).and(&support).for_each(|v, &keep| {
            if !keep {
                *v = 0.0;
            }
        });
        DebiasState { psi, support }
    }

    /// Track the evolving detected pattern while alternating: entries that
    /// left the support are zeroed, new entries are seeded from phase 1.
    fn resync_debias_support(&mut self) {
        let support = self.debias_support();
        let seed = {
            let mut seed = self.psi.value();
            if self.cfg.path == Path::Path1 {
                let w_value = self.w.value();
                let mut block1 = seed.slice_mut(s![.., ..self.n]);
                ndarray::Zip::from(&mut block1).and(&w_value).for_each(|b, &w| {
                    if *b == 0.0 && w != 0.0 {
                        *b = w;
                    }
                });
            }
            seed
        };
        let d = self.debias.as_mut().expect("debias state exists");
        ndarray::Zip::from(&mut d.psi).and(&support).and(&seed).for_each(|v, &keep, &sv| {
            if !keep {
                *v = 0.0;
            } else if *v == 0.0 {
                *v = sv;
            }
        });
        d.support = support;
    }

    /// Debias gradient step on the frozen pattern plus the coefficient
    /// update; returns the coefficient prediction error when defined.
    fn debias_phase_step(
        &mut self,
        x_t: ArrayView1<'_, f64>,
        x_norm_sq: f64,
        window_norm_sq: f64,
    ) -> Result<Option<f64>> {
        let order = self.cfg.order;
        let floor = self.cfg.reweight_floor;

        // Unregularised gradient restricted to the detected support.
        let d = self.debias.as_ref().expect("debias state exists");
        if d.support.iter().any(|s| *s) {
            let mut g = ops::psi_gradient(
                &d.psi,
                self.stats.r(),
                self.stats.pxy(),
                0.0,
                None,
                None,
            );
            ndarray::Zip::from(&mut g).and(&d.support).for_each(|v, &keep| {
                if !keep {
                    *v = 0.0;
                }
            });
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: 0, context: "debias gradient".into() });
            }
            let psi_snapshot = d.psi.clone();
            let alpha = self.debias_stage_step(&g, &psi_snapshot, window_norm_sq);
            let d = self.debias.as_mut().expect("debias state exists");
            d.psi.scaled_add(-alpha, &g);
        }

        // Coefficient stage against the debiased shift operator.
        let d = self.debias.as_ref().expect("debias state exists");
        let w_hat = d.psi.slice(s![.., ..self.n]).to_owned();
        let lags = self.window.lag_views();
        let y = ops::build_y_matrix(&w_hat, &lags, order)?;
        let h_vec = self.h.values().clone();
        let pred = y.dot(&h_vec);
        let nmse_h = if x_norm_sq > ZERO_NORM_GUARD {
            let err: f64 = x_t.iter().zip(pred.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
            Some(err / x_norm_sq)
        } else {
            None
        };

        if !pred.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence { step: 0, context: "coefficient prediction".into() });
        }
        let residual = &x_t - &pred;
        let eta_t = eta_weight(y.t().dot(&x_t).view(), self.cfg.eta);
        let reweight = h_vec.mapv(|h| {
            if h == 0.0 {
                0.0
            } else {
                h.signum() / (floor + h.abs())
            }
        });
        let update = match self.cfg.h_mode {
            HUpdateMode::Instantaneous => {
                // h <- h + rho (Y^T e - eta_t b)
                let rho = match self.cfg.step_mode {
                    StepMode::Fixed(s) => s,
                    _ => {
                        let objective = |h: &Array1<f64>| {
                            let e = &x_t - &y.dot(h);
                            0.5 * e.dot(&e)
                        };
                        let grad = -y.t().dot(&residual);
                        armijo_step(objective, &grad, &h_vec, 1.0, self.armijo).0
                    }
                };
                let mut delta = y.t().dot(&residual);
                delta.scaled_add(-eta_t, &reweight);
                delta * rho
            }
            HUpdateMode::Accumulated => {
                // h <- h - rho (C h - u + eta_t b), with the step searched
                // on the accumulated quadratic the gradient belongs to.
                self.stats.update_h(&y, x_t);
                let grad = self.stats.c().dot(&h_vec) - self.stats.u();
                let rho = match self.cfg.step_mode {
                    StepMode::Fixed(s) => s,
                    _ => {
                        let c = self.stats.c();
                        let u = self.stats.u();
                        let objective =
                            |h: &Array1<f64>| 0.5 * h.dot(&c.dot(h)) - u.dot(h);
                        armijo_step(objective, &grad, &h_vec, 1.0, self.armijo).0
                    }
                };
                let mut grad = grad;
                grad.scaled_add(eta_t, &reweight);
                grad * (-rho)
            }
        };
        {
            let values = self.h.values_mut();
            *values += &update;
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: 0, context: "coefficient update".into() });
            }
        }
        Ok(nmse_h)
    }
}

fn at_step(e: Error, step: usize) -> Error {
    match e {
        Error::Divergence { context, .. } => Error::Divergence { step, context },
        other => other,
    }
}

/// Drive an estimator over a stream, recording per-step metrics and
/// optional GSO snapshots, stopping early once the coefficient-stage
/// steady state is reached.
pub fn run_adacgp(
    stream: &SignalStream,
    cfg: EstimatorConfig,
    options: TraceOptions,
) -> Result<EstimatorTrace> {
    run_adacgp_with(stream, cfg, options, |_, _| {})
}

/// [`run_adacgp`] with a per-step observer (used to track errors against
/// a known ground truth while the run progresses).
pub fn run_adacgp_with<F>(
    stream: &SignalStream,
    cfg: EstimatorConfig,
    options: TraceOptions,
    mut observer: F,
) -> Result<EstimatorTrace>
where
    F: FnMut(&AdaCgp, &StepRecord),
{
    if stream.len() <= cfg.order {
        return Err(Error::InvalidParameter(format!(
            "stream of {} samples is too short for order {}",
            stream.len(),
            cfg.order
        )));
    }
    let mut estimator = AdaCgp::new(stream.n(), cfg)?;
    let mut records = Vec::with_capacity(stream.len());
    let mut snapshots = Vec::new();
    for x_t in stream.iter() {
        let record = estimator.step(x_t)?;
        observer(&estimator, &record);
        if options.snapshot_matrices
            && options.snapshot_stride > 0
            && record.step % options.snapshot_stride == 0
        {
            snapshots.push(GsoSnapshot { step: record.step, w: estimator.gso() });
        }
        records.push(record);
        if estimator.finished() {
            break;
        }
    }
    Ok(EstimatorTrace {
        debias_onset: estimator.debias_onset(),
        terminal_step: estimator.step_count(),
        final_gso: estimator.gso(),
        final_coeffs: estimator.coeffs().clone(),
        records,
        snapshots,
    })
}
