//! Causal graph process simulation.
//!
//! Signals follow the recursion `x_t = sum_p H_p(W, h_p) x_{t-p} + w_t`
//! where `H_p` is an order-`p` polynomial graph filter and `w_t` is unit
//! white noise. Ground-truth coefficient vectors use a per-lag block
//! layout `(h_{1,0}, h_{1,1}, h_{2,0}, ..., h_{P,P})` of total length
//! `M = P(P+3)/2`.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::graph::{mix_seed, GraphShiftOperator};

/// Any state magnitude beyond this is reported as divergence.
pub const DIVERGENCE_GUARD: f64 = 1e12;

/// Graph filter coefficients for all lags, block layout per lag.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterCoeffs {
    order: usize,
    values: Array1<f64>,
}

impl FilterCoeffs {
    /// Total coefficient count for a model of order `p`: `p(p+3)/2`.
    pub fn len_for_order(order: usize) -> usize {
        order * (order + 3) / 2
    }

    /// First index of the lag-`p` block (`1 <= p <= order`).
    pub fn block_start(p: usize) -> usize {
        // Blocks 1..p-1 hold 2 + 3 + ... + p entries.
        (p - 1) * (p + 2) / 2
    }

    pub fn new(order: usize, values: Array1<f64>) -> Result<Self> {
        if order == 0 {
            return Err(Error::InvalidParameter("filter order must be >= 1".into()));
        }
        let expected = Self::len_for_order(order);
        if values.len() != expected {
            return Err(Error::DimensionMismatch(format!(
                "order {order} needs {expected} coefficients, got {}",
                values.len()
            )));
        }
        Ok(Self { order, values })
    }

    pub fn zeros(order: usize) -> Self {
        Self { order, values: Array1::zeros(Self::len_for_order(order)) }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut Array1<f64> {
        &mut self.values
    }

    /// Coefficients of the lag-`p` filter, `p+1` of them.
    pub fn block(&self, p: usize) -> &[f64] {
        assert!(p >= 1 && p <= self.order, "lag {p} out of range");
        let start = Self::block_start(p);
        &self.values.as_slice().unwrap()[start..start + p + 1]
    }
}

/// A multivariate signal stream, one row per retained time step.
#[derive(Debug, Clone)]
pub struct SignalStream {
    samples: Array2<f64>,
    burn_in: usize,
}

impl SignalStream {
    pub fn new(samples: Array2<f64>, burn_in: usize) -> Self {
        Self { samples, burn_in }
    }

    pub fn n(&self) -> usize {
        self.samples.ncols()
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    /// Leading samples that were generated and discarded.
    pub fn burn_in(&self) -> usize {
        self.burn_in
    }

    pub fn sample(&self, t: usize) -> ArrayView1<'_, f64> {
        self.samples.row(t)
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = ArrayView1<'_, f64>> {
        self.samples.axis_iter(Axis(0))
    }
}

/// Draw ground-truth filter coefficients for a model of order `p_max`.
///
/// The lag-1 block is the pure shift (`h_{1,0} = 0`, `h_{1,1} = 1`) so that
/// the first graph filter coincides with the GSO itself. Higher-lag
/// coefficients satisfy `2^{i+j} h_{ij} ~ 0.5 U(-1,-0.45) + 0.5 U(0.45,1)`
/// and are divided by 1.5 for stability.
pub fn generate_filter_coeffs(p_max: usize, seed: u64) -> Result<FilterCoeffs> {
    if p_max == 0 {
        return Err(Error::InvalidParameter("filter order must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = FilterCoeffs::zeros(p_max);
    coeffs.values[FilterCoeffs::block_start(1) + 1] = 1.0;
    for i in 2..=p_max {
        let start = FilterCoeffs::block_start(i);
        for j in 0..=i {
            let magnitude = rng.random_range(0.45..=1.0);
            let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
            coeffs.values[start + j] = sign * magnitude / 2f64.powi((i + j) as i32) / 1.5;
        }
    }
    Ok(coeffs)
}

/// Evaluate `sum_l h_l W^l x` by iterated shifting, never forming `W^l`.
pub fn apply_graph_filter(
    w: &Array2<f64>,
    h_block: &[f64],
    x: ArrayView1<'_, f64>,
) -> Result<Array1<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::DimensionMismatch("graph filter needs a square GSO".into()));
    }
    if x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} does not match node count {n}",
            x.len()
        )));
    }
    if h_block.is_empty() {
        return Err(Error::InvalidParameter("empty coefficient block".into()));
    }
    let mut shifted = x.to_owned();
    let mut out = &shifted * h_block[0];
    for &h in &h_block[1..] {
        shifted = w.dot(&shifted);
        out.scaled_add(h, &shifted);
    }
    Ok(out)
}

/// Dense filter matrix `sum_l h_l W^l`. Unlike the signal-path
/// evaluation this forms the powers explicitly; it exists for
/// stability diagnostics, not for per-sample filtering.
pub fn filter_matrix(w: &Array2<f64>, h_block: &[f64]) -> Result<Array2<f64>> {
    let n = w.nrows();
    if w.ncols() != n {
        return Err(Error::DimensionMismatch("graph filter needs a square GSO".into()));
    }
    if h_block.is_empty() {
        return Err(Error::InvalidParameter("empty coefficient block".into()));
    }
    let mut acc = Array2::eye(n) * h_block[0];
    let mut power = Array2::eye(n);
    for &h in &h_block[1..] {
        power = w.dot(&power);
        acc.scaled_add(h, &power);
    }
    Ok(acc)
}

/// Spectral radius of the stacked companion form of the lag filters.
/// The signal recursion is asymptotically stable iff this is below one.
pub fn cgp_companion_radius(gso: &GraphShiftOperator, coeffs: &FilterCoeffs) -> Result<f64> {
    let n = gso.n();
    let order = coeffs.order();
    let mut companion = Array2::zeros((n * order, n * order));
    for p in 1..=order {
        let block = filter_matrix(gso.weights(), coeffs.block(p))?;
        companion.slice_mut(ndarray::s![..n, (p - 1) * n..p * n]).assign(&block);
    }
    for p in 1..order {
        for i in 0..n {
            companion[[p * n + i, (p - 1) * n + i]] = 1.0;
        }
    }
    Ok(crate::graph::spectral_radius(&companion))
}

/// Simulate a CGP stream of `t_len` retained samples after `burn_in`
/// discarded ones. The first `P` generated samples are pinned to zero.
pub fn simulate_cgp(
    gso: &GraphShiftOperator,
    coeffs: &FilterCoeffs,
    t_len: usize,
    burn_in: usize,
    seed: u64,
) -> Result<SignalStream> {
    if t_len == 0 {
        return Err(Error::InvalidParameter("stream length must be positive".into()));
    }
    let n = gso.n();
    let order = coeffs.order();
    let w = gso.weights();
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xc6f5));
    let total = t_len + burn_in;
    let mut samples = Array2::zeros((total, n));

    for t in 0..total {
        if t < order {
            continue; // x_{t<=P} = 0
        }
        let mut x_t: Array1<f64> =
            Array1::from_iter((0..n).map(|_| StandardNormal.sample(&mut rng)));
        for p in 1..=order {
            let lagged = samples.row(t - p);
            x_t += &apply_graph_filter(w, coeffs.block(p), lagged)?;
        }
        if x_t.iter().any(|v| !v.is_finite() || v.abs() > DIVERGENCE_GUARD) {
            return Err(Error::Divergence { step: t, context: "CGP simulation".into() });
        }
        samples.row_mut(t).assign(&x_t);
    }

    let retained = samples.slice(ndarray::s![burn_in.., ..]).to_owned();
    Ok(SignalStream::new(retained, burn_in))
}
