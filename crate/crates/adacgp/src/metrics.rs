//! Evaluation metrics: normalised prediction and GSO errors,
//! edge-classification rates and topology stability analytics.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Confusion-matrix summary over off-diagonal support.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EdgeClassificationReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Missed-edge rate, `1 - recall`.
    pub p_miss: f64,
    /// False-alarm rate over true non-edges.
    pub p_false_alarm: f64,
    pub true_nnz: usize,
    pub est_nnz: usize,
}

/// `||x - prediction||^2 / ||x||^2`.
pub fn nmse_prediction(x: ArrayView1<'_, f64>, prediction: ArrayView1<'_, f64>) -> Result<f64> {
    if x.len() != prediction.len() {
        return Err(Error::DimensionMismatch("prediction length".into()));
    }
    let denom: f64 = x.dot(&x);
    if denom <= 0.0 {
        return Err(Error::UndefinedMetric("prediction NMSE with a zero target".into()));
    }
    let mut num = 0.0;
    for (a, b) in x.iter().zip(prediction.iter()) {
        num += (a - b) * (a - b);
    }
    Ok(num / denom)
}

/// `||W_true - W_est||_F^2 / ||W_true||_F^2`.
pub fn nmse_gso(w_true: ArrayView2<'_, f64>, w_est: ArrayView2<'_, f64>) -> Result<f64> {
    if w_true.dim() != w_est.dim() {
        return Err(Error::DimensionMismatch("GSO shapes".into()));
    }
    let denom: f64 = w_true.iter().map(|v| v * v).sum();
    if denom <= 0.0 {
        return Err(Error::UndefinedMetric("GSO NMSE with a zero reference".into()));
    }
    let num: f64 = w_true.iter().zip(w_est.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Classify off-diagonal entries of `w_est` as edges when their magnitude
/// exceeds `tol`, against the same rule on `w_true`.
pub fn classify_edges(
    w_true: ArrayView2<'_, f64>,
    w_est: ArrayView2<'_, f64>,
    tol: f64,
) -> Result<EdgeClassificationReport> {
    if w_true.dim() != w_est.dim() {
        return Err(Error::DimensionMismatch("GSO shapes".into()));
    }
    let n = w_true.nrows();
    let (mut tp, mut fp, mut fname, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let truth = w_true[[i, j]].abs() > tol;
            let est = w_est[[i, j]].abs() > tol;
            match (truth, est) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fname += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let true_nnz = tp + fname;
    let est_nnz = tp + fp;
    let precision = if est_nnz > 0 {
        tp as f64 / est_nnz as f64
    } else if true_nnz == 0 {
        1.0
    } else {
        0.0
    };
    let recall = if true_nnz > 0 { tp as f64 / true_nnz as f64 } else { 1.0 };
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    let p_false_alarm = if fp + tn > 0 { fp as f64 / (fp + tn) as f64 } else { 0.0 };
    Ok(EdgeClassificationReport {
        precision,
        recall,
        f1,
        p_miss: 1.0 - recall,
        p_false_alarm,
        true_nnz,
        est_nnz,
    })
}

/// Out-strength minus in-strength of one node.
pub fn out_in_degree(w: ArrayView2<'_, f64>, node: usize) -> Result<f64> {
    if node >= w.nrows() || w.nrows() != w.ncols() {
        return Err(Error::InvalidParameter(format!(
            "node {node} out of range for a {}x{} matrix",
            w.nrows(),
            w.ncols()
        )));
    }
    Ok(w.row(node).sum() - w.column(node).sum())
}

/// Frobenius distances `||W_t - W_{t-lag}||_F` over a snapshot sequence.
pub fn gso_lag_stability(snapshots: &[Array2<f64>], lag: usize) -> Result<Vec<f64>> {
    if lag == 0 {
        return Err(Error::InvalidParameter("lag must be positive".into()));
    }
    if lag >= snapshots.len() {
        return Err(Error::InvalidParameter(format!(
            "lag {lag} too large for {} snapshots",
            snapshots.len()
        )));
    }
    Ok((lag..snapshots.len())
        .map(|t| {
            let diff = &snapshots[t] - &snapshots[t - lag];
            diff.iter().map(|v| v * v).sum::<f64>().sqrt()
        })
        .collect())
}
