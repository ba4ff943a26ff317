//! Matrix kernels used by the online estimator: commutators, the
//! least-squares and shift-invariance gradients, and the lagged
//! graph-shifted regressor matrix for coefficient estimation.

use ndarray::{s, Array1, Array2, ArrayView1};

use crate::error::{Error, Result};
use crate::sim::FilterCoeffs;
use crate::split::FilterBank;

/// Commutator `[A, B] = AB - BA`.
pub fn commutator(a: &Array2<f64>, b: &Array2<f64>) -> Result<Array2<f64>> {
    if a.dim() != b.dim() || a.nrows() != a.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "commutator needs equal square matrices, got {:?} and {:?}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(a.dot(b) - b.dot(a))
}

/// Squared Frobenius norm.
pub fn frobenius_sq(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Shift-invariance penalty over filter blocks:
/// `0.5 * sum_{i<j} ||[Psi_i, Psi_j]||_F^2`.
pub fn psi_commutativity_penalty(blocks: &[Array2<f64>]) -> f64 {
    let mut acc = 0.0;
    for i in 0..blocks.len() {
        for j in (i + 1)..blocks.len() {
            let c = blocks[i].dot(&blocks[j]) - blocks[j].dot(&blocks[i]);
            acc += frobenius_sq(&c);
        }
    }
    0.5 * acc
}

/// Gradient of [`psi_commutativity_penalty`] with respect to every block,
/// concatenated into an `N x NP` matrix. Block `p` equals
/// `sum_{k != p} ([Psi_p, Psi_k] Psi_k^T - Psi_k^T [Psi_p, Psi_k])`.
pub fn psi_commutator_gradient(psi: &FilterBank) -> Array2<f64> {
    let n = psi.n();
    let order = psi.order();
    let blocks: Vec<Array2<f64>> = (1..=order).map(|p| psi.block(p)).collect();
    let mut q = Array2::zeros((n, n * order));
    for p in 0..order {
        let mut q_p = q.slice_mut(s![.., p * n..(p + 1) * n]);
        for k in 0..order {
            if k == p {
                continue;
            }
            let c = blocks[p].dot(&blocks[k]) - blocks[k].dot(&blocks[p]);
            q_p += &(c.dot(&blocks[k].t()) - blocks[k].t().dot(&c));
        }
    }
    q
}

/// Shift-invariance penalty of the GSO sub-problem:
/// `0.5 * sum_{k=2}^P ||[W, Psi_k]||_F^2`, with `psi_tail` holding the
/// blocks `Psi_2, ..., Psi_P`.
pub fn w_commutativity_penalty(w: &Array2<f64>, psi_tail: &[Array2<f64>]) -> f64 {
    let mut acc = 0.0;
    for b in psi_tail {
        let c = w.dot(b) - b.dot(w);
        acc += frobenius_sq(&c);
    }
    0.5 * acc
}

/// Gradient of [`w_commutativity_penalty`]:
/// `sum_{k=2}^P ([W, Psi_k] Psi_k^T - Psi_k^T [W, Psi_k])`. Zero when P = 1.
pub fn w_commutator_gradient(w: &Array2<f64>, psi_tail: &[Array2<f64>]) -> Array2<f64> {
    let n = w.nrows();
    let mut s = Array2::zeros((n, n));
    for b in psi_tail {
        let c = w.dot(b) - b.dot(w);
        s += &(c.dot(&b.t()) - b.t().dot(&c));
    }
    s
}

/// Blocks `Psi_2, ..., Psi_P` of a filter bank, used by the GSO sub-problem.
pub fn psi_tail_blocks(psi: &FilterBank) -> Vec<Array2<f64>> {
    (2..=psi.order()).map(|p| psi.block(p)).collect()
}

/// Full gradient of the filter-bank sub-problem at the previous iterate:
/// `G = Psi R - (Pxy - gamma Q)`. Pass `q = None` when the commutativity
/// term is deferred (Path 1). A mask of allowed edges, when given, zeroes
/// the gradient outside the permitted pattern of every block.
pub fn psi_gradient(
    psi_value: &Array2<f64>,
    r: &Array2<f64>,
    pxy: &Array2<f64>,
    gamma: f64,
    q: Option<&Array2<f64>>,
    mask: Option<&Array2<bool>>,
) -> Array2<f64> {
    let mut g = psi_value.dot(r) - pxy;
    if let Some(q) = q {
        g.scaled_add(gamma, q);
    }
    if let Some(mask) = mask {
        apply_block_mask(&mut g, mask);
    }
    g
}

/// Zero the entries of each `N x N` block that fall outside the allowed
/// edge pattern.
pub fn apply_block_mask(m: &mut Array2<f64>, mask: &Array2<bool>) {
    let n = mask.nrows();
    let order = m.ncols() / n;
    for p in 0..order {
        let mut block = m.slice_mut(s![.., p * n..(p + 1) * n]);
        ndarray::Zip::from(&mut block).and(mask).for_each(|v, &keep| {
            if !keep {
                *v = 0.0;
            }
        });
    }
}

/// Lagged graph-shifted regressor matrix
/// `Y_t = [x_{t-1}, W x_{t-1}, ..., x_{t-P}, ..., W^P x_{t-P}]`
/// with `M = P(P+3)/2` columns; powers are built by iterated shifting.
pub fn build_y_matrix(
    w: &Array2<f64>,
    history: &[ArrayView1<'_, f64>],
    order: usize,
) -> Result<Array2<f64>> {
    let n = w.nrows();
    if history.len() < order {
        return Err(Error::DimensionMismatch(format!(
            "need {order} lagged samples, got {}",
            history.len()
        )));
    }
    let m = FilterCoeffs::len_for_order(order);
    let mut y = Array2::zeros((n, m));
    let mut col = 0;
    for p in 1..=order {
        let lagged = &history[p - 1];
        if lagged.len() != n {
            return Err(Error::DimensionMismatch("lagged sample length".into()));
        }
        let mut shifted: Array1<f64> = lagged.to_owned();
        y.column_mut(col).assign(&shifted);
        col += 1;
        for _ in 1..=p {
            shifted = w.dot(&shifted);
            y.column_mut(col).assign(&shifted);
            col += 1;
        }
    }
    debug_assert_eq!(col, m);
    Ok(y)
}
