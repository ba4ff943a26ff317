//! Variable splitting of signed matrices into non-negative parts.
//!
//! Representing a matrix as `X = X+ - X-` with `X+, X- >= 0` turns an l1
//! penalty into a linear term plus a non-negativity projection, so entries
//! can reach exactly zero. A [`FilterBank`] holds the concatenation of `P`
//! graph filters as one `N x NP` split pair; [`SplitGSO`] is the `N x N`
//! analogue for the shift operator.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Concatenated graph filters `[Psi_1, ..., Psi_P]` stored as a split pair.
#[derive(Debug, Clone)]
pub struct FilterBank {
    n: usize,
    order: usize,
    pos: Array2<f64>,
    neg: Array2<f64>,
}

impl FilterBank {
    pub fn zeros(n: usize, order: usize) -> Self {
        Self { n, order, pos: Array2::zeros((n, n * order)), neg: Array2::zeros((n, n * order)) }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Signed value `Psi+ - Psi-`.
    pub fn value(&self) -> Array2<f64> {
        &self.pos - &self.neg
    }

    /// Signed value of the lag-`p` block (`1 <= p <= order`).
    pub fn block(&self, p: usize) -> Array2<f64> {
        assert!(p >= 1 && p <= self.order, "block {p} out of range");
        let cols = self.block_cols(p);
        &self.pos.slice(s![.., cols.clone()]) - &self.neg.slice(s![.., cols])
    }

    fn block_cols(&self, p: usize) -> std::ops::Range<usize> {
        (p - 1) * self.n..p * self.n
    }

    pub fn pos(&self) -> ArrayView2<'_, f64> {
        self.pos.view()
    }

    pub fn neg(&self) -> ArrayView2<'_, f64> {
        self.neg.view()
    }

    /// Entries that are non-zero in the signed value.
    pub fn support(&self) -> Array2<bool> {
        let mut mask = Array2::from_elem((self.n, self.n * self.order), false);
        ndarray::Zip::from(&mut mask).and(&self.pos).and(&self.neg).for_each(|m, &p, &q| {
            *m = p - q != 0.0;
        });
        mask
    }

    pub fn nnz(&self) -> usize {
        ndarray::Zip::from(&self.pos)
            .and(&self.neg)
            .fold(0, |acc, &p, &q| if p - q != 0.0 { acc + 1 } else { acc })
    }

    /// Projected gradient step on both split parts.
    ///
    /// `mu` holds the per-block sparsity weights `mu_{p,t}` and `steps` the
    /// per-block step sizes; `grad` is the signed gradient. The update is
    /// `Psi+ <- (Psi+ - step (mu + g))_+`, `Psi- <- (Psi- - step (mu - g))_+`
    /// applied block-wise.
    pub fn projected_step(&mut self, grad: &Array2<f64>, mu: &[f64], steps: &[f64]) -> Result<()> {
        if grad.dim() != self.pos.dim() {
            return Err(Error::DimensionMismatch(format!(
                "gradient shape {:?} does not match filter bank {:?}",
                grad.dim(),
                self.pos.dim()
            )));
        }
        if mu.len() != self.order || steps.len() != self.order {
            return Err(Error::DimensionMismatch(
                "need one sparsity weight and one step size per block".into(),
            ));
        }
        if grad.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: 0, context: "filter bank gradient".into() });
        }
        for p in 1..=self.order {
            let cols = self.block_cols(p);
            let alpha = steps[p - 1];
            let mu_p = mu[p - 1];
            let g = grad.slice(s![.., cols.clone()]);
            let mut pos = self.pos.slice_mut(s![.., cols.clone()]);
            ndarray::Zip::from(&mut pos).and(&g).for_each(|x, &gv| {
                *x = (*x - alpha * (mu_p + gv)).max(0.0);
            });
            let mut neg = self.neg.slice_mut(s![.., cols]);
            ndarray::Zip::from(&mut neg).and(&g).for_each(|x, &gv| {
                *x = (*x - alpha * (mu_p - gv)).max(0.0);
            });
        }
        Ok(())
    }

    /// Overwrite the signed value, putting positives in `pos` and negatives
    /// in `neg`. Used when resuming a debiased estimate.
    pub fn assign_value(&mut self, value: &Array2<f64>) -> Result<()> {
        if value.dim() != self.pos.dim() {
            return Err(Error::DimensionMismatch("filter bank assignment shape".into()));
        }
        ndarray::Zip::from(&mut self.pos).and(&mut self.neg).and(value).for_each(|p, q, &v| {
            *p = v.max(0.0);
            *q = (-v).max(0.0);
        });
        Ok(())
    }
}

/// Split non-negative pair for the estimated shift operator.
#[derive(Debug, Clone)]
pub struct SplitGso {
    pos: Array2<f64>,
    neg: Array2<f64>,
}

impl SplitGso {
    pub fn zeros(n: usize) -> Self {
        Self { pos: Array2::zeros((n, n)), neg: Array2::zeros((n, n)) }
    }

    pub fn value(&self) -> Array2<f64> {
        &self.pos - &self.neg
    }

    pub fn pos(&self) -> ArrayView2<'_, f64> {
        self.pos.view()
    }

    pub fn neg(&self) -> ArrayView2<'_, f64> {
        self.neg.view()
    }

    pub fn support(&self) -> Array2<bool> {
        let mut mask = Array2::from_elem(self.pos.dim(), false);
        ndarray::Zip::from(&mut mask).and(&self.pos).and(&self.neg).for_each(|m, &p, &q| {
            *m = p - q != 0.0;
        });
        mask
    }

    pub fn nnz(&self) -> usize {
        ndarray::Zip::from(&self.pos)
            .and(&self.neg)
            .fold(0, |acc, &p, &q| if p - q != 0.0 { acc + 1 } else { acc })
    }

    /// Projected step `W+ <- (W+ - beta (mu1 + v))_+`,
    /// `W- <- (W- - beta (mu1 - v))_+`.
    pub fn projected_step(&mut self, v: &Array2<f64>, mu1: f64, beta: f64) -> Result<()> {
        if v.dim() != self.pos.dim() {
            return Err(Error::DimensionMismatch("GSO gradient shape".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Divergence { step: 0, context: "GSO gradient".into() });
        }
        ndarray::Zip::from(&mut self.pos).and(v).for_each(|x, &vv| {
            *x = (*x - beta * (mu1 + vv)).max(0.0);
        });
        ndarray::Zip::from(&mut self.neg).and(v).for_each(|x, &vv| {
            *x = (*x - beta * (mu1 - vv)).max(0.0);
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_bank_stays_zero_under_zero_gradient() {
        let mut bank = FilterBank::zeros(2, 2);
        bank.projected_step(&Array2::zeros((2, 4)), &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(bank.value(), Array2::<f64>::zeros((2, 4)));
        assert_eq!(bank.nnz(), 0);
    }

    #[test]
    fn projection_floor_produces_exact_zero() {
        // Entry 0.1 with zero gradient and mu * alpha = 0.2 projects to 0.
        let mut bank = FilterBank::zeros(1, 1);
        bank.assign_value(&array![[0.1]]).unwrap();
        bank.projected_step(&array![[0.0]], &[0.2], &[1.0]).unwrap();
        assert_eq!(bank.value()[[0, 0]], 0.0);
        assert_eq!(bank.nnz(), 0);
    }

    #[test]
    fn scalar_update_matches_hand_evaluation() {
        // psi+ = 0.5, psi- = 0, g = -0.3, mu = 0.1, alpha = 1:
        // psi+ -> max(0, 0.5 - (0.1 - 0.3)) = 0.7, psi- -> max(0, -(0.1+0.3)) = 0.
        let mut bank = FilterBank::zeros(1, 1);
        bank.assign_value(&array![[0.5]]).unwrap();
        bank.projected_step(&array![[-0.3]], &[0.1], &[1.0]).unwrap();
        assert_eq!(bank.pos()[[0, 0]], 0.7);
        assert_eq!(bank.neg()[[0, 0]], 0.0);
    }

    #[test]
    fn split_parts_stay_non_negative() {
        let mut bank = FilterBank::zeros(3, 2);
        let mut gso = SplitGso::zeros(3);
        let g = array![
            [0.4, -0.2, 0.9, -0.5, 0.0, 0.3],
            [-0.8, 0.1, 0.2, 0.7, -0.6, 0.0],
            [0.05, -0.9, 0.4, -0.1, 0.8, -0.3]
        ];
        for _ in 0..5 {
            bank.projected_step(&g, &[0.05, 0.02], &[0.5, 0.25]).unwrap();
            gso.projected_step(&g.slice(s![.., ..3]).to_owned(), 0.05, 0.5).unwrap();
            assert!(bank.pos().iter().all(|v| *v >= 0.0));
            assert!(bank.neg().iter().all(|v| *v >= 0.0));
            assert!(gso.pos().iter().all(|v| *v >= 0.0));
            assert!(gso.neg().iter().all(|v| *v >= 0.0));
        }
    }

    #[test]
    fn gso_at_fixed_point_stays_put() {
        // V = 0 with no sparsity weight: the projected step is a no-op.
        let mut gso = SplitGso::zeros(2);
        gso.pos[[0, 1]] = 0.4;
        gso.neg[[1, 0]] = 0.2;
        let before = gso.value();
        gso.projected_step(&Array2::zeros((2, 2)), 0.0, 1.0).unwrap();
        assert_eq!(gso.value(), before);
    }

    #[test]
    fn gso_scalar_update_matches_hand_evaluation() {
        // W = 0.2, V = -0.3, mu1 = 0.05, beta = 1 -> W+ = 0.45.
        let mut gso = SplitGso::zeros(1);
        gso.pos[[0, 0]] = 0.2;
        gso.projected_step(&array![[-0.3]], 0.05, 1.0).unwrap();
        assert_eq!(gso.pos()[[0, 0]], 0.45);
        assert_eq!(gso.neg()[[0, 0]], 0.0);
    }

    #[test]
    fn non_finite_gradient_is_rejected() {
        let mut bank = FilterBank::zeros(1, 1);
        let res = bank.projected_step(&array![[f64::NAN]], &[0.0], &[1.0]);
        assert!(matches!(res, Err(Error::Divergence { .. })));
    }

    #[test]
    fn block_views_address_the_expected_columns() {
        let mut bank = FilterBank::zeros(2, 2);
        let value = array![[1.0, 0.0, -2.0, 0.0], [0.0, 3.0, 0.0, 4.0]];
        bank.assign_value(&value).unwrap();
        assert_eq!(bank.block(1), array![[1.0, 0.0], [0.0, 3.0]]);
        assert_eq!(bank.block(2), array![[-2.0, 0.0], [0.0, 4.0]]);
        assert_eq!(bank.value(), value);
    }
}
