//! Visual data tensorization: block-structured reshaping of images (and
//! videos) into high-order tensors.
//!
//! An `H × W × trailing…` image with `H = Π m_k`, `W = Π n_k` is reshaped to
//! `(m_1 … m_K, n_1 … n_K, trailing…)`, permuted to
//! `(m_1, n_1, …, m_K, n_K, trailing…)` and the pairs merged, giving modes
//! `m_k n_k`. Mode 1 addresses the finest scale; mode `K` selects the
//! coarsest block.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{inverse_permutation, DenseTensor};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VdtPlan {
    pub row_factors: Vec<usize>,
    pub col_factors: Vec<usize>,
    /// Modes after height and width (frames, channels), carried unchanged.
    pub trailing_dims: Vec<usize>,
}

impl VdtPlan {
    pub fn new(row_factors: Vec<usize>, col_factors: Vec<usize>, trailing_dims: Vec<usize>) -> Result<Self> {
        if row_factors.is_empty() || row_factors.len() != col_factors.len() {
            return Err(Error::invalid(format!(
                "need equally many row and column factors, got {} and {}",
                row_factors.len(),
                col_factors.len()
            )));
        }
        if row_factors.iter().chain(&col_factors).chain(&trailing_dims).any(|&x| x == 0) {
            return Err(Error::invalid("factors must be positive"));
        }
        Ok(Self {
            row_factors,
            col_factors,
            trailing_dims,
        })
    }

    /// `K` factors of two on each side: a `2^K × 2^K` image becomes `4 × … × 4`.
    pub fn dyadic(k: usize, trailing_dims: Vec<usize>) -> Result<Self> {
        Self::new(vec![2; k], vec![2; k], trailing_dims)
    }

    /// 768 × 512 × 3 into `[4 ×8, 6, 3]`.
    pub fn kodim04() -> Self {
        let mut rows = vec![2; 8];
        rows.push(3);
        Self::new(rows, vec![2; 9], vec![3]).expect("valid preset")
    }

    /// 600 × 600 × 3 into `[10, 10, 6, 6, 10, 10, 3]`.
    pub fn einstein() -> Self {
        Self::new(vec![2, 2, 2, 3, 5, 5], vec![5, 5, 3, 2, 2, 2], vec![3]).expect("valid preset")
    }

    pub fn height(&self) -> usize {
        self.row_factors.iter().product()
    }

    pub fn width(&self) -> usize {
        self.col_factors.iter().product()
    }

    pub fn levels(&self) -> usize {
        self.row_factors.len()
    }

    pub fn image_dims(&self) -> Vec<usize> {
        let mut d = vec![self.height(), self.width()];
        d.extend(&self.trailing_dims);
        d
    }

    pub fn tensor_dims(&self) -> Vec<usize> {
        let mut d: Vec<usize> = self
            .row_factors
            .iter()
            .zip(&self.col_factors)
            .map(|(m, n)| m * n)
            .collect();
        d.extend(&self.trailing_dims);
        d
    }

    fn split_dims(&self) -> Vec<usize> {
        let mut d = self.row_factors.clone();
        d.extend(&self.col_factors);
        d.extend(&self.trailing_dims);
        d
    }

    fn interleave_order(&self) -> Vec<usize> {
        let k = self.levels();
        let mut order = Vec::with_capacity(2 * k + self.trailing_dims.len());
        for i in 0..k {
            order.push(i);
            order.push(k + i);
        }
        order.extend(2 * k..2 * k + self.trailing_dims.len());
        order
    }
}

pub fn vdt_forward<T: Real>(img: &DenseTensor<T>, plan: &VdtPlan) -> Result<DenseTensor<T>> {
    if img.dims() != plan.image_dims().as_slice() {
        return Err(Error::invalid(format!(
            "image dims {:?} do not match plan {:?}",
            img.dims(),
            plan.image_dims()
        )));
    }
    img.clone()
        .reshape(plan.split_dims())?
        .permute(&plan.interleave_order())?
        .reshape(plan.tensor_dims())
}

pub fn vdt_inverse<T: Real>(t: &DenseTensor<T>, plan: &VdtPlan) -> Result<DenseTensor<T>> {
    if t.dims() != plan.tensor_dims().as_slice() {
        return Err(Error::invalid(format!(
            "tensor dims {:?} do not match plan {:?}",
            t.dims(),
            plan.tensor_dims()
        )));
    }
    let order = plan.interleave_order();
    let interleaved: Vec<usize> = order.iter().map(|&k| plan.split_dims()[k]).collect();
    t.clone()
        .reshape(interleaved)?
        .permute(&inverse_permutation(&order))?
        .reshape(plan.image_dims())
}
