//! Dense tensors, mode permutation and the cyclic shifting matricization.
//!
//! Storage is column-major: the first index varies fastest. Modes are
//! 0-based throughout the Rust API.

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// A `d`-order dense real array.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

fn check_dims(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() {
        return Err(Error::invalid("tensor order must be at least 1"));
    }
    if let Some(k) = dims.iter().position(|&n| n == 0) {
        return Err(Error::invalid(format!("dimension {k} is zero")));
    }
    dims.iter()
        .try_fold(1usize, |acc, &n| acc.checked_mul(n))
        .ok_or_else(|| Error::invalid("tensor size overflows usize"))
}

/// Column-major strides for `dims`.
pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = Vec::with_capacity(dims.len());
    let mut acc = 1;
    for &n in dims {
        s.push(acc);
        acc *= n;
    }
    s
}

impl<T: Real> DenseTensor<T> {
    pub fn new(dims: Vec<usize>, data: Vec<T>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if data.len() != len {
            return Err(Error::invalid(format!(
                "data length {} does not match dims {:?} (expected {len})",
                data.len(),
                dims
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: &[usize]) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![T::zero(); len],
        })
    }

    pub fn filled(dims: &[usize], value: T) -> Result<Self> {
        let len = check_dims(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            data: vec![value; len],
        })
    }

    /// Build a tensor by evaluating `f` at every multi-index.
    pub fn from_fn(dims: &[usize], mut f: impl FnMut(&[usize]) -> T) -> Result<Self> {
        let len = check_dims(dims)?;
        let mut idx = vec![0usize; dims.len()];
        let mut data = Vec::with_capacity(len);
        for _ in 0..len {
            data.push(f(&idx));
            increment(&mut idx, dims);
        }
        Ok(Self {
            dims: dims.to_vec(),
            data,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        debug_assert_eq!(idx.len(), self.dims.len());
        let mut lin = 0;
        let mut stride = 1;
        for (&j, &n) in idx.iter().zip(&self.dims) {
            debug_assert!(j < n);
            lin += j * stride;
            stride *= n;
        }
        lin
    }

    pub fn multi_index(&self, mut lin: usize) -> Vec<usize> {
        self.dims
            .iter()
            .map(|&n| {
                let j = lin % n;
                lin /= n;
                j
            })
            .collect()
    }

    pub fn get(&self, idx: &[usize]) -> T {
        self.data[self.linear_index(idx)]
    }

    pub fn set(&mut self, idx: &[usize], value: T) {
        let lin = self.linear_index(idx);
        self.data[lin] = value;
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn scaled(&self, alpha: T) -> Self {
        self.map(|x| x * alpha)
    }

    fn check_same_dims(&self, other: &Self) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::invalid(format!(
                "dims mismatch: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }

    /// Elementwise `self + other`.
    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_dims(other)?;
        Ok(Self {
            dims: self.dims.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
        })
    }

    /// Sum over all indices of elementwise products.
    pub fn inner_product(&self, other: &Self) -> Result<T> {
        self.check_same_dims(other)?;
        Ok(dot(&self.data, &other.data))
    }

    pub fn frobenius_norm(&self) -> T {
        dot(&self.data, &self.data).sqrt()
    }

    /// Reorder modes: output mode `k` is input mode `order[k]`.
    pub fn permute(&self, order: &[usize]) -> Result<Self> {
        check_permutation(order, self.ndim())?;
        let out_dims: Vec<usize> = order.iter().map(|&m| self.dims[m]).collect();
        Ok(Self {
            data: permute_data(&self.dims, &self.data, order),
            dims: out_dims,
        })
    }

    /// Reinterpret the data under new dims of equal total size.
    pub fn reshape(self, dims: Vec<usize>) -> Result<Self> {
        let len = check_dims(&dims)?;
        if len != self.data.len() {
            return Err(Error::invalid(format!(
                "cannot reshape {:?} into {:?}",
                self.dims, dims
            )));
        }
        Ok(Self {
            dims,
            data: self.data,
        })
    }

    /// The `i`-shifting `l`-matricization.
    pub fn unfold(&self, shift: usize, len: usize) -> Result<Array2<T>> {
        let plan = MatricizationPlan::new(&self.dims, shift, len)?;
        Ok(plan.unfold(self))
    }

    /// Inverse of [`DenseTensor::unfold`].
    pub fn fold(m: ArrayView2<'_, T>, shift: usize, len: usize, dims: &[usize]) -> Result<Self> {
        MatricizationPlan::new(dims, shift, len)?.fold(m)
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Advance a column-major multi-index, wrapping at the end.
pub(crate) fn increment(idx: &mut [usize], dims: &[usize]) {
    for (j, &n) in idx.iter_mut().zip(dims) {
        *j += 1;
        if *j < n {
            return;
        }
        *j = 0;
    }
}

pub(crate) fn check_permutation(order: &[usize], d: usize) -> Result<()> {
    if order.len() != d {
        return Err(Error::invalid(format!(
            "permutation has length {}, tensor has order {d}",
            order.len()
        )));
    }
    let mut seen = vec![false; d];
    for &m in order {
        if m >= d || seen[m] {
            return Err(Error::invalid(format!("{order:?} is not a permutation of 0..{d}")));
        }
        seen[m] = true;
    }
    Ok(())
}

pub(crate) fn inverse_permutation(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (k, &m) in order.iter().enumerate() {
        inv[m] = k;
    }
    inv
}

/// Gather `data` (column-major over `dims`) into the layout of the permuted
/// tensor. `order` must already be validated.
pub(crate) fn permute_data<T: Copy>(dims: &[usize], data: &[T], order: &[usize]) -> Vec<T> {
    let d = dims.len();
    let in_strides = strides(dims);
    let out_dims: Vec<usize> = order.iter().map(|&m| dims[m]).collect();
    let step: Vec<usize> = order.iter().map(|&m| in_strides[m]).collect();
    let total = data.len();
    let mut out = Vec::with_capacity(total);

    let inner = out_dims[0];
    let inner_step = step[0];
    let mut idx = vec![0usize; d];
    let mut offset = 0usize;
    for _ in 0..total / inner {
        let mut p = offset;
        for _ in 0..inner {
            out.push(data[p]);
            p += inner_step;
        }
        for k in 1..d {
            idx[k] += 1;
            offset += step[k];
            if idx[k] < out_dims[k] {
                break;
            }
            offset -= step[k] * out_dims[k];
            idx[k] = 0;
        }
    }
    out
}

/// Shape bookkeeping for one `i`-shifting `l`-matricization over fixed dims.
///
/// Modes `shift, shift+1, …, shift+len-1` (cyclic) index rows, the remaining
/// modes index columns; both in column-major order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MatricizationPlan {
    dims: Vec<usize>,
    shift: usize,
    len: usize,
    order: Vec<usize>,
    rows: usize,
    cols: usize,
}

impl MatricizationPlan {
    pub fn new(dims: &[usize], shift: usize, len: usize) -> Result<Self> {
        check_dims(dims)?;
        let d = dims.len();
        if shift >= d {
            return Err(Error::invalid(format!("shift {shift} out of range for order {d}")));
        }
        if len == 0 || len >= d {
            return Err(Error::invalid(format!(
                "matricization length {len} must lie in 1..={}",
                d.saturating_sub(1)
            )));
        }
        let order: Vec<usize> = (0..d).map(|k| (shift + k) % d).collect();
        let rows = order[..len].iter().map(|&m| dims[m]).product();
        let cols = order[len..].iter().map(|&m| dims[m]).product();
        Ok(Self {
            dims: dims.to_vec(),
            shift,
            len,
            order,
            rows,
            cols,
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn shift(&self) -> usize {
        self.shift
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Cyclic mode order `[shift, …, d-1, 0, …, shift-1]`.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn unfold<T: Real>(&self, t: &DenseTensor<T>) -> Array2<T> {
        assert_eq!(t.dims(), self.dims.as_slice(), "tensor dims do not match plan");
        self.unfold_slice(t.data())
    }

    /// Unfold raw column-major data laid out over the plan's dims.
    pub fn unfold_slice<T: Copy>(&self, data: &[T]) -> Array2<T> {
        let permuted = permute_data(&self.dims, data, &self.order);
        Array2::from_shape_vec((self.rows, self.cols).f(), permuted)
            .expect("plan shape matches data length")
    }

    pub fn fold<T: Real>(&self, m: ArrayView2<'_, T>) -> Result<DenseTensor<T>> {
        if m.dim() != (self.rows, self.cols) {
            return Err(Error::invalid(format!(
                "matrix shape {:?} does not match unfolding shape {:?}",
                m.dim(),
                self.shape()
            )));
        }
        let permuted_dims: Vec<usize> = self.order.iter().map(|&k| self.dims[k]).collect();
        let inv = inverse_permutation(&self.order);
        let data = {
            let mt = m.t();
            match mt.as_slice() {
                Some(s) => permute_data(&permuted_dims, s, &inv),
                None => {
                    let colmajor: Vec<T> = mt.iter().copied().collect();
                    permute_data(&permuted_dims, &colmajor, &inv)
                }
            }
        };
        Ok(DenseTensor {
            dims: self.dims.clone(),
            data,
        })
    }
}
