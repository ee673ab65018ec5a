//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt;
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use ndarray::{Array1, Array2, ArrayView2};
use ndarray::ShapeBuilder;
use num_traits::{Float, FromPrimitive};

use crate::error::{Error, Result};

/// Thin or full singular value decomposition `m = u * diag(s) * vt`.
#[derive(Debug, Clone)]
pub struct Svd<T> {
    pub u: Array2<T>,
    pub s: Array1<T>,
    pub vt: Array2<T>,
}

/// Real floating point scalar: `f32` or `f64`.
///
/// The decompositions are exposed as associated functions so generic code
/// does not depend on the backend's scalar traits.
pub trait Real:
    Float
    + FromPrimitive
    + ndarray::LinalgScalar
    + ndarray::ScalarOperand
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + fmt::Debug
    + fmt::Display
    + fmt::LowerExp
    + Send
    + Sync
    + faer::traits::RealField
    + 'static
{
    /// Singular value decomposition. With `full == false` the factors are
    /// thin (`k = min(rows, cols)` columns of `u`, rows of `vt`).
    fn svd(m: ArrayView2<'_, Self>, full: bool) -> Result<Svd<Self>>;

    /// Singular values only, in non-increasing order.
    fn singular_values(m: ArrayView2<'_, Self>) -> Result<Array1<Self>>;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

fn to_faer<T: Real>(m: ArrayView2<'_, T>) -> faer::Mat<T> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[[i, j]])
}

fn from_faer<T: Real>(m: faer::MatRef<'_, T>) -> Array2<T> {
    Array2::from_shape_fn((m.nrows(), m.ncols()).f(), |(i, j)| m[(i, j)])
}

macro_rules! impl_real {
    ($($t:ty),*) => {$(
        impl Real for $t {
            fn svd(m: ArrayView2<'_, Self>, full: bool) -> Result<Svd<Self>> {
                let (r, c) = m.dim();
                if r == 0 || c == 0 {
                    let (ku, kv) = if full { (r, c) } else { (0, 0) };
                    return Ok(Svd {
                        u: Array2::eye(r).slice_move(ndarray::s![.., ..ku]),
                        s: Array1::zeros(0),
                        vt: Array2::eye(c).slice_move(ndarray::s![..kv, ..]),
                    });
                }
                let a = to_faer(m);
                let f = if full { a.svd() } else { a.thin_svd() }
                    .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
                let sv = f.S().column_vector();
                Ok(Svd {
                    u: from_faer(f.U()),
                    s: Array1::from_shape_fn(sv.nrows(), |i| sv[i]),
                    vt: from_faer(f.V()).reversed_axes(),
                })
            }

            fn singular_values(m: ArrayView2<'_, Self>) -> Result<Array1<Self>> {
                if m.is_empty() {
                    return Ok(Array1::zeros(0));
                }
                let s = to_faer(m)
                    .singular_values()
                    .map_err(|e| Error::Numerical(format!("svd failed: {e:?}")))?;
                Ok(Array1::from(s))
            }
        }
    )*};
}

impl_real!(f32, f64);
