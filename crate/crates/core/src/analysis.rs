//! Degree-of-freedom counts and tangent-space instruments for checking the
//! sampling condition on individual unfoldings.

use std::fmt::Write as _;

use ndarray::{s, Array1, Array2, ArrayView2, ShapeBuilder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::sampling::{samples_for_rate, ObservationMask};
use crate::scalar::Real;
use crate::tensor::{DenseTensor, MatricizationPlan};
use crate::tr::TrFactors;

/// Degrees of freedom of a rank-`r²` square unfolding of an `n^d` tensor,
/// `r²(2·n^{d/2} − r²)`. Requires even `d`; may be negative.
pub fn df_square_unfolding(n: u64, d: u32, r: u64) -> Result<i128> {
    if n == 0 || d == 0 || r == 0 {
        return Err(Error::invalid("n, d and r must be positive"));
    }
    if d % 2 != 0 {
        return Err(Error::invalid(format!("order {d} has no square unfolding")));
    }
    let side = (n as i128)
        .checked_pow(d / 2)
        .ok_or_else(|| Error::invalid("n^(d/2) overflows"))?;
    let r2 = (r as i128) * (r as i128);
    Ok(r2 * (2 * side - r2))
}

/// Degrees of freedom of the TR manifold, `d·n·r² − d·r² + 1`.
pub fn df_tensor_ring(n: u64, d: u32, r: u64) -> i128 {
    let (n, d, r2) = (n as i128, d as i128, (r as i128) * (r as i128));
    d * n * r2 - d * r2 + 1
}

/// CSV `r,sr,df_m_ratio,df_tr_ratio` over a rank × sampling-rate grid.
pub fn df_grid_csv(n: u64, d: u32, ranks: &[u64], rates: &[f64]) -> Result<String> {
    let total = (n as usize).pow(d);
    let mut out = String::from("r,sr,df_m_ratio,df_tr_ratio\n");
    for &r in ranks {
        let dfm = df_square_unfolding(n, d, r)? as f64;
        let dft = df_tensor_ring(n, d, r) as f64;
        for &sr in rates {
            let m = samples_for_rate(total, sr).max(1) as f64;
            let _ = writeln!(out, "{r},{sr},{:e},{:e}", dfm / m, dft / m);
        }
    }
    Ok(out)
}

fn orthonormal_tol<T: Real>() -> T {
    T::lit(1e-10).max(T::epsilon() * T::lit(100.0))
}

fn check_orthonormal<T: Real>(q: &Array2<T>, what: &str) -> Result<()> {
    let g = q.t().dot(q);
    let tol = orthonormal_tol::<T>() * T::lit(q.ncols().max(1) as f64);
    for ((a, b), &x) in g.indexed_iter() {
        let target = if a == b { T::one() } else { T::zero() };
        if (x - target).abs() > tol {
            return Err(Error::invalid(format!("{what} columns are not orthonormal")));
        }
    }
    Ok(())
}

/// Tangent space at a low-rank unfolding: `{U A^T + B V^T}`.
#[derive(Debug, Clone)]
pub struct TangentSpace<T> {
    plan: MatricizationPlan,
    u: Array2<T>,
    v: Array2<T>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GapMethod {
    /// Materialize the operator restricted to an orthonormal basis of `T`.
    /// Fails with a resource-limit error above `max_entries` basis entries.
    Exact { max_entries: usize },
    PowerIteration { max_iters: usize, rel_tol: f64, seed: u64 },
}

impl Default for GapMethod {
    fn default() -> Self {
        GapMethod::Exact {
            max_entries: 20_000_000,
        }
    }
}

impl<T: Real> TangentSpace<T> {
    pub fn from_bases(plan: MatricizationPlan, u: Array2<T>, v: Array2<T>) -> Result<Self> {
        if u.nrows() != plan.rows() || v.nrows() != plan.cols() || u.ncols() != v.ncols() {
            return Err(Error::invalid(format!(
                "bases {:?} and {:?} do not fit a {}x{} unfolding",
                u.dim(),
                v.dim(),
                plan.rows(),
                plan.cols()
            )));
        }
        check_orthonormal(&u, "U")?;
        check_orthonormal(&v, "V")?;
        Ok(Self { plan, u, v })
    }

    /// Leading singular subspaces of the `(shift, len)` unfolding of `t`. With
    /// `rank = None` the numerical rank at `1e-8 σ_max` is used.
    pub fn from_tensor(
        t: &DenseTensor<T>,
        shift: usize,
        len: usize,
        rank: Option<usize>,
    ) -> Result<Self> {
        let plan = MatricizationPlan::new(t.dims(), shift, len)?;
        let m = plan.unfold(t);
        let svd = T::svd(m.view(), false)?;
        let k = match rank {
            Some(k) => k,
            None => {
                let smax = svd.s.iter().fold(T::zero(), |a, &b| a.max(b));
                svd.s.iter().filter(|&&x| x > T::lit(1e-8) * smax).count()
            }
        };
        if k > svd.s.len() {
            return Err(Error::invalid(format!("rank {k} exceeds unfolding size")));
        }
        let u = svd.u.slice(s![.., ..k]).to_owned();
        let v = svd.vt.slice(s![..k, ..]).t().to_owned();
        Self::from_bases(plan, u, v)
    }

    /// Treat `m` as a 2-order tensor and take its rank-`rank` tangent space.
    pub fn from_matrix(m: ArrayView2<'_, T>, rank: usize) -> Result<Self> {
        let (rows, cols) = m.dim();
        let data: Vec<T> = m.t().iter().copied().collect();
        let t = DenseTensor::new(vec![rows, cols], data)?;
        Self::from_tensor(&t, 0, 1, Some(rank))
    }

    pub fn plan(&self) -> &MatricizationPlan {
        &self.plan
    }

    pub fn u(&self) -> &Array2<T> {
        &self.u
    }

    pub fn v(&self) -> &Array2<T> {
        &self.v
    }

    pub fn rank(&self) -> usize {
        self.u.ncols()
    }

    /// `rank · (rows + cols − rank)`.
    pub fn dimension(&self) -> usize {
        let k = self.rank();
        k * (self.plan.rows() + self.plan.cols() - k)
    }

    fn check_shape(&self, m: &ArrayView2<'_, T>) -> Result<()> {
        if m.dim() != self.plan.shape() {
            return Err(Error::invalid(format!(
                "matrix shape {:?} does not match {:?}",
                m.dim(),
                self.plan.shape()
            )));
        }
        Ok(())
    }

    /// `P_U m + m P_V − P_U m P_V`.
    pub fn project(&self, m: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_shape(&m)?;
        Ok(self.project_unchecked(m))
    }

    fn project_unchecked(&self, m: ArrayView2<'_, T>) -> Array2<T> {
        let utm = self.u.t().dot(&m);
        let mv = m.dot(&self.v);
        let utmv = utm.dot(&self.v);
        // U(Uᵀm) + (mV)Vᵀ − U(UᵀmV)Vᵀ = U(Uᵀm) + (mV − U UᵀmV)Vᵀ
        let left = self.u.dot(&utm);
        let corr = mv - self.u.dot(&utmv);
        left + corr.dot(&self.v.t())
    }

    /// `(I − P_U) m (I − P_V)`.
    pub fn project_complement(&self, m: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_shape(&m)?;
        Ok(&m - &self.project_unchecked(m))
    }

    /// Spectral norm of `P_T P_Ω P_T − p P_T` on the unfolding grid, to be
    /// compared against `p / 2`.
    pub fn condition_gap(&self, mask: &ObservationMask, p: T, method: GapMethod) -> Result<T> {
        if mask.dims() != self.plan.dims() {
            return Err(Error::invalid(format!(
                "mask dims {:?} do not match tangent space dims {:?}",
                mask.dims(),
                self.plan.dims()
            )));
        }
        let sampled = self.plan.unfold_slice(&mask.indicator());
        match method {
            GapMethod::Exact { max_entries } => self.gap_exact(&sampled, p, max_entries),
            GapMethod::PowerIteration {
                max_iters,
                rel_tol,
                seed,
            } => Ok(self.gap_power(&sampled, p, max_iters, T::lit(rel_tol), seed)),
        }
    }

    fn gap_exact(&self, sampled: &Array2<bool>, p: T, max_entries: usize) -> Result<T> {
        let (rows, cols) = self.plan.shape();
        let k = self.rank();
        let dim = self.dimension();
        let entries = rows.saturating_mul(cols).saturating_mul(dim);
        if entries > max_entries {
            return Err(Error::ResourceLimit(format!(
                "exact operator needs {entries} entries (limit {max_entries}); use power iteration"
            )));
        }
        if dim == 0 {
            return Ok(T::zero());
        }
        let uf = complete_basis(&self.u)?;
        let vf = complete_basis(&self.v)?;
        // Orthonormal basis of T: u_a ⊗ w_b for a < k (all b), u⊥_a ⊗ v_b for b < k.
        let mut basis = Array2::<T>::zeros((rows * cols, dim).f());
        let mut col = 0;
        let mut push = |ua: ndarray::ArrayView1<'_, T>, wb: ndarray::ArrayView1<'_, T>| {
            let mut c = basis.column_mut(col);
            for j in 0..cols {
                for i in 0..rows {
                    c[i + rows * j] = ua[i] * wb[j];
                }
            }
            col += 1;
        };
        for a in 0..k {
            for b in 0..cols {
                push(uf.column(a), vf.column(b));
            }
        }
        for a in k..rows {
            for b in 0..k {
                push(uf.column(a), vf.column(b));
            }
        }
        let weights: Array1<T> = sampled
            .t()
            .iter()
            .map(|&obs| if obs { T::one() - p } else { -p })
            .collect();
        let mut weighted = basis.clone();
        for (mut row, &w) in weighted.rows_mut().into_iter().zip(&weights) {
            row *= w;
        }
        let op = basis.t().dot(&weighted);
        let s = T::singular_values(op.view())?;
        Ok(s.iter().fold(T::zero(), |a, &b| a.max(b)))
    }

    fn gap_power(&self, sampled: &Array2<bool>, p: T, max_iters: usize, rel_tol: T, seed: u64) -> T {
        let (rows, cols) = self.plan.shape();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let start = Array2::from_shape_fn((rows, cols), |_| T::lit(rng.random_range(-1.0..1.0)));
        let mut x = self.project_unchecked(start.view());
        let fro = |m: &Array2<T>| m.iter().map(|&v| v * v).sum::<T>().sqrt();
        let nx = fro(&x);
        if nx == T::zero() {
            return T::zero();
        }
        x.mapv_inplace(|v| v / nx);
        let mut estimate = T::zero();
        for _ in 0..max_iters {
            let mut masked = x.clone();
            ndarray::Zip::from(&mut masked).and(sampled).for_each(|v, &obs| {
                if !obs {
                    *v = T::zero();
                }
            });
            let mut y = self.project_unchecked(masked.view());
            y.scaled_add(-p, &x);
            let ny = fro(&y);
            let converged = (ny - estimate).abs() <= rel_tol * ny;
            estimate = ny;
            if ny == T::zero() || converged {
                break;
            }
            x = y.mapv(|v| v / ny);
        }
        estimate
    }
}

/// Extend orthonormal columns `q` (`n × k`) to a full orthonormal basis whose
/// first `k` columns span the same space.
fn complete_basis<T: Real>(q: &Array2<T>) -> Result<Array2<T>> {
    let (n, k) = q.dim();
    if k == 0 {
        return Ok(Array2::from_shape_fn((n, n), |(i, j)| if i == j { T::one() } else { T::zero() }));
    }
    let full = T::svd(q.view(), true)?.u;
    let mut out = full;
    out.slice_mut(s![.., ..k]).assign(q);
    Ok(out)
}

/// `condition_gap` as a free function.
pub fn condition1_gap<T: Real>(
    ts: &TangentSpace<T>,
    mask: &ObservationMask,
    p: T,
    method: GapMethod,
) -> Result<T> {
    ts.condition_gap(mask, p, method)
}

/// Principal angles (radians, ascending) between the column spaces of `a`
/// and `b`, each taken at numerical rank `1e-10 σ_max`.
pub fn principal_angles<T: Real>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>) -> Result<Vec<T>> {
    if a.nrows() != b.nrows() {
        return Err(Error::invalid("subspaces live in different ambient dimensions"));
    }
    let qa = range_basis(a)?;
    let qb = range_basis(b)?;
    let (small, big) = if qa.ncols() <= qb.ncols() { (&qa, &qb) } else { (&qb, &qa) };
    // Sines from the residual of projecting the smaller basis onto the larger
    // one; accurate for small angles where acos of the cosines is not.
    let resid = small - &big.dot(&big.t().dot(small));
    let sin = T::singular_values(resid.view())?;
    let mut angles: Vec<T> = sin.iter().map(|&x| x.min(T::one()).asin()).collect();
    angles.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    // Dimension mismatch counts as right angles.
    let extra = qa.ncols().max(qb.ncols()) - angles.len();
    angles.extend(std::iter::repeat_n(T::lit(std::f64::consts::FRAC_PI_2), extra));
    Ok(angles)
}

fn range_basis<T: Real>(m: ArrayView2<'_, T>) -> Result<Array2<T>> {
    let svd = T::svd(m, false)?;
    let smax = svd.s.iter().fold(T::zero(), |a, &b| a.max(b));
    let k = svd.s.iter().filter(|&&x| x > T::lit(1e-10) * smax).count();
    Ok(svd.u.slice(s![.., ..k]).to_owned())
}

/// Mode-2 fibers of the contraction of cores `shift .. shift+len` as the
/// columns of a `(Π n) × (r_shift · r_{shift+len})` matrix.
pub fn contracted_fibers<T: Real>(f: &TrFactors<T>, shift: usize, len: usize) -> Result<Array2<T>> {
    let c = f.contract(shift, len)?;
    let (ra, n, rb) = (c.dims()[0], c.dims()[1], c.dims()[2]);
    Ok(Array2::from_shape_fn((n, ra * rb), |(j, col)| {
        c.get(&[col % ra, j, col / ra])
    }))
}
