//! Tensor ring factors: synthesis, contraction, random generation and the
//! structural measurements (state, incoherence, unfolding rank).

use ndarray::{Array2, ShapeBuilder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::{DenseTensor, MatricizationPlan};

/// Cores `G[i]` of shape `r_i × n_i × r_{i+1}`, with `r_d = r_0`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrFactors<T> {
    cores: Vec<DenseTensor<T>>,
}

/// Sub/critical classification of a ring from `r_i r_{i+1}` versus `n_i`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrState {
    Subcritical,
    Critical,
    Supercritical,
    Mixed,
}

impl std::fmt::Display for TrState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            TrState::Subcritical => "subcritical",
            TrState::Critical => "critical",
            TrState::Supercritical => "supercritical",
            TrState::Mixed => "mixed",
        };
        f.write_str(s)
    }
}

/// Measured incoherence of every core.
#[derive(Debug, Clone, PartialEq)]
pub struct IncoherenceProfile<T> {
    /// `mu[i] = n_i / sqrt(r_i r_{i+1}) * max_{j,j'} |<G_j, G_j'> - (r_i r_{i+1} / n_i) [j = j']|`
    pub mu: Vec<T>,
    /// `n_i * max |G[i]|^2`.
    pub bound_base: Vec<T>,
}

pub fn classify_state(dims: &[usize], ranks: &[usize]) -> Result<TrState> {
    let d = dims.len();
    if ranks.len() != d || d == 0 {
        return Err(Error::invalid(format!(
            "{} ranks given for {d} dims",
            ranks.len()
        )));
    }
    let (mut less, mut equal, mut greater) = (0, 0, 0);
    for i in 0..d {
        let prod = ranks[i] * ranks[(i + 1) % d];
        match prod.cmp(&dims[i]) {
            std::cmp::Ordering::Less => less += 1,
            std::cmp::Ordering::Equal => equal += 1,
            std::cmp::Ordering::Greater => greater += 1,
        }
    }
    Ok(if equal == d {
        TrState::Critical
    } else if greater == 0 {
        TrState::Subcritical
    } else if less == 0 {
        TrState::Supercritical
    } else {
        TrState::Mixed
    })
}

impl<T: Real> TrFactors<T> {
    pub fn new(cores: Vec<DenseTensor<T>>) -> Result<Self> {
        if cores.is_empty() {
            return Err(Error::invalid("a tensor ring needs at least one core"));
        }
        let d = cores.len();
        for (i, c) in cores.iter().enumerate() {
            if c.ndim() != 3 {
                return Err(Error::invalid(format!("core {i} has order {}, expected 3", c.ndim())));
            }
            let next = &cores[(i + 1) % d];
            if c.dims()[2] != next.dims()[0] {
                return Err(Error::invalid(format!(
                    "rank mismatch between core {i} ({:?}) and core {} ({:?})",
                    c.dims(),
                    (i + 1) % d,
                    next.dims()
                )));
            }
        }
        Ok(Self { cores })
    }

    /// Gaussian cores, every entry of core `i` drawn from `N(0, 1/n_i)`
    /// (standard deviation `n_i^{-1/2}`).
    pub fn random(dims: &[usize], ranks: &[usize], seed: u64) -> Result<Self> {
        if dims.len() != ranks.len() || dims.is_empty() {
            return Err(Error::invalid(format!(
                "{} ranks given for {} dims",
                ranks.len(),
                dims.len()
            )));
        }
        if ranks.contains(&0) {
            return Err(Error::invalid("TR ranks must be positive"));
        }
        let d = dims.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cores = Vec::with_capacity(d);
        for i in 0..d {
            let shape = [ranks[i], dims[i], ranks[(i + 1) % d]];
            let sd = (dims[i] as f64).sqrt().recip();
            let normal = Normal::new(0.0, sd).map_err(|e| Error::invalid(e.to_string()))?;
            let len = shape.iter().product();
            let data = (0..len).map(|_| T::lit(normal.sample(&mut rng))).collect();
            cores.push(DenseTensor::new(shape.to_vec(), data)?);
        }
        Self::new(cores)
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn cores(&self) -> &[DenseTensor<T>] {
        &self.cores
    }

    pub fn core(&self, i: usize) -> &DenseTensor<T> {
        &self.cores[i]
    }

    /// `[r_0, …, r_{d-1}]`.
    pub fn ranks(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[0]).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.cores.iter().map(|c| c.dims()[1]).collect()
    }

    pub fn state(&self) -> TrState {
        classify_state(&self.dims(), &self.ranks()).expect("consistent by construction")
    }

    /// Contract `count` consecutive cores starting at `start` (cyclically).
    ///
    /// The result has dims `(r_start, Π n, r_{start+count})`, the middle
    /// index running over the window's modes with the first mode fastest.
    pub fn contract(&self, start: usize, count: usize) -> Result<DenseTensor<T>> {
        let d = self.order();
        if count == 0 || count > d {
            return Err(Error::invalid(format!(
                "contraction window of {count} cores is invalid for order {d}"
            )));
        }
        if start >= d {
            return Err(Error::invalid(format!("start mode {start} out of range")));
        }
        let first = &self.cores[start];
        let ra = first.dims()[0];
        let mut middle = first.dims()[1];
        let mut rc = first.dims()[2];
        let mut acc = first.data().to_vec();
        for k in 1..count {
            let core = &self.cores[(start + k) % d];
            let (n, re) = (core.dims()[1], core.dims()[2]);
            let z = Array2::from_shape_vec((ra * middle, rc).f(), acc).expect("shape");
            let g = ndarray::ArrayView2::from_shape((rc, n * re).f(), core.data()).expect("shape");
            let p = z.dot(&g);
            // p is (ra*middle) x (n*re); its column-major data is the new core.
            acc = column_major_vec(p);
            middle *= n;
            rc = re;
        }
        DenseTensor::new(vec![ra, middle, rc], acc)
    }

    /// Full tensor with entries `tr(G0[j0] G1[j1] ⋯ G_{d-1}[j_{d-1}])`.
    pub fn synthesize(&self) -> DenseTensor<T> {
        let dims = self.dims();
        let ring = self.contract(0, self.order()).expect("full window is valid");
        let r = ring.dims()[0];
        let n = ring.dims()[1];
        let data = ring.data();
        let out: Vec<T> = (0..n)
            .map(|j| (0..r).map(|a| data[a + r * (j + n * a)]).sum())
            .collect();
        DenseTensor::new(dims, out).expect("dims match")
    }

    pub fn incoherence_profile(&self) -> IncoherenceProfile<T> {
        let mut mu = Vec::with_capacity(self.order());
        let mut bound_base = Vec::with_capacity(self.order());
        for core in &self.cores {
            let (r0, n, r1) = (core.dims()[0], core.dims()[1], core.dims()[2]);
            let rr = T::lit((r0 * r1) as f64);
            let nf = T::lit(n as f64);
            // Rows of the mode-1 unfolding are the vectorized slices G[:, j, :].
            let slices = MatricizationPlan::new(core.dims(), 1, 1)
                .expect("order 3")
                .unfold(core);
            let gram = slices.dot(&slices.t());
            let target = rr / nf;
            let mut worst = T::zero();
            for ((j, jp), &g) in gram.indexed_iter() {
                let dev = if j == jp { g - target } else { g };
                worst = worst.max(dev.abs());
            }
            mu.push(nf / rr.sqrt() * worst);
            let peak = core.data().iter().fold(T::zero(), |m, &x| m.max(x.abs()));
            bound_base.push(nf * peak * peak);
        }
        IncoherenceProfile { mu, bound_base }
    }

    /// Numerical rank (singular values above `rel_tol * σ_max`) of the
    /// synthesized tensor's `(shift, len)` unfolding.
    pub fn unfolding_rank(&self, shift: usize, len: usize, rel_tol: T) -> Result<usize> {
        numerical_rank(&self.synthesize(), shift, len, rel_tol)
    }
}

/// Numerical rank of an unfolding of `t`, relative to its largest singular value.
pub fn numerical_rank<T: Real>(
    t: &DenseTensor<T>,
    shift: usize,
    len: usize,
    rel_tol: T,
) -> Result<usize> {
    let m = t.unfold(shift, len)?;
    let s = T::singular_values(m.view())?;
    let smax = s.iter().fold(T::zero(), |a, &b| a.max(b));
    if smax == T::zero() {
        return Ok(0);
    }
    Ok(s.iter().filter(|&&x| x > rel_tol * smax).count())
}

pub(crate) fn column_major_vec<T: Copy>(m: Array2<T>) -> Vec<T> {
    if m.t().is_standard_layout() {
        m.into_raw_vec_and_offset().0
    } else {
        m.t().iter().copied().collect()
    }
}
