//! ADMM for weighted nuclear-norm minimization over shifted unfoldings
//! subject to exact agreement on the observed entries.
//!
//! With `h = ⌈d/2⌉` unfoldings `X_{i,l}` the solver splits
//! `min Σ w_i ‖M_i‖_*  s.t.  M_i = X_{i,l},  P_Ω(X) = P_Ω(T)` and iterates
//!
//! 1. `M_i ← svt(X_{i,l} + Y_i/μ, w_i/μ)`
//! 2. `X ← mean_i fold(M_i − Y_i/μ)`, then observed entries reset to `T`
//! 3. `Y_i ← Y_i + μ (X_{i,l} − M_i)`
//! 4. `μ ← βμ`
//!
//! stopping once the relative change of `X` and the relative consensus
//! residual `max_i ‖X_{i,l} − M_i‖_F / ‖X‖_F` both fall below `tol_rc`.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, ShapeBuilder, Zip};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::ObservationMask;
use crate::scalar::{Real, Svd};
use crate::tensor::{DenseTensor, MatricizationPlan};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SvtBackend {
    /// Full thin SVD of every unfolding.
    #[default]
    ExactSvd,
}

impl FromStr for SvtBackend {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact-svd" | "exact" => Ok(SvtBackend::ExactSvd),
            other => Err(Error::invalid(format!("unknown svt backend {other:?}"))),
        }
    }
}

/// Solver hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    /// Number of row modes per unfolding, `⌈d/2⌉` when `None`.
    pub len: Option<usize>,
    /// One positive weight per unfolding; normalized to sum 1. Uniform when `None`.
    pub weights: Option<Vec<T>>,
    pub mu0: T,
    /// Penalty growth factor, in `(0, 2)`.
    pub beta: T,
    pub tol_rc: T,
    pub max_iters: usize,
    pub svt_backend: SvtBackend,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            len: None,
            weights: None,
            mu0: T::lit(10f64.powf(-2.5)),
            beta: T::lit(1.028),
            tol_rc: T::lit(1e-8),
            max_iters: 500,
            svt_backend: SvtBackend::ExactSvd,
        }
    }
}

/// Number of unfoldings in the objective for an order-`d` tensor.
pub fn unfolding_count(d: usize) -> usize {
    d.div_ceil(2)
}

impl<T: Real> SolverConfig<T> {
    /// Synthetic-data defaults: `K = 500`.
    pub fn synthetic() -> Self {
        Self::default()
    }

    /// Real-data defaults: `K = 100`.
    pub fn real_data() -> Self {
        Self {
            max_iters: 100,
            ..Self::default()
        }
    }

    pub fn with_mu0(mut self, mu0: T) -> Self {
        self.mu0 = mu0;
        self
    }

    pub fn with_len(mut self, len: usize) -> Self {
        self.len = Some(len);
        self
    }

    pub fn with_max_iters(mut self, k: usize) -> Self {
        self.max_iters = k;
        self
    }

    /// Validate against a tensor order and return `(l, normalized weights)`.
    pub fn resolve(&self, d: usize) -> Result<(usize, Vec<T>)> {
        if d < 2 {
            return Err(Error::invalid("completion needs a tensor of order at least 2"));
        }
        let len = self.len.unwrap_or_else(|| unfolding_count(d));
        if len == 0 || len >= d {
            return Err(Error::invalid(format!("unfolding length {len} must lie in 1..{d}")));
        }
        if !(self.mu0 > T::zero()) || !self.mu0.is_finite() {
            return Err(Error::invalid(format!("mu0 must be positive, got {}", self.mu0)));
        }
        if !(self.beta > T::zero() && self.beta < T::lit(2.0)) {
            return Err(Error::invalid(format!("beta must lie in (0, 2), got {}", self.beta)));
        }
        if !(self.tol_rc >= T::zero()) {
            return Err(Error::invalid("tol_rc must be non-negative"));
        }
        let h = unfolding_count(d);
        let weights = match &self.weights {
            None => vec![T::one() / T::lit(h as f64); h],
            Some(w) => {
                if w.len() != h {
                    return Err(Error::invalid(format!(
                        "{} weights given, {h} unfoldings in the objective",
                        w.len()
                    )));
                }
                if w.iter().any(|&x| !(x > T::zero()) || !x.is_finite()) {
                    return Err(Error::invalid("weights must be positive and finite"));
                }
                let sum: T = w.iter().copied().sum();
                w.iter().map(|&x| x / sum).collect()
            }
        };
        Ok((len, weights))
    }

    /// Parse `key = value` lines. Unknown keys are rejected; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::invalid(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |what: &str| Error::invalid(format!("line {}: bad {what} {value:?}", lineno + 1));
            let float = |v: &str| v.parse::<f64>().map(T::lit).map_err(|_| bad(key));
            match key {
                "l" | "len" => cfg.len = Some(value.parse().map_err(|_| bad(key))?),
                "weights" => {
                    let w = value
                        .split(',')
                        .map(|s| float(s.trim()))
                        .collect::<Result<Vec<T>>>()?;
                    cfg.weights = Some(w);
                }
                "mu0" => cfg.mu0 = float(value)?,
                "log10_mu0" => cfg.mu0 = T::lit(10f64.powf(value.parse().map_err(|_| bad(key))?)),
                "beta" => cfg.beta = float(value)?,
                "tol_rc" => cfg.tol_rc = float(value)?,
                "max_iters" => cfg.max_iters = value.parse().map_err(|_| bad(key))?,
                "svt_backend" => cfg.svt_backend = value.parse()?,
                other => {
                    return Err(Error::invalid(format!(
                        "line {}: unknown key {other:?}",
                        lineno + 1
                    )))
                }
            }
        }
        Ok(cfg)
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        if let Some(l) = self.len {
            let _ = writeln!(s, "l = {l}");
        }
        if let Some(w) = &self.weights {
            let joined: Vec<String> = w.iter().map(|x| format!("{x:e}")).collect();
            let _ = writeln!(s, "weights = {}", joined.join(", "));
        }
        let _ = writeln!(s, "mu0 = {:e}", self.mu0);
        let _ = writeln!(s, "beta = {:e}", self.beta);
        let _ = writeln!(s, "tol_rc = {:e}", self.tol_rc);
        let _ = writeln!(s, "max_iters = {}", self.max_iters);
        let _ = writeln!(s, "svt_backend = exact-svd");
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// Relative change and consensus residual both below tolerance.
    Converged,
    MaxIterations,
    /// Nothing to complete; the observation is returned as is.
    FullyObserved,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord<T> {
    pub iter: usize,
    pub rc: T,
    pub residual: T,
    pub mu: T,
    /// Nuclear norm of each thresholded auxiliary `M_i`.
    pub nuclear_norms: Vec<T>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverTrace<T> {
    pub records: Vec<IterationRecord<T>>,
    pub termination: Termination,
}

impl<T: Real> SolverTrace<T> {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn last_rc(&self) -> Option<T> {
        self.records.last().map(|r| r.rc)
    }

    /// CSV with header `iter,rc,mu,seconds`.
    /// Zero the timing column so that traces of identical runs compare equal.
    pub fn clear_timing(&mut self) {
        for r in &mut self.records {
            r.seconds = 0.0;
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("iter,rc,mu,seconds\n");
        for r in &self.records {
            let _ = writeln!(s, "{},{:e},{:e},{:.6}", r.iter, r.rc, r.mu, r.seconds);
        }
        s
    }
}

/// Singular value soft-thresholding, the proximal map of `tau ‖·‖_*`.
pub fn svt<T: Real>(m: ArrayView2<'_, T>, tau: T) -> Result<Array2<T>> {
    svt_with_norm(m, tau).map(|(z, _)| z)
}

/// [`svt`] together with the nuclear norm of the result.
pub fn svt_with_norm<T: Real>(m: ArrayView2<'_, T>, tau: T) -> Result<(Array2<T>, T)> {
    if !(tau >= T::zero()) {
        return Err(Error::invalid(format!("threshold must be non-negative, got {tau}")));
    }
    let (rows, cols) = m.dim();
    if rows == 0 || cols == 0 {
        return Ok((Array2::zeros((rows, cols)), T::zero()));
    }
    let Svd { u, s, vt } = T::svd(m, false)?;
    let kept: Vec<T> = s.iter().map(|&x| x - tau).take_while(|&x| x > T::zero()).collect();
    let k = kept.len();
    if k == 0 {
        return Ok((Array2::zeros((rows, cols)), T::zero()));
    }
    let mut uk = u.slice(ndarray::s![.., ..k]).to_owned();
    for (mut col, &sv) in uk.columns_mut().into_iter().zip(&kept) {
        col *= sv;
    }
    // Computed as (Vᵀ_k)ᵀ-first so the result comes out column-major.
    let z = vt.slice(ndarray::s![..k, ..]).t().dot(&uk.t()).reversed_axes();
    Ok((z, kept.into_iter().sum()))
}

fn rel_change<T: Real>(new: &DenseTensor<T>, old: &DenseTensor<T>) -> T {
    let diff: T = new
        .data()
        .iter()
        .zip(old.data())
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        .sqrt();
    let denom = old.frobenius_norm();
    if denom == T::zero() {
        diff
    } else {
        diff / denom
    }
}

/// Complete `observed` from the entries selected by `mask`.
///
/// Entries of `observed` outside the mask are ignored. The returned tensor
/// agrees with `observed` on the mask exactly.
pub fn trbu_complete<T: Real>(
    observed: &DenseTensor<T>,
    mask: &ObservationMask,
    cfg: &SolverConfig<T>,
) -> Result<(DenseTensor<T>, SolverTrace<T>)> {
    if mask.dims() != observed.dims() {
        return Err(Error::invalid(format!(
            "mask dims {:?} do not match tensor dims {:?}",
            mask.dims(),
            observed.dims()
        )));
    }
    if mask.is_empty() {
        return Err(Error::invalid("no observed entries"));
    }
    if mask.indices().iter().any(|&k| !observed.data()[k].is_finite()) {
        return Err(Error::invalid("observed entries must be finite"));
    }
    let d = observed.ndim();
    let (len, weights) = cfg.resolve(d)?;

    let mut x = mask.project(observed, T::zero())?;
    if mask.is_full() {
        return Ok((
            x,
            SolverTrace {
                records: Vec::new(),
                termination: Termination::FullyObserved,
            },
        ));
    }

    let plans: Vec<MatricizationPlan> = (0..weights.len())
        .map(|i| MatricizationPlan::new(observed.dims(), i, len))
        .collect::<Result<_>>()?;
    let h = T::lit(plans.len() as f64);
    let mut xs: Vec<Array2<T>> = plans.iter().map(|p| p.unfold(&x)).collect();
    let mut duals: Vec<Array2<T>> = plans.iter().map(|p| Array2::zeros(p.shape().f())).collect();

    let start = Instant::now();
    let mut mu = cfg.mu0;
    let mut records = Vec::new();
    let mut termination = Termination::MaxIterations;

    for iter in 1..=cfg.max_iters {
        let inv_mu = mu.recip();

        // (a) proximal step on every unfolding
        let thresholded: Vec<(Array2<T>, T)> = xs
            .par_iter()
            .zip(duals.par_iter())
            .zip(weights.par_iter())
            .map(|((xm, y), &w)| {
                let mut arg = xm.clone();
                arg.scaled_add(inv_mu, y);
                svt_with_norm(arg.view(), w * inv_mu)
            })
            .collect::<Result<_>>()?;

        // (b) consensus average, then the hard data constraint
        let mut next = DenseTensor::zeros(observed.dims())?;
        for ((plan, (m, _)), y) in plans.iter().zip(&thresholded).zip(&duals) {
            let mut arg = m.clone();
            arg.scaled_add(-inv_mu, y);
            let folded = plan.fold(arg.view())?;
            for (acc, &v) in next.data_mut().iter_mut().zip(folded.data()) {
                *acc += v;
            }
        }
        for v in next.data_mut() {
            *v /= h;
        }
        mask.impose(&mut next, observed)?;

        // (c) dual ascent
        xs = plans.iter().map(|p| p.unfold(&next)).collect();
        let mut residual = T::zero();
        for ((y, xm), (m, _)) in duals.iter_mut().zip(&xs).zip(&thresholded) {
            let mut r2 = T::zero();
            Zip::from(y).and(xm).and(m).for_each(|y, &a, &b| {
                let r = a - b;
                r2 += r * r;
                *y += mu * r;
            });
            residual = residual.max(r2.sqrt());
        }
        let norm = next.frobenius_norm();
        if norm > T::zero() {
            residual /= norm;
        }

        let rc = rel_change(&next, &x);
        records.push(IterationRecord {
            iter,
            rc,
            residual,
            mu,
            nuclear_norms: thresholded.iter().map(|(_, n)| *n).collect(),
            seconds: start.elapsed().as_secs_f64(),
        });
        x = next;

        // (d) penalty schedule
        mu *= cfg.beta;

        if !rc.is_finite() || !residual.is_finite() {
            return Err(Error::Numerical(format!("iteration {iter} produced non-finite values")));
        }
        if rc < cfg.tol_rc && residual < cfg.tol_rc {
            termination = Termination::Converged;
            break;
        }
    }

    mask.impose(&mut x, observed)?;
    Ok((x, SolverTrace { records, termination }))
}
