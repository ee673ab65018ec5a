//! Observation masks and the projection onto observed entries.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::DenseTensor;

/// Sorted, duplicate-free linear indices of observed entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationMask {
    dims: Vec<usize>,
    observed: Vec<usize>,
}

fn total(dims: &[usize]) -> Result<usize> {
    if dims.is_empty() || dims.contains(&0) {
        return Err(Error::invalid(format!("invalid mask dims {dims:?}")));
    }
    dims.iter()
        .try_fold(1usize, |a, &n| a.checked_mul(n))
        .ok_or_else(|| Error::invalid("mask size overflows usize"))
}

impl ObservationMask {
    /// Build from arbitrary indices; they are sorted and deduplicated.
    pub fn new(dims: &[usize], mut observed: Vec<usize>) -> Result<Self> {
        let n = total(dims)?;
        observed.sort_unstable();
        observed.dedup();
        if let Some(&last) = observed.last() {
            if last >= n {
                return Err(Error::invalid(format!("index {last} out of range for {n} entries")));
            }
        }
        Ok(Self {
            dims: dims.to_vec(),
            observed,
        })
    }

    pub fn full(dims: &[usize]) -> Result<Self> {
        let n = total(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            observed: (0..n).collect(),
        })
    }

    pub fn empty(dims: &[usize]) -> Result<Self> {
        total(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            observed: Vec::new(),
        })
    }

    /// Exactly `m` distinct entries, uniform over all `m`-subsets.
    pub fn uniform(dims: &[usize], m: usize, seed: u64) -> Result<Self> {
        let n = total(dims)?;
        if m > n {
            return Err(Error::invalid(format!("cannot observe {m} of {n} entries")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut observed = index::sample(&mut rng, n, m).into_vec();
        observed.sort_unstable();
        Ok(Self {
            dims: dims.to_vec(),
            observed,
        })
    }

    /// Every entry included independently with probability `p`.
    pub fn bernoulli(dims: &[usize], p: f64, seed: u64) -> Result<Self> {
        let n = total(dims)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid(format!("probability {p} outside [0, 1]")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let observed = (0..n).filter(|_| rng.random::<f64>() < p).collect();
        Ok(Self {
            dims: dims.to_vec(),
            observed,
        })
    }

    /// Mask selecting the entries where `pred` holds.
    pub fn from_predicate(dims: &[usize], mut pred: impl FnMut(usize) -> bool) -> Result<Self> {
        let n = total(dims)?;
        Ok(Self {
            dims: dims.to_vec(),
            observed: (0..n).filter(|&k| pred(k)).collect(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn indices(&self) -> &[usize] {
        &self.observed
    }

    pub fn count(&self) -> usize {
        self.observed.len()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.observed.len() == self.total()
    }

    pub fn sampling_rate(&self) -> f64 {
        self.observed.len() as f64 / self.total() as f64
    }

    pub fn contains(&self, lin: usize) -> bool {
        self.observed.binary_search(&lin).is_ok()
    }

    /// Dense 0/1 indicator in linearization order.
    pub fn indicator(&self) -> Vec<bool> {
        let mut v = vec![false; self.total()];
        for &k in &self.observed {
            v[k] = true;
        }
        v
    }

    pub fn complement(&self) -> Self {
        let ind = self.indicator();
        Self {
            dims: self.dims.clone(),
            observed: (0..ind.len()).filter(|&k| !ind[k]).collect(),
        }
    }

    pub fn union(&self, other: &Self) -> Result<Self> {
        if self.dims != other.dims {
            return Err(Error::invalid("cannot union masks over different dims"));
        }
        let mut observed = Vec::with_capacity(self.count() + other.count());
        let (mut a, mut b) = (self.observed.iter().peekable(), other.observed.iter().peekable());
        loop {
            match (a.peek(), b.peek()) {
                (Some(&&x), Some(&&y)) => {
                    if x <= y {
                        a.next();
                    }
                    if y <= x {
                        b.next();
                    }
                    observed.push(x.min(y));
                }
                (Some(&&x), None) => {
                    observed.push(x);
                    a.next();
                }
                (None, Some(&&y)) => {
                    observed.push(y);
                    b.next();
                }
                (None, None) => break,
            }
        }
        Ok(Self {
            dims: self.dims.clone(),
            observed,
        })
    }

    fn check_tensor<T: Real>(&self, t: &DenseTensor<T>) -> Result<()> {
        if t.dims() != self.dims.as_slice() {
            return Err(Error::invalid(format!(
                "tensor dims {:?} do not match mask dims {:?}",
                t.dims(),
                self.dims
            )));
        }
        Ok(())
    }

    /// Observed entries copied, every other entry set to `fill`.
    pub fn project<T: Real>(&self, t: &DenseTensor<T>, fill: T) -> Result<DenseTensor<T>> {
        self.check_tensor(t)?;
        let mut out = DenseTensor::filled(t.dims(), fill)?;
        let src = t.data();
        let dst = out.data_mut();
        for &k in &self.observed {
            dst[k] = src[k];
        }
        Ok(out)
    }

    /// Overwrite the observed entries of `x` with those of `source`.
    pub fn impose<T: Real>(&self, x: &mut DenseTensor<T>, source: &DenseTensor<T>) -> Result<()> {
        self.check_tensor(x)?;
        self.check_tensor(source)?;
        let src = source.data();
        let dst = x.data_mut();
        for &k in &self.observed {
            dst[k] = src[k];
        }
        Ok(())
    }
}

/// `P_Ω(t)` with unobserved entries set to `fill`.
pub fn project_omega<T: Real>(
    t: &DenseTensor<T>,
    mask: &ObservationMask,
    fill: T,
) -> Result<DenseTensor<T>> {
    mask.project(t, fill)
}

/// Number of samples for a sampling rate, rounded to the nearest integer.
pub fn samples_for_rate(total: usize, rate: f64) -> usize {
    ((total as f64) * rate).round().clamp(0.0, total as f64) as usize
}
