use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::DenseTensor;

/// `‖est − truth‖_F / ‖truth‖_F`.
pub fn relative_error<T: Real>(est: &DenseTensor<T>, truth: &DenseTensor<T>) -> Result<T> {
    let norm = truth.frobenius_norm();
    if norm == T::zero() {
        return Err(Error::invalid("relative error against a zero tensor"));
    }
    Ok(est.sub(truth)?.frobenius_norm() / norm)
}

/// Peak signal-to-noise ratio in dB; `+∞` when the estimate is exact.
pub fn psnr<T: Real>(est: &DenseTensor<T>, truth: &DenseTensor<T>, peak: T) -> Result<T> {
    let diff = est.sub(truth)?;
    let mse = diff.data().iter().map(|&x| x * x).sum::<T>() / T::lit(diff.len() as f64);
    if mse == T::zero() {
        return Ok(T::infinity());
    }
    Ok(T::lit(10.0) * (peak * peak / mse).log10())
}
