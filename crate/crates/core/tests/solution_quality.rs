//! Cross-check of the ADMM solution against a slow projected-subgradient
//! method on the same convex model.

use ndarray::{s, Array2};
use trbu::sampling::samples_for_rate;
use trbu::solver::trbu_complete;
use trbu::{Config, Factors, ObservationMask, Real, Tensor};

const DIMS: [usize; 4] = [3; 4];

/// `Σ_i w_i ‖X_{i,2}‖_*` with uniform weights over the two unfoldings.
fn objective(x: &Tensor) -> f64 {
    (0..2)
        .map(|i| 0.5 * f64::singular_values(x.unfold(i, 2).unwrap().view()).unwrap().sum())
        .sum()
}

/// Returns `(Σ w_i ‖X_i‖_*, Σ w_i fold(U_i V_iᵀ))`.
fn value_and_subgradient(x: &Tensor) -> (f64, Tensor) {
    let mut g = Tensor::zeros(&DIMS).unwrap();
    let mut f = 0.0;
    for i in 0..2 {
        let svd = f64::svd(x.unfold(i, 2).unwrap().view(), false).unwrap();
        f += 0.5 * svd.s.sum();
        let r = svd.s.iter().filter(|&&v| v > 1e-12).count();
        let uv: Array2<f64> = svd.u.slice(s![.., ..r]).dot(&svd.vt.slice(s![..r, ..]));
        let gi = Tensor::fold(uv.view(), i, 2, &DIMS).unwrap();
        for (a, &b) in g.data_mut().iter_mut().zip(gi.data()) {
            *a += 0.5 * b;
        }
    }
    (f, g)
}

/// Normalized steps `c / sqrt(k)` along the subgradient projected onto the
/// unobserved entries; returns the best objective seen.
fn subgradient_reference(truth: &Tensor, mask: &ObservationMask, c: f64, iters: usize) -> f64 {
    let observed = mask.indicator();
    let mut y = mask.project(truth, 0.0).unwrap();
    let mut best = f64::INFINITY;
    for k in 1..=iters {
        let (f, mut g) = value_and_subgradient(&y);
        best = best.min(f);
        for (v, &seen) in g.data_mut().iter_mut().zip(&observed) {
            if seen {
                *v = 0.0;
            }
        }
        let norm = g.frobenius_norm();
        if norm == 0.0 {
            break;
        }
        let step = c / (k as f64).sqrt() / norm;
        for (a, &b) in y.data_mut().iter_mut().zip(g.data()) {
            *a -= step * b;
        }
    }
    best
}

#[test]
fn admm_objective_matches_subgradient_reference() {
    let truth = Factors::random(&DIMS, &[1; 4], 5).unwrap().synthesize();
    let mask = ObservationMask::uniform(&DIMS, samples_for_rate(81, 0.6), 6).unwrap();
    let (x, _) = trbu_complete(&truth, &mask, &Config::default()).unwrap();
    for &k in mask.indices() {
        assert_eq!(x.data()[k], truth.data()[k]);
    }
    let f_admm = objective(&x);
    let f_ref = subgradient_reference(&truth, &mask, 1e-3, 200_000);
    let rel = (f_admm - f_ref).abs() / f_ref;
    println!("admm {f_admm:.10} reference {f_ref:.10} relative gap {rel:e}");
    assert!(rel <= 1e-4, "relative gap {rel:e}");
}
