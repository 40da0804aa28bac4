//! Independent reference computations: dense linear algebra and brute-force
//! likelihood search.

use metaprop::data::{Study, Trial};
use metaprop::multilevel::VarianceComponents;
use metaprop::transforms::ProportionOutcome;
use metaprop::Dataset;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Up to `max_h` studies with up to `max_trials` trials each.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_h: usize, max_trials: usize) -> Dataset {
    let h = rng.random_range(2..=max_h);
    let studies = (0..h)
        .map(|j| {
            let m = rng.random_range(1..=max_trials);
            let trials = (0..m)
                .map(|i| {
                    let n = rng.random_range(10..2000);
                    let p: f64 = rng.random_range(0.5..0.99);
                    let k = ((p * n as f64).round() as u64).min(n);
                    Trial::new(format!("t{i}"), ProportionOutcome::new(k, n).unwrap())
                })
                .collect();
            Study::new(format!("s{j}"), trials)
        })
        .collect();
    Dataset::new(studies).unwrap()
}

/// Components with occasional exact zeros.
pub fn random_components(rng: &mut ChaCha8Rng) -> VarianceComponents {
    let mut draw = || if rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.0..0.05) };
    VarianceComponents {
        sigma2_xi: draw(),
        sigma2_zeta: draw(),
    }
}

/// `M = diag(v) + σ²_ζ I + σ²_ξ · same-study indicator`, entry by entry.
pub fn dense_covariance(c: &VarianceComponents, ds: &Dataset) -> DMatrix<f64> {
    let study = ds.study_index();
    let v = ds.variances();
    let m = v.len();
    DMatrix::from_fn(m, m, |r, s| {
        let mut x = if study[r] == study[s] { c.sigma2_xi } else { 0.0 };
        if r == s {
            x += c.sigma2_zeta + v[r];
        }
        x
    })
}

pub fn dense_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("covariance is invertible")
}

/// Dot product evaluated as if in twice the working precision (Ogita, Rump and Oishi).
fn dot2(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for (x, y) in a.zip(b) {
        let p = x * y;
        let p_err = x.mul_add(y, -p);
        let t = s + p;
        let z = t - s;
        let s_err = (s - (t - z)) + (p - z);
        s = t;
        c += p_err + s_err;
    }
    s + c
}

/// `M⁻¹ b` by dense LU, refined with residuals computed in compensated
/// arithmetic from the unrounded parts of `M` (the diagonal is kept as
/// `σ²_ξ + d` rather than its rounded sum).
pub fn dense_solve(c: &VarianceComponents, ds: &Dataset, b: &DMatrix<f64>) -> DMatrix<f64> {
    let m = dense_covariance(c, ds);
    let study = ds.study_index();
    let d: Vec<f64> = ds.variances().iter().map(|v| c.sigma2_zeta + v).collect();
    let lu = m.lu();
    let mut x = lu.solve(b).expect("covariance is invertible");
    for _ in 0..4 {
        let residual = DMatrix::from_fn(b.nrows(), b.ncols(), |r, col| {
            let same = (0..study.len()).filter(|&s| study[s] == study[r]);
            let coefs = same.clone().map(|_| c.sigma2_xi).chain([d[r], -1.0]);
            let values = same.map(|s| x[(s, col)]).chain([x[(r, col)], b[(r, col)]]);
            dot2(coefs, values)
        });
        x -= lu.solve(&residual).expect("covariance is invertible");
    }
    x
}

/// `Σ_ij w_ij θ_ij / Σ_ij w_ij` with `w_ij` the row sums of `M⁻¹`.
pub fn weighted_mean(weights: &DMatrix<f64>, theta: &[f64]) -> f64 {
    let rows: Vec<f64> = weights.row_iter().map(|r| r.sum()).collect();
    let total: f64 = rows.iter().sum();
    rows.iter().zip(theta).map(|(w, t)| w * t).sum::<f64>() / total
}

/// Restricted log-likelihood of `θ_j ~ N(μ, τ² + v_j)` with μ profiled out.
fn two_level_reml(tau2: f64, theta: &[f64], v: &[f64]) -> f64 {
    let w: Vec<f64> = v.iter().map(|x| 1.0 / (tau2 + x)).collect();
    let sw: f64 = w.iter().sum();
    let mu = w.iter().zip(theta).map(|(a, b)| a * b).sum::<f64>() / sw;
    let quad: f64 = w.iter().zip(theta).map(|(a, t)| a * (t - mu).powi(2)).sum();
    -0.5 * (v.iter().map(|x| (tau2 + x).ln()).sum::<f64>() + sw.ln() + quad)
}

/// Maximizer of the two-level restricted likelihood on `[0, 1]` by repeated grid refinement.
pub fn two_level_grid(theta: &[f64], v: &[f64]) -> f64 {
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    let mut best = 0.0;
    for _ in 0..14 {
        let steps = 200;
        let h = (hi - lo) / steps as f64;
        best = (0..=steps)
            .map(|i| lo + h * i as f64)
            .max_by(|a, b| two_level_reml(*a, theta, v).total_cmp(&two_level_reml(*b, theta, v)))
            .unwrap();
        lo = (best - 2.0 * h).max(0.0);
        hi = best + 2.0 * h;
    }
    best
}
