#![allow(dead_code)]

use metaprop::simulate::{simulate_dataset, CountRange, FeatureDistribution, SimulatedFeature, SimulationConfig};
use metaprop::Dataset;

/// Intercept-only data with moderate between- and within-study variance.
pub fn plain(studies: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        studies,
        trials_per_study: CountRange { min: 2, max: 6 },
        sample_size: CountRange { min: 200, max: 2000 },
        mu: 1.0,
        sigma2_xi: 0.017,
        sigma2_zeta: 0.010,
        features: Vec::new(),
        seed,
    }
}

/// Accuracy driven by the majority-class share.
pub fn maxprev_driven(studies: usize, seed: u64) -> SimulationConfig {
    SimulationConfig {
        mu: 0.98,
        sigma2_xi: 0.007,
        features: vec![SimulatedFeature {
            name: "maxprev".into(),
            distribution: FeatureDistribution::Uniform { min: 0.3, max: 0.95 },
            effect: 0.43,
        }],
        ..plain(studies, seed)
    }
}

pub fn simulate(config: &SimulationConfig) -> Dataset {
    simulate_dataset(config).expect("simulation succeeds").0
}

use metaprop::data::{Study, Trial};
use metaprop::multilevel::VarianceComponents;
use metaprop::transforms::ProportionOutcome;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Random small dataset: up to `max_h` studies with up to `max_trials` trials each.
pub fn random_dataset(rng: &mut ChaCha8Rng, max_h: usize, max_trials: usize) -> Dataset {
    let h = rng.random_range(2..=max_h);
    let studies = (0..h)
        .map(|j| {
            let m = rng.random_range(1..=max_trials);
            let trials = (0..m)
                .map(|i| {
                    let n = rng.random_range(10..2000);
                    let p: f64 = rng.random_range(0.55..0.99);
                    let k = ((p * n as f64).round() as u64).min(n);
                    Trial::new(format!("t{i}"), ProportionOutcome::new(k, n).unwrap())
                })
                .collect();
            Study::new(format!("s{j}"), trials)
        })
        .collect();
    Dataset::new(studies).unwrap()
}

pub fn random_components(rng: &mut ChaCha8Rng) -> VarianceComponents {
    let draw = |rng: &mut ChaCha8Rng| {
        if rng.random_bool(0.15) {
            0.0
        } else {
            rng.random_range(0.0..0.05)
        }
    };
    VarianceComponents {
        sigma2_xi: draw(rng),
        sigma2_zeta: draw(rng),
    }
}

/// Dense marginal covariance assembled entry by entry.
pub fn dense_covariance(c: &VarianceComponents, ds: &Dataset) -> Vec<Vec<f64>> {
    let idx = ds.study_index();
    let v = ds.variances();
    let m = v.len();
    let mut out = vec![vec![0.0; m]; m];
    for r in 0..m {
        for s in 0..m {
            if idx[r] == idx[s] {
                out[r][s] = c.sigma2_xi;
            }
        }
        out[r][r] += c.sigma2_zeta + v[r];
    }
    out
}

/// Gauss–Jordan inverse with partial pivoting, plus `log|A|`.
pub fn gauss_jordan(a: &[Vec<f64>]) -> (Vec<Vec<f64>>, f64) {
    let n = a.len();
    let mut aug: Vec<Vec<f64>> = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    let mut log_det = 0.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&x, &y| aug[x][col].abs().total_cmp(&aug[y][col].abs()))
            .unwrap();
        aug.swap(col, pivot);
        let p = aug[col][col];
        assert!(p != 0.0, "singular matrix");
        log_det += p.abs().ln();
        for v in aug[col].iter_mut() {
            *v /= p;
        }
        for r in 0..n {
            if r != col {
                let f = aug[r][col];
                if f != 0.0 {
                    let pivot = aug[col].clone();
                    for (a, p) in aug[r].iter_mut().zip(&pivot) {
                        *a -= f * p;
                    }
                }
            }
        }
    }
    (aug.into_iter().map(|r| r[n..].to_vec()).collect(), log_det)
}

pub fn mat_vec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    a.iter().map(|row| row.iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}
