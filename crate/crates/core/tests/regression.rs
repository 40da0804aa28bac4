mod common;

use metaprop::multilevel::reml_fit;
use metaprop::regression::{
    encode_features, forward_select, information_criteria, permutation_importance, Criterion, FeatureSpec, PfiOptions,
    SelectionOptions,
};
use metaprop::simulate::{FeatureDistribution, SimulatedFeature};
use metaprop::{Dataset, FeatureMatrix, FeatureValue};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn noise(name: &str) -> SimulatedFeature {
    SimulatedFeature {
        name: name.into(),
        distribution: FeatureDistribution::Normal { mean: 0.0, sd: 1.0 },
        effect: 0.0,
    }
}

fn with_noise(ds: &Dataset, name: &str, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Dataset::new(
        ds.studies()
            .iter()
            .cloned()
            .map(|s| s.with_feature(name, FeatureValue::Number(rng.random_range(-1.0..1.0))))
            .collect(),
    )
    .unwrap()
}

#[test]
fn encoding_shapes() {
    let ds = common::simulate(&common::maxprev_driven(12, 1));
    assert_eq!(encode_features(&ds, &[], &[]).unwrap().ncols(), 1);
    let x = encode_features(&ds, &[FeatureSpec::numeric("maxprev")], &["maxprev".into()]).unwrap();
    assert_eq!(x.ncols(), 2);
    assert!(x.matrix().column(1).iter().all(|v| (0.3..0.95).contains(v)));
    assert!(encode_features(&ds, &[FeatureSpec::numeric("maxprev")], &["resolution".into()]).is_err());
}

#[test]
fn noise_column_effects_on_rmse_and_aic() {
    let (mut rmse_ok, mut aic_up) = (0, 0);
    let reps = 40;
    for seed in 0..reps {
        let ds = with_noise(&common::simulate(&common::plain(20, seed)), "junk", 1000 + seed);
        let null = information_criteria(&ds, &FeatureMatrix::intercept_only(ds.num_trials())).unwrap();
        let x = encode_features(&ds, &[FeatureSpec::numeric("junk")], &["junk".into()]).unwrap();
        let feat = information_criteria(&ds, &x).unwrap();
        rmse_ok += usize::from(feat.rmse <= null.rmse + 1e-12);
        aic_up += usize::from(feat.aic > null.aic);
    }
    assert!(rmse_ok * 10 >= reps as usize * 8, "RMSE non-increasing in {rmse_ok}/{reps}");
    assert!(aic_up * 2 > reps as usize, "AIC increased in {aic_up}/{reps}");
}

#[test]
fn generating_feature_lowers_rmse() {
    let mut cfg = common::maxprev_driven(20, 4);
    cfg.sigma2_xi = 0.0;
    let ds = common::simulate(&cfg);
    let null = information_criteria(&ds, &FeatureMatrix::intercept_only(ds.num_trials())).unwrap();
    let x = encode_features(&ds, &[FeatureSpec::numeric("maxprev")], &["maxprev".into()]).unwrap();
    assert!(information_criteria(&ds, &x).unwrap().rmse < null.rmse);
}

#[test]
fn selection_finds_planted_feature_and_is_deterministic() {
    let mut cfg = common::maxprev_driven(30, 12);
    cfg.features.extend([noise("a"), noise("b")]);
    let ds = common::simulate(&cfg);
    let specs = vec![FeatureSpec::numeric("a"), FeatureSpec::numeric("b"), FeatureSpec::numeric("maxprev")];
    let opts = SelectionOptions {
        criterion: Criterion::Bic,
        ..SelectionOptions::default()
    };
    let path = forward_select(&ds, &specs, opts).unwrap();
    assert_eq!(path.steps[0].best.as_deref(), Some("maxprev"));
    assert_eq!(path.selected, ["maxprev"]);
    let values = path.accepted_values();
    assert!(values.windows(2).all(|w| w[1] < w[0]));
    assert_eq!(forward_select(&ds, &specs, opts).unwrap(), path);
}

#[test]
fn single_helpful_candidate_gives_path_of_length_one() {
    let ds = common::simulate(&common::maxprev_driven(20, 3));
    let path = forward_select(&ds, &[FeatureSpec::numeric("maxprev")], SelectionOptions::default()).unwrap();
    assert_eq!(path.selected, ["maxprev"]);
    assert_eq!(path.steps.len(), 1);
}

#[test]
fn pure_noise_usually_selects_nothing() {
    let reps = 100;
    let mut empty = 0;
    for seed in 0..reps {
        let mut cfg = common::plain(200, 500 + seed);
        cfg.features = vec![noise("a"), noise("b"), noise("c")];
        let ds = common::simulate(&cfg);
        let specs: Vec<_> = ["a", "b", "c"].iter().map(|n| FeatureSpec::numeric(*n)).collect();
        let path = forward_select(&ds, &specs, SelectionOptions::default()).unwrap();
        empty += usize::from(path.selected.is_empty());
    }
    assert!(empty * 2 > reps as usize, "empty path in {empty}/{reps}");
}

#[test]
fn pfi_bookkeeping_and_reproducibility() {
    let ds = common::simulate(&common::maxprev_driven(20, 6));
    let specs = vec![FeatureSpec::numeric("maxprev")];
    let tiny = PfiOptions {
        folds: 2,
        permutations: 1,
        seed: 3,
    };
    let report = permutation_importance(&ds, &specs, &["maxprev".into()], tiny).unwrap();
    assert_eq!(report.features[0].replicates.len(), 2);
    assert_eq!(report.original_rmse.len(), 2);

    let opts = PfiOptions {
        permutations: 50,
        ..PfiOptions::default()
    };
    let a = permutation_importance(&ds, &specs, &["maxprev".into()], opts).unwrap();
    let b = permutation_importance(&ds, &specs, &["maxprev".into()], opts).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.features[0].replicates.len(), 250);
    assert!(a.features[0].replicates.iter().all(|&r| r > 0.0));

    assert!(permutation_importance(&ds, &specs, &["maxprev".into()], PfiOptions { folds: 1, ..opts }).is_err());
    let small = Dataset::new(ds.studies()[..2].to_vec()).unwrap();
    if small.num_trials() < 10 {
        assert!(permutation_importance(&small, &specs, &["maxprev".into()], opts).is_err());
    }
}

#[test]
fn constant_feature_has_unit_importance() {
    let base = common::simulate(&common::maxprev_driven(20, 7));
    let ds = Dataset::new(
        base.studies()
            .iter()
            .cloned()
            .map(|s| s.with_feature("flat", FeatureValue::Number(0.5)))
            .collect(),
    )
    .unwrap();
    let specs = vec![FeatureSpec::numeric("maxprev"), FeatureSpec::numeric("flat")];
    let report = permutation_importance(
        &ds,
        &specs,
        &["maxprev".into(), "flat".into()],
        PfiOptions {
            permutations: 20,
            ..PfiOptions::default()
        },
    )
    .unwrap();
    assert!(report.feature("flat").unwrap().replicates.iter().all(|&r| r == 1.0));
}

#[test]
fn planted_and_noise_importance() {
    let mut cfg = common::maxprev_driven(30, 13);
    cfg.features.push(noise("junk"));
    let ds = common::simulate(&cfg);
    let specs = vec![FeatureSpec::numeric("maxprev"), FeatureSpec::numeric("junk")];
    let report = permutation_importance(&ds, &specs, &["maxprev".into(), "junk".into()], PfiOptions::default()).unwrap();
    let planted = report.feature("maxprev").unwrap();
    assert!(planted.mean > 1.0 && planted.p2_5 > 1.0, "{planted:?}");
    let junk = report.feature("junk").unwrap();
    assert_eq!(junk.replicates.len(), 1000);
    assert!((junk.mean - 1.0).abs() <= 0.1, "noise mean PFI {}", junk.mean);
}

#[test]
fn fitted_planted_slope_is_positive() {
    let ds = common::simulate(&common::maxprev_driven(40, 2));
    let x = encode_features(&ds, &[FeatureSpec::numeric("maxprev")], &["maxprev".into()]).unwrap();
    assert!(reml_fit(&ds, &x).unwrap().beta[1] > 0.0);
}
