//! Meta-regression on study-level features: encoding, R², information
//! criteria, forward selection and permutation importance.

mod criteria;
mod features;
mod importance;
mod selection;

pub use criteria::{
    criteria_for, fixed_effects_rmse, information_criteria, r_squared, r_squared_from, Criterion,
    InformationCriteria, RSquared, RSquaredValue,
};
pub use features::{encode_features, FeatureKind, FeatureSpec};
pub use importance::{percentile, permutation_importance, FeatureImportance, PfiOptions, PfiReport};
pub use selection::{
    forward_select, score_model, CandidateOutcome, ModelScore, SelectionOptions, SelectionPath,
    SelectionStep,
};
