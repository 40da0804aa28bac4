//! Three-level meta-analysis and meta-regression of classification accuracy.
//!
//! Trial accuracies `k/n` are mapped to the double-arcsine scale, pooled with a
//! random-effects model that separates between-study from within-study
//! heterogeneity, optionally explained by study-level features, and mapped
//! back to the proportion scale for reporting.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod design;
pub mod error;
pub mod io;
pub mod multilevel;
pub mod optimize;
pub mod regression;
pub mod reporting;
pub mod simulate;
pub mod special;
pub mod transforms;

pub use data::{Dataset, FeatureValue, Study, Trial};
pub use design::{ColumnGroup, FeatureMatrix};
pub use error::{Error, ErrorKind, Result};
