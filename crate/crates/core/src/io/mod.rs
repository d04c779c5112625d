//! CSV ingestion, model specifications, train/test splits, fit artifacts
//! and out-of-sample prediction.

mod artifact;
mod enumerate;
mod model;
mod split;
mod table;

pub use artifact::{
    fit_model, plugin_bandwidths, predict, rspe, FitArtifact, FitDiagnostics, FitOptions, ARTIFACT_FORMAT,
};
pub use enumerate::{enumerate_roles, role_assignments, RoleResult};
pub use model::{ModelSpec, PoolVariable, Rescale, Term, Transform};
pub use split::{split, SplitSpec};
pub use table::{dataset_model, dataset_table, ingest, ingest_path, RangeMode, Table};
