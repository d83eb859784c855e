//! Distributional random forests with half-sample uncertainty quantification.
//!
//! A [`GroupedForest`] turns a query point into weights over the training
//! rows, both overall and per half-sample group. Plug-in targets evaluated
//! under those weights give point estimates together with replicates, from
//! which [`uncertainty`] builds intervals and ellipsoids. [`codite`] compares
//! two treatment arms with a kernel two-sample test and a witness band.

pub mod codite;
pub mod config;
pub mod coverage;
pub mod data;
pub mod error;
pub mod forest;
pub mod inference;
pub mod kernel;
pub mod rng;
pub mod simulate;
pub mod stats;
pub mod uncertainty;

pub use codite::{codite_analysis, codite_test, fit_two_groups, CoditeTestResult, TwoGroupFit, WitnessBand};
pub use data::{load_dataset, ColumnRole, Dataset, DatasetSchema};
pub use error::{Error, ErrorKind, Result};
pub use forest::io::ForestModel;
pub use forest::{build_forest, BandwidthPolicy, ForestConfig, GroupedForest, SplitMode, WeightBundle};
pub use inference::{Functional, TargetSpec};
pub use kernel::{Bandwidth, FeatureMap, GramMatrices};
pub use simulate::{simulate, DgpKind, DgpSpec};
pub use uncertainty::{BootstrapSample, EllipsoidCalibration, Interval};
