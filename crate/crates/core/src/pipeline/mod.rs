//! Experiment orchestration: declarative configs, resumable runs, reports.

pub mod config;
pub mod report;
pub mod run;
pub mod svg;

pub use config::{ExperimentConfig, Variant, MIN_PHOTON_BUDGET};
pub use report::{pod_curve_svg, write_report};
pub use run::{phantom_sim_seed, run, RunManifest};
