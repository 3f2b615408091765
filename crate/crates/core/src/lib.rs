//! Simulation and analysis toolkit for quantifying how X-ray scattering
//! affects defect detectability.
//!
//! The pipeline stages are:
//!
//! 1. **phantom** — analytic cylinder-with-cavity objects, randomized
//!    populations, exact ray chords, and the scalar defect-size metric.
//! 2. **physics** — source spectra, per-process attenuation tables,
//!    half-value layers, and the Compton/Rayleigh sampling kernels.
//! 3. **projector** — deterministic polychromatic cone-beam projection,
//!    ground-truth masks, flatfield-log preprocessing, Poisson noise.
//! 4. **montecarlo** — photon-by-photon transport with per-pixel tallies
//!    separated by scatter order: primary image P, scatter image S, the
//!    scatter-to-primary map, and the paired with/without-scatter datasets.
//! 5. **detect** — a classical baseline segmenter plus an import path for
//!    externally produced masks, scored with the F1 metric.
//! 6. **pod** — probability-of-detection statistics: GLM fits (univariate
//!    and SPR-augmented), Wald bands, s90 / s90-95, curve comparison.
//! 7. **pipeline** — declarative experiment configs, resumable runs,
//!    reports and SVG plots.

pub mod detect;
pub mod error;
pub mod montecarlo;
pub mod numeric;
pub mod phantom;
pub mod physics;
pub mod pipeline;
pub mod pod;
pub mod projector;
pub mod raster;
pub mod rng;
pub mod vec3;

pub use error::{Error, Result};
pub use phantom::{Phantom, PhantomParamRanges, PhantomSet, Ray, Split};
pub use physics::{Material, Spectrum};
pub use projector::AcquisitionGeometry;
pub use raster::Raster;
