//! Declarative experiment configuration.
//!
//! Flat `key = value` text with dotted section prefixes; `#` starts a
//! comment. Unknown keys are rejected so a typo cannot silently fall back to
//! a default. Everything an end-to-end run needs lives here — the only
//! environment override honored anywhere is `XSPOD_WORKERS`.

use std::path::{Path, PathBuf};

use crate::detect::DetectorParams;
use crate::error::{Error, Result};
use crate::phantom::PhantomParamRanges;
use crate::physics::{resolve_spectrum, Material, Spectrum};
use crate::pod::Link;
use crate::projector::AcquisitionGeometry;

pub const MIN_PHOTON_BUDGET: u64 = 10_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Variant {
    With,
    Without,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::With => "with",
            Variant::Without => "without",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "with" => Ok(Variant::With),
            "without" => Ok(Variant::Without),
            other => Err(Error::validation(format!("unknown variant `{other}` (with|without)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    /// Bundled material name or a table CSV path.
    pub material_ref: String,
    /// Spectrum CSV path, `kramers:KV`, or `kramers:KV:CUTOFF`.
    pub spectrum_ref: String,
    pub photons: u64,
    pub workers: usize,
    pub out_dir: PathBuf,
    pub variants: Vec<Variant>,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub ranges: PhantomParamRanges,
    pub geometry: AcquisitionGeometry,
    pub detector: DetectorParams,
    pub link: Link,
    pub f1_threshold: f64,
    /// Fit the SPR-augmented model alongside the univariate one.
    pub spr_covariate: bool,
    /// Train/val phantoms are always generated and recorded; simulating them
    /// only matters when an external learned detector will consume the
    /// datasets.
    pub simulate_train_val: bool,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text, path)
    }

    /// Parses, applies defaults, validates invariants and referenced files.
    pub fn from_text(text: &str, origin: &Path) -> Result<Self> {
        let mut seed = None;
        let mut material_ref = None;
        let mut spectrum_ref = None;
        let mut photons: u64 = 10_000_000;
        let mut workers: usize = 1;
        let mut out_dir = None;
        let mut variants = vec![Variant::With, Variant::Without];
        let (mut n_train, mut n_val, mut n_test) = (0usize, 0usize, 100usize);
        let mut ranges = PhantomParamRanges::defaults();
        let (mut sod, mut sdd) = (200.0f64, 300.0f64);
        let (mut det_w, mut det_h, mut pitch) = (75.0f64, 82.5f64, 0.3f64);
        let mut detector = DetectorParams::default();
        let mut link = Link::Logit;
        let mut f1_threshold = crate::pod::DEFAULT_F1_THRESHOLD;
        let mut spr_covariate = true;
        let mut simulate_train_val = false;

        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                what: "expected `key = value`".into(),
            })?;
            let key = key.trim();
            let value = value.trim();
            let bad = |what: String| Error::Parse { path: origin.to_path_buf(), line: i + 1, what };
            let fnum =
                |v: &str| -> Result<f64> { v.parse().map_err(|_| bad(format!("bad number `{v}`"))) };
            let inum =
                |v: &str| -> Result<u64> { v.parse().map_err(|_| bad(format!("bad integer `{v}`"))) };
            match key {
                "seed" => seed = Some(inum(value)?),
                "material" => material_ref = Some(value.to_string()),
                "spectrum" => spectrum_ref = Some(value.to_string()),
                "photons" => photons = inum(value)?,
                "workers" => workers = inum(value)? as usize,
                "out" => out_dir = Some(PathBuf::from(value)),
                "variants" => {
                    variants =
                        value.split(',').map(|v| v.parse()).collect::<Result<Vec<Variant>>>()?;
                }
                "phantoms.train" => n_train = inum(value)? as usize,
                "phantoms.val" => n_val = inum(value)? as usize,
                "phantoms.test" => n_test = inum(value)? as usize,
                "phantoms.radius_min_mm" => ranges.radius_range.0 = fnum(value)?,
                "phantoms.radius_max_mm" => ranges.radius_range.1 = fnum(value)?,
                "phantoms.height_min_mm" => ranges.height_range.0 = fnum(value)?,
                "phantoms.height_max_mm" => ranges.height_range.1 = fnum(value)?,
                "phantoms.cavity_min_mm" => ranges.cavity_base_radius_range.0 = fnum(value)?,
                "phantoms.cavity_max_mm" => ranges.cavity_base_radius_range.1 = fnum(value)?,
                "phantoms.ratio_min" => ranges.axis_ratio_range.0 = fnum(value)?,
                "phantoms.ratio_max" => ranges.axis_ratio_range.1 = fnum(value)?,
                "phantoms.simulate_train_val" => {
                    simulate_train_val =
                        value.parse().map_err(|_| bad(format!("bad bool `{value}`")))?;
                }
                "geometry.sod_mm" => sod = fnum(value)?,
                "geometry.sdd_mm" => sdd = fnum(value)?,
                "geometry.det_width_mm" => det_w = fnum(value)?,
                "geometry.det_height_mm" => det_h = fnum(value)?,
                "geometry.pixel_pitch_mm" => pitch = fnum(value)?,
                "detector.background_degree" => detector.background_degree = inum(value)? as usize,
                "detector.noise_k" => detector.noise_k = fnum(value)?,
                "detector.min_component_px" => detector.min_component_px = inum(value)? as usize,
                "pod.link" => link = value.parse()?,
                "pod.threshold" => f1_threshold = fnum(value)?,
                "pod.covariate" => {
                    spr_covariate = match value {
                        "spr" => true,
                        "none" => false,
                        other => return Err(bad(format!("pod.covariate `{other}` (spr|none)"))),
                    };
                }
                other => {
                    return Err(bad(format!("unknown key `{other}`")));
                }
            }
        }

        let seed = seed.ok_or_else(|| {
            Error::validation("config must set `seed` explicitly (no implicit entropy)")
        })?;
        let material_ref =
            material_ref.ok_or_else(|| Error::validation("config must set `material`"))?;
        let spectrum_ref =
            spectrum_ref.ok_or_else(|| Error::validation("config must set `spectrum`"))?;
        let out_dir = out_dir.ok_or_else(|| Error::validation("config must set `out`"))?;

        if photons < MIN_PHOTON_BUDGET {
            return Err(Error::validation(format!(
                "photon budget {photons} below the {MIN_PHOTON_BUDGET} minimum"
            )));
        }
        if workers == 0 {
            return Err(Error::validation("workers must be >= 1"));
        }
        if variants.is_empty() {
            return Err(Error::validation("at least one variant required"));
        }
        if !(0.0..=1.0).contains(&f1_threshold) {
            return Err(Error::validation(format!("pod.threshold {f1_threshold} outside [0, 1]")));
        }
        ranges.validate()?;
        detector.validate()?;
        if !(pitch > 0.0) {
            return Err(Error::validation("pixel pitch must be > 0"));
        }
        let n_cols = (det_w / pitch).round() as usize;
        let n_rows = (det_h / pitch).round() as usize;
        let geometry = AcquisitionGeometry::new(sod, sdd, det_w, det_h, pitch, n_cols, n_rows)?;

        // the worker-count env override is the one permitted environment knob
        let workers = match std::env::var("XSPOD_WORKERS") {
            Ok(v) => {
                v.parse().map_err(|_| Error::validation(format!("bad XSPOD_WORKERS `{v}`")))?
            }
            Err(_) => workers,
        };

        let config = ExperimentConfig {
            seed,
            material_ref,
            spectrum_ref,
            photons,
            workers,
            out_dir,
            variants,
            n_train,
            n_val,
            n_test,
            ranges,
            geometry,
            detector,
            link,
            f1_threshold,
            spr_covariate,
            simulate_train_val,
        };
        // referenced files must exist and parse now, not at stage time
        config.material()?;
        config.spectrum()?;
        Ok(config)
    }

    pub fn material(&self) -> Result<Material> {
        Material::resolve(&self.material_ref)
    }

    pub fn spectrum(&self) -> Result<Spectrum> {
        resolve_spectrum(&self.spectrum_ref)
    }

    /// Canonical serialization: every resolved key, sorted, one per line.
    /// Re-validating this text reproduces the config exactly, and its hash is
    /// the run identity.
    pub fn to_text(&self) -> String {
        let mut lines = vec![
            format!("detector.background_degree = {}", self.detector.background_degree),
            format!("detector.min_component_px = {}", self.detector.min_component_px),
            format!("detector.noise_k = {}", self.detector.noise_k),
            format!("geometry.det_height_mm = {}", self.geometry.det_height),
            format!("geometry.det_width_mm = {}", self.geometry.det_width),
            format!("geometry.pixel_pitch_mm = {}", self.geometry.pixel_pitch),
            format!("geometry.sdd_mm = {}", self.geometry.sdd),
            format!("geometry.sod_mm = {}", self.geometry.sod),
            format!("material = {}", self.material_ref),
            format!("out = {}", self.out_dir.display()),
            format!("phantoms.cavity_max_mm = {}", self.ranges.cavity_base_radius_range.1),
            format!("phantoms.cavity_min_mm = {}", self.ranges.cavity_base_radius_range.0),
            format!("phantoms.height_max_mm = {}", self.ranges.height_range.1),
            format!("phantoms.height_min_mm = {}", self.ranges.height_range.0),
            format!("phantoms.radius_max_mm = {}", self.ranges.radius_range.1),
            format!("phantoms.radius_min_mm = {}", self.ranges.radius_range.0),
            format!("phantoms.ratio_max = {}", self.ranges.axis_ratio_range.1),
            format!("phantoms.ratio_min = {}", self.ranges.axis_ratio_range.0),
            format!("phantoms.simulate_train_val = {}", self.simulate_train_val),
            format!("phantoms.test = {}", self.n_test),
            format!("phantoms.train = {}", self.n_train),
            format!("phantoms.val = {}", self.n_val),
            format!("photons = {}", self.photons),
            format!("pod.covariate = {}", if self.spr_covariate { "spr" } else { "none" }),
            format!("pod.link = {}", self.link),
            format!("pod.threshold = {}", self.f1_threshold),
            format!("seed = {}", self.seed),
            format!("spectrum = {}", self.spectrum_ref),
            format!(
                "variants = {}",
                self.variants.iter().map(Variant::as_str).collect::<Vec<_>>().join(",")
            ),
            format!("workers = {}", self.workers),
        ];
        lines.sort();
        lines.join("\n") + "\n"
    }

    /// FNV-1a 64 over the canonical text, excluding the purely operational
    /// keys (workers, out), so moving a run or changing parallelism does not
    /// invalidate completed stages.
    pub fn hash_hex(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for line in self.to_text().lines() {
            if line.starts_with("workers") || line.starts_with("out ") {
                continue;
            }
            for b in line.as_bytes() {
                h ^= *b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01B3);
            }
            h ^= b'\n' as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
        format!("{h:016x}")
    }
}
