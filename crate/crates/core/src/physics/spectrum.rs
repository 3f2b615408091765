//! Source energy spectra: CSV-loaded tabulations and the simplified
//! bremsstrahlung (Kramers) fallback.

use std::path::Path;

use crate::error::{Error, Result};

use super::Material;

/// Energy-binned relative fluence. Weights are kept as given; sampling and
/// projection normalize internally.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    bin_energies: Vec<f64>,
    fluence: Vec<f64>,
    cumulative: Vec<f64>,
}

impl Spectrum {
    pub fn new(bin_energies: Vec<f64>, fluence: Vec<f64>) -> Result<Self> {
        if bin_energies.is_empty() {
            return Err(Error::validation("spectrum has no bins"));
        }
        if bin_energies.len() != fluence.len() {
            return Err(Error::validation(format!(
                "{} energies vs {} weights",
                bin_energies.len(),
                fluence.len()
            )));
        }
        let mut prev = f64::NEG_INFINITY;
        for &e in &bin_energies {
            if !(e > prev) {
                return Err(Error::validation(format!(
                    "spectrum energies must be strictly ascending ({e} after {prev})"
                )));
            }
            if !(1.0..=1000.0).contains(&e) {
                return Err(Error::validation(format!(
                    "spectrum energy {e} keV outside [1, 1000]"
                )));
            }
            prev = e;
        }
        let mut cumulative = Vec::with_capacity(fluence.len());
        let mut acc = 0.0;
        for &w in &fluence {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::validation(format!("negative or non-finite weight {w}")));
            }
            acc += w;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return Err(Error::validation("spectrum needs at least one positive weight"));
        }
        Ok(Spectrum { bin_energies, fluence, cumulative })
    }

    pub fn monochromatic(energy_kev: f64) -> Result<Self> {
        Spectrum::new(vec![energy_kev], vec![1.0])
    }

    pub fn len(&self) -> usize {
        self.bin_energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bin_energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.bin_energies
    }

    pub fn weights(&self) -> &[f64] {
        &self.fluence
    }

    pub fn bins(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.bin_energies.iter().copied().zip(self.fluence.iter().copied())
    }

    pub fn total_weight(&self) -> f64 {
        *self.cumulative.last().unwrap()
    }

    /// Lowest/highest bin energy with positive weight.
    pub fn support(&self) -> (f64, f64) {
        let lo = self
            .bins()
            .find(|&(_, w)| w > 0.0)
            .map(|(e, _)| e)
            .unwrap();
        let hi = self
            .bins()
            .filter(|&(_, w)| w > 0.0)
            .map(|(e, _)| e)
            .last()
            .unwrap();
        (lo, hi)
    }

    /// Inverse-CDF draw; u in [0, 1). u = 0 lands in the lowest bin with
    /// positive weight.
    #[inline]
    pub fn sample(&self, u: f64) -> f64 {
        let target = u * self.total_weight();
        let idx = self.cumulative.partition_point(|&c| c <= target);
        self.bin_energies[idx.min(self.bin_energies.len() - 1)]
    }
}

/// Loads a two-column `energy_keV,weight` CSV; the header line is optional.
pub fn load_spectrum(path: &Path) -> Result<Spectrum> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_spectrum(&text, path)
}

pub fn parse_spectrum(text: &str, origin: &Path) -> Result<Spectrum> {
    let mut energies = Vec::new();
    let mut weights = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("energy") {
            continue;
        }
        let (e_s, w_s) = line.split_once(',').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            what: "expected `energy_keV,weight`".into(),
        })?;
        let e: f64 = e_s.trim().parse().map_err(|_| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            what: format!("bad energy `{e_s}`"),
        })?;
        let w: f64 = w_s.trim().parse().map_err(|_| Error::Parse {
            path: origin.to_path_buf(),
            line: i + 1,
            what: format!("bad weight `{w_s}`"),
        })?;
        energies.push(e);
        weights.push(w);
    }
    if energies.is_empty() {
        return Err(Error::validation(format!("{}: empty spectrum file", origin.display())));
    }
    Spectrum::new(energies, weights)
}

/// Kramers bremsstrahlung: fluence proportional to (kV - E)/E on bin centers
/// `cutoff, cutoff + w, ...` up to and including the first center at or above
/// `tube_kv` (clamped to it), where the weight is zero. No characteristic
/// lines.
pub fn kramers_spectrum(tube_kv: f64, bin_width_kev: f64, cutoff_kev: f64) -> Result<Spectrum> {
    if !(tube_kv > cutoff_kev && cutoff_kev >= 1.0) {
        return Err(Error::validation(format!(
            "need tube_kv > cutoff >= 1 keV, got tube_kv {tube_kv}, cutoff {cutoff_kev}"
        )));
    }
    if tube_kv > 1000.0 {
        return Err(Error::validation(format!("tube_kv {tube_kv} above the 1000 keV table scope")));
    }
    if !(bin_width_kev > 0.0) {
        return Err(Error::validation(format!("bin width {bin_width_kev} must be > 0")));
    }
    let mut energies = Vec::new();
    let mut weights = Vec::new();
    let mut k = 0u32;
    loop {
        let e = cutoff_kev + k as f64 * bin_width_kev;
        if e >= tube_kv - 1e-12 {
            // endpoint bin carries zero fluence by the Kramers law
            energies.push(tube_kv);
            weights.push(0.0);
            break;
        }
        energies.push(e);
        weights.push((tube_kv - e) / e);
        k += 1;
    }
    Spectrum::new(energies, weights)
}

/// Default cutoff used when a caller asks for a bare Kramers model without a
/// filtration proxy.
pub const KRAMERS_DEFAULT_CUTOFF_KEV: f64 = 10.0;

/// Inherent-filtration proxy used by the `kramers:KV` shorthand.
///
/// A bare Kramers spectrum is far softer than an industrial tube, so the
/// shorthand hardens it with two voltage-scaled knobs, tuned once against the
/// half-value-layer anchors of the bundled materials and frozen:
/// a low-energy cutoff of `25 + kV/25` keV standing in for inherent
/// filtration, and an iron pre-filter of `max(0, (kV - 150)/45)` mm standing
/// in for the metal filtration used at high voltage.
pub fn tube_spectrum(tube_kv: f64) -> Result<Spectrum> {
    let cutoff = 25.0 + tube_kv / 25.0;
    let filter_mm = ((tube_kv - 150.0) / 45.0).max(0.0);
    let base = kramers_spectrum(tube_kv, 1.0, cutoff)?;
    if filter_mm == 0.0 {
        return Ok(base);
    }
    let iron = Material::bundled("iron")?;
    let mut weights = Vec::with_capacity(base.len());
    for (e, w) in base.bins() {
        weights.push(w * (-iron.mu_total(e)? * filter_mm).exp());
    }
    Spectrum::new(base.energies().to_vec(), weights)
}

/// Parses a CLI/config spectrum reference: a CSV path, `kramers:KV` for the
/// filtration-proxy tube model, or `kramers:KV:CUTOFF` for the raw law.
pub fn resolve_spectrum(spec: &str) -> Result<Spectrum> {
    if let Some(rest) = spec.strip_prefix("kramers:") {
        let mut parts = rest.split(':');
        let kv: f64 = parts
            .next()
            .unwrap_or_default()
            .parse()
            .map_err(|_| Error::validation(format!("bad kramers voltage in `{spec}`")))?;
        return match parts.next() {
            Some(cut) => {
                let cutoff: f64 = cut
                    .parse()
                    .map_err(|_| Error::validation(format!("bad kramers cutoff in `{spec}`")))?;
                kramers_spectrum(kv, 1.0, cutoff)
            }
            None => tube_spectrum(kv),
        };
    }
    load_spectrum(Path::new(spec))
}
