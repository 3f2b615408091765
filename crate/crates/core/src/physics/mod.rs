//! Energy spectra, per-process attenuation tables, half-value-layer
//! computation and the stochastic sampling kernels used by the transport
//! engine.

mod material;
mod scatter;
mod spectrum;

pub use material::{Material, Mu};
pub use scatter::{
    compton_scatter, klein_nishina_density, rayleigh_scatter, thomson_density, ComptonSample,
};
pub use spectrum::{
    kramers_spectrum, load_spectrum, parse_spectrum, resolve_spectrum, tube_spectrum, Spectrum,
    KRAMERS_DEFAULT_CUTOFF_KEV,
};

use crate::error::{Error, Result};
use crate::rng::CounterRng;

/// Electron rest energy, keV. Three significant figures are all this
/// accuracy class needs.
pub const MEC2_KEV: f64 = 511.0;

/// Photons below this energy are absorbed on the spot.
pub const TRANSPORT_CUTOFF_KEV: f64 = 1.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InteractionKind {
    Photoelectric,
    Compton,
    Rayleigh,
}

/// Draws the interaction kind with probability mu_kind / mu_total at this
/// energy. CDF ordering is photoelectric, then Compton, then Rayleigh.
pub fn choose_interaction(material: &Material, energy_kev: f64, u: f64) -> Result<InteractionKind> {
    Ok(choose_interaction_mu(&material.mu(energy_kev)?, u))
}

/// Same draw from an already-looked-up attenuation triple.
#[inline]
pub fn choose_interaction_mu(mu: &Mu, u: f64) -> InteractionKind {
    let x = u * mu.total();
    if x < mu.photoelectric {
        InteractionKind::Photoelectric
    } else if x < mu.photoelectric + mu.compton {
        InteractionKind::Compton
    } else {
        InteractionKind::Rayleigh
    }
}

/// Draws a spectrum energy by inverse CDF over the bins; returns the bin
/// center energy.
pub fn sample_energy(spectrum: &Spectrum, u: f64) -> f64 {
    spectrum.sample(u)
}

/// Thickness at which the spectrum-weighted transmitted intensity halves,
/// solved by bisection to 1e-6 mm. Monochromatic input reduces to ln2/mu.
pub fn hvl(material: &Material, spectrum: &Spectrum) -> Result<f64> {
    material.check_covers(spectrum)?;
    let mus: Vec<(f64, f64)> = spectrum
        .bins()
        .filter(|&(_, w)| w > 0.0)
        .map(|(e, w)| Ok((material.mu(e)?.total(), w)))
        .collect::<Result<_>>()?;
    let total_w: f64 = mus.iter().map(|&(_, w)| w).sum();
    let transmitted = |t: f64| -> f64 {
        mus.iter().map(|&(mu, w)| w * (-mu * t).exp()).sum::<f64>() / total_w
    };

    let mut hi = 1.0;
    let mut doublings = 0;
    while transmitted(hi) > 0.5 {
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::NotConverged);
        }
    }
    let mut lo = 0.0;
    let mut iters = 0;
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if transmitted(mid) > 0.5 {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > 200 {
            return Err(Error::NotConverged);
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Spectrum-weighted transmitted fraction through `t_mm` of material.
pub fn transmitted_fraction(material: &Material, spectrum: &Spectrum, t_mm: f64) -> Result<f64> {
    material.check_covers(spectrum)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (e, w) in spectrum.bins() {
        if w > 0.0 {
            num += w * (-material.mu(e)?.total() * t_mm).exp();
            den += w;
        }
    }
    Ok(num / den)
}

/// Convenience sphere of interaction sampling used by tests: draws a kind
/// histogram of `n` interactions at one energy.
pub fn interaction_frequencies(
    material: &Material,
    energy_kev: f64,
    n: usize,
    rng: &mut CounterRng,
) -> Result<[f64; 3]> {
    let mut counts = [0usize; 3];
    for _ in 0..n {
        match choose_interaction(material, energy_kev, rng.next_f64())? {
            InteractionKind::Photoelectric => counts[0] += 1,
            InteractionKind::Compton => counts[1] += 1,
            InteractionKind::Rayleigh => counts[2] += 1,
        }
    }
    Ok(counts.map(|c| c as f64 / n as f64))
}
