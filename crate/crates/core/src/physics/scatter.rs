//! Angular samplers for the two scattering processes.
//!
//! Compton uses the free-electron Klein-Nishina differential cross-section
//! (no binding, no Doppler broadening); Rayleigh uses the Thomson angular law
//! without atomic form factors. Both sample the polar angle by rejection
//! against a flat envelope and draw the azimuth uniformly afterwards.

use crate::rng::CounterRng;

use super::MEC2_KEV;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComptonSample {
    pub theta: f64,
    pub phi: f64,
    pub energy_out_kev: f64,
}

/// Unnormalized Klein-Nishina density in cos(theta) at photon energy
/// `alpha = E/mec2`: kappa^3 + kappa - kappa^2 sin^2(theta) with
/// kappa = E'/E. Bounded above by 2 (its forward value), which the rejection
/// loop uses as envelope.
#[inline]
pub fn klein_nishina_density(alpha: f64, cos_theta: f64) -> f64 {
    let kappa = 1.0 / (1.0 + alpha * (1.0 - cos_theta));
    let sin2 = 1.0 - cos_theta * cos_theta;
    kappa * kappa * (kappa + 1.0 / kappa - sin2)
}

/// Samples a Compton deflection at `energy_kev`, returning polar angle,
/// azimuth, and the shifted outgoing energy
/// E' = E / (1 + (E/511)(1 - cos theta)).
pub fn compton_scatter(energy_kev: f64, rng: &mut CounterRng) -> ComptonSample {
    debug_assert!(energy_kev > 0.0);
    let alpha = energy_kev / MEC2_KEV;
    let cos_theta = loop {
        let c = 1.0 - 2.0 * rng.next_f64();
        if 2.0 * rng.next_f64() <= klein_nishina_density(alpha, c) {
            break c;
        }
    };
    let phi = std::f64::consts::TAU * rng.next_f64();
    let energy_out_kev = energy_kev / (1.0 + alpha * (1.0 - cos_theta));
    ComptonSample { theta: cos_theta.acos(), phi, energy_out_kev }
}

/// Thomson angular law density in cos(theta), unnormalized: 1 + cos^2.
#[inline]
pub fn thomson_density(cos_theta: f64) -> f64 {
    1.0 + cos_theta * cos_theta
}

/// Samples an elastic (Rayleigh) deflection; the photon energy is unchanged.
pub fn rayleigh_scatter(rng: &mut CounterRng) -> (f64, f64) {
    let cos_theta = loop {
        let c = 1.0 - 2.0 * rng.next_f64();
        if 2.0 * rng.next_f64() <= thomson_density(c) {
            break c;
        }
    };
    let phi = std::f64::consts::TAU * rng.next_f64();
    (cos_theta.acos(), phi)
}
