//! Property tests for the geometric and statistical invariants the modules
//! promise, driven by proptest-generated inputs.

use proptest::prelude::*;

use xspod_core::phantom::{
    cavity_contained, contains, ray_chords, Chord, CylinderSpec, EllipsoidCavity, Medium, Phantom,
    PhantomRecord, PhantomSet, Ray, Region, Split,
};
use xspod_core::physics::{compton_scatter, Material, MEC2_KEV};
use xspod_core::pod::{s90, Link, PodFit};
use xspod_core::raster::Raster;
use xspod_core::rng::CounterRng;
use xspod_core::vec3::vec3;

fn arb_phantom() -> impl Strategy<Value = Phantom> {
    (
        2.0f64..20.0,          // cylinder radius
        8.0f64..50.0,          // height
        0.1f64..1.0,           // cavity base
        0.7f64..1.3,           // per-axis ratios
        0.7f64..1.3,
        0.7f64..1.3,
        0.0f64..1.0,           // radial placement fraction
        0.0f64..std::f64::consts::TAU,
        -0.45f64..0.45,        // z placement fraction of height
    )
        .prop_filter_map("cavity must fit", |(r, h, base, kx, ky, kz, rho, az, zf)| {
            let cylinder = CylinderSpec::new(r, h, "test").ok()?;
            let cavity = EllipsoidCavity {
                center: vec3(rho * r * az.cos(), rho * r * az.sin(), zf * h),
                semi_axes: vec3(base * kx, base * ky, base * kz),
            };
            if cavity_contained(&cylinder, &cavity) {
                Some(Phantom { id: 0, cylinder, cavity })
            } else {
                None
            }
        })
}

fn arb_ray() -> impl Strategy<Value = Ray> {
    (
        -80.0f64..-30.0,
        -25.0f64..25.0,
        -30.0f64..30.0,
        -20.0f64..20.0,
        -20.0f64..20.0,
        -25.0f64..25.0,
    )
        .prop_map(|(ox, oy, oz, tx, ty, tz)| {
            Ray::through(vec3(ox, oy, oz), vec3(tx, ty, tz))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Material plus void chords tile the in-cylinder interval exactly: the
    /// lengths sum to the bare-cylinder chord, segments are ordered and
    /// non-overlapping, and midpoints classify consistently with `contains`.
    #[test]
    fn chords_tile_the_cylinder_interval(phantom in arb_phantom(), ray in arb_ray()) {
        let chords = ray_chords(&phantom, &ray);
        let total: f64 = chords.iter().map(Chord::length).sum();

        let bare = Phantom {
            cavity: EllipsoidCavity {
                // displaced far outside: never intersects
                center: vec3(0.0, 0.0, phantom.cylinder.height + 1e3),
                semi_axes: vec3(1e-6, 1e-6, 1e-6),
            },
            ..phantom.clone()
        };
        let cyl_total: f64 = ray_chords(&bare, &ray).iter().map(Chord::length).sum();
        prop_assert!((total - cyl_total).abs() < 1e-9, "{total} vs {cyl_total}");

        for pair in chords.windows(2) {
            prop_assert!(pair[0].t_out <= pair[1].t_in + 1e-12);
        }
        for c in chords.iter() {
            prop_assert!(c.length() >= 0.0);
            let mid = ray.at(0.5 * (c.t_in + c.t_out));
            let region = contains(&phantom, mid);
            match c.medium {
                Medium::Void => prop_assert_eq!(region, Region::Void),
                Medium::Material => prop_assert_eq!(region, Region::CylinderMaterial),
            }
        }
    }

    /// Phantom CSV round-trips bit-exactly through the 17-digit format.
    #[test]
    fn phantom_csv_round_trip(phantom in arb_phantom(), split_idx in 0usize..3) {
        let split = [Split::Train, Split::Val, Split::Test][split_idx];
        let set = PhantomSet { records: vec![PhantomRecord { phantom, split }] };
        let text = set.to_csv();
        let back = PhantomSet::from_csv(&text, std::path::Path::new("mem")).unwrap();
        prop_assert_eq!(&set, &back);
        prop_assert_eq!(text, back.to_csv());
    }

    /// XR32 containers round-trip every finite bit pattern.
    #[test]
    fn xr32_round_trip(values in proptest::collection::vec(-1e30f32..1e30, 1..64)) {
        let w = values.len();
        let raster = Raster::from_values(w, 1, values).unwrap();
        let dir = std::env::temp_dir().join("xspod_prop_xr32");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("t{w}.xr32"));
        raster.write_xr32(&path).unwrap();
        let back = Raster::read_xr32(&path).unwrap();
        for (a, b) in raster.values().iter().zip(back.values()) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    /// Compton scattering never gains energy, and the loss honors the shift
    /// formula at the sampled angle.
    #[test]
    fn compton_energy_is_dissipative(energy in 5.0f64..450.0, seed in 0u64..1000) {
        let mut rng = CounterRng::new(seed);
        let s = compton_scatter(energy, &mut rng);
        prop_assert!(s.energy_out_kev <= energy + 1e-12);
        let expect = energy / (1.0 + energy / MEC2_KEV * (1.0 - s.theta.cos()));
        prop_assert!((s.energy_out_kev - expect).abs() < 1e-10);
    }

    /// Attenuation lookups stay positive, total equals the process sum, and
    /// interpolation is monotone between bracketing nodes of a monotone table.
    #[test]
    fn mu_total_is_process_sum(energy in 10.0f64..1000.0) {
        for name in ["pmma", "aluminum", "iron"] {
            let m = Material::bundled(name).unwrap();
            let mu = m.mu(energy).unwrap();
            prop_assert!(mu.photoelectric > 0.0 && mu.compton > 0.0 && mu.rayleigh > 0.0);
            let total = mu.photoelectric + mu.compton + mu.rayleigh;
            prop_assert_eq!(mu.total(), total);
        }
    }

    /// s90 falls when the intercept rises and, below the 90% crossing, when
    /// the slope rises.
    #[test]
    fn s90_monotonicity(alpha in -9.0f64..-2.0, beta in 0.5f64..8.0, bump in 0.01f64..1.0) {
        let mk = |a: f64, b: f64| PodFit {
            link: Link::Logit,
            coefficients: vec![a, b],
            covariance: vec![0.0; 4],
            n_observations: 50,
            deviance: 1.0,
            converged: true,
        };
        let base = s90(&mk(alpha, beta), None).unwrap();
        prop_assert!(s90(&mk(alpha + bump, beta), None).unwrap() < base);
        if alpha < Link::Logit.g90() {
            prop_assert!(s90(&mk(alpha, beta + bump), None).unwrap() < base);
        }
    }
}
