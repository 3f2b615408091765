//! Photon-by-photon Monte-Carlo transport through the analytic phantom with
//! per-pixel tallies separated by scatter order.
//!
//! Every photon owns a private random stream derived from
//! `(seed, photon index)`, and workers tally into private integer grids that
//! merge by addition, so the result is bitwise identical for a fixed
//! `(seed, n_photons)` no matter how many workers run or how the index range
//! is partitioned.
//!
//! Emission is importance-sampled: photons leave the source aimed at a
//! uniformly drawn point on the detector rectangle, which makes every
//! primary photon useful and cancels against the flatfield in preprocessing.
//! The detector is a perfect, infinitely thin plane: every photon crossing
//! it from the source side is counted at any energy; photons heading away
//! from it escape.

use crate::error::{Error, Result};
use crate::phantom::{ray_chords, Medium, Phantom, Ray};
use crate::physics::{
    choose_interaction_mu, compton_scatter, rayleigh_scatter, InteractionKind, Material, Spectrum,
    TRANSPORT_CUTOFF_KEV,
};
use crate::projector::{preprocess, AcquisitionGeometry};
use crate::raster::Raster;
use crate::rng::CounterRng;
use crate::vec3::Vec3;

/// Scatter orders tallied individually when per-order tallies are enabled;
/// higher orders land in the last (overflow) bucket.
pub const PER_ORDER_BUCKETS: usize = 4;

#[derive(Clone, Copy, Debug)]
pub struct PhotonState {
    pub position: Vec3,
    pub direction: Vec3,
    pub energy_kev: f64,
    pub scatter_count: u32,
}

/// Terminal outcome of one photon history.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Fate {
    Detected { row: usize, col: usize, scatter_count: u32 },
    Absorbed,
    Escaped,
}

/// Integer count grids accumulated by the transport loop.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Tally {
    width: usize,
    height: usize,
    primary: Vec<u64>,
    scatter: Vec<u64>,
    per_order: Option<Vec<Vec<u64>>>,
    pub absorbed: u64,
    pub escaped: u64,
    pub n_photons: u64,
}

impl Tally {
    pub fn new(width: usize, height: usize, keep_orders: bool) -> Self {
        Tally {
            width,
            height,
            primary: vec![0; width * height],
            scatter: vec![0; width * height],
            per_order: keep_orders.then(|| vec![vec![0; width * height]; PER_ORDER_BUCKETS]),
            absorbed: 0,
            escaped: 0,
            n_photons: 0,
        }
    }

    #[inline]
    pub fn record(&mut self, fate: Fate) {
        self.n_photons += 1;
        match fate {
            Fate::Detected { row, col, scatter_count } => {
                let i = row * self.width + col;
                if scatter_count == 0 {
                    self.primary[i] += 1;
                } else {
                    self.scatter[i] += 1;
                    if let Some(orders) = &mut self.per_order {
                        let bucket = (scatter_count as usize - 1).min(PER_ORDER_BUCKETS - 1);
                        orders[bucket][i] += 1;
                    }
                }
            }
            Fate::Absorbed => self.absorbed += 1,
            Fate::Escaped => self.escaped += 1,
        }
    }

    /// Merge by addition; commutative and associative, so any partition of
    /// the photon range reproduces the same totals.
    pub fn merge(&mut self, other: &Tally) {
        assert_eq!((self.width, self.height), (other.width, other.height));
        for (a, b) in self.primary.iter_mut().zip(&other.primary) {
            *a += b;
        }
        for (a, b) in self.scatter.iter_mut().zip(&other.scatter) {
            *a += b;
        }
        match (&mut self.per_order, &other.per_order) {
            (Some(mine), Some(theirs)) => {
                for (m, t) in mine.iter_mut().zip(theirs) {
                    for (a, b) in m.iter_mut().zip(t) {
                        *a += b;
                    }
                }
            }
            (None, None) => {}
            _ => panic!("cannot merge tallies with mismatched per-order setting"),
        }
        self.absorbed += other.absorbed;
        self.escaped += other.escaped;
        self.n_photons += other.n_photons;
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn primary_at(&self, row: usize, col: usize) -> u64 {
        self.primary[row * self.width + col]
    }

    #[inline]
    pub fn scatter_at(&self, row: usize, col: usize) -> u64 {
        self.scatter[row * self.width + col]
    }

    pub fn primary_counts(&self) -> &[u64] {
        &self.primary
    }

    pub fn scatter_counts(&self) -> &[u64] {
        &self.scatter
    }

    pub fn per_order(&self) -> Option<&[Vec<u64>]> {
        self.per_order.as_deref()
    }

    pub fn primary_total(&self) -> u64 {
        self.primary.iter().sum()
    }

    pub fn scatter_total(&self) -> u64 {
        self.scatter.iter().sum()
    }

    /// Detected + absorbed + escaped; equals `n_photons` by construction.
    pub fn accounted(&self) -> u64 {
        self.primary_total() + self.scatter_total() + self.absorbed + self.escaped
    }

    pub fn primary_raster(&self) -> Raster {
        counts_to_raster(&self.primary, self.width, self.height)
    }

    pub fn scatter_raster(&self) -> Raster {
        counts_to_raster(&self.scatter, self.width, self.height)
    }

    pub fn combined_raster(&self) -> Raster {
        let combined: Vec<u64> =
            self.primary.iter().zip(&self.scatter).map(|(p, s)| p + s).collect();
        counts_to_raster(&combined, self.width, self.height)
    }
}

fn counts_to_raster(counts: &[u64], width: usize, height: usize) -> Raster {
    Raster::from_values(width, height, counts.iter().map(|&c| c as f32).collect()).unwrap()
}

/// Everything `simulate` produces for one phantom.
#[derive(Clone, Debug)]
pub struct ProjectionSet {
    pub tally: Tally,
    pub flatfield: Raster,
    pub with_scatter_log: Raster,
    pub primary_only_log: Raster,
    pub spr: Raster,
}

#[derive(Clone, Copy, Debug)]
pub struct SimulateOptions {
    pub n_photons: u64,
    pub seed: u64,
    pub workers: usize,
    pub keep_orders: bool,
}

impl SimulateOptions {
    pub fn new(n_photons: u64, seed: u64, workers: usize) -> Self {
        SimulateOptions { n_photons, seed, workers, keep_orders: false }
    }
}

/// Transports every photon and assembles the projection set: primary and
/// scatter tallies, the exact expected flatfield, both preprocessed log
/// images, and the scatter-to-primary map.
pub fn simulate(
    phantom: &Phantom,
    geometry: &AcquisitionGeometry,
    spectrum: &Spectrum,
    material: &Material,
    opts: SimulateOptions,
) -> Result<ProjectionSet> {
    if opts.n_photons == 0 {
        return Err(Error::validation("photon budget must be >= 1"));
    }
    if opts.workers == 0 {
        return Err(Error::validation("worker count must be >= 1"));
    }
    material.check_covers(spectrum)?;
    let (table_lo, _) = material.energy_range();
    if table_lo > TRANSPORT_CUTOFF_KEV {
        return Err(Error::validation(format!(
            "material table must reach the {TRANSPORT_CUTOFF_KEV} keV transport cutoff, starts at {table_lo}"
        )));
    }
    if phantom.cylinder.radius >= geometry.sod
        || phantom.cylinder.radius >= geometry.detector_plane_x()
    {
        return Err(Error::validation(
            "cylinder radius must leave the source and detector outside the object",
        ));
    }

    let tally = run_transport(phantom, geometry, spectrum, material, &opts)?;
    let flatfield = expected_flatfield(geometry, opts.n_photons);
    let primary = tally.primary_raster();
    let combined = tally.combined_raster();
    let with_scatter_log = preprocess(&combined, &flatfield)?;
    let primary_only_log = preprocess(&primary, &flatfield)?;
    let spr = spr_map(&tally);
    Ok(ProjectionSet { tally, flatfield, with_scatter_log, primary_only_log, spr })
}

fn run_transport(
    phantom: &Phantom,
    geometry: &AcquisitionGeometry,
    spectrum: &Spectrum,
    material: &Material,
    opts: &SimulateOptions,
) -> Result<Tally> {
    let workers = opts.workers.min(opts.n_photons as usize).max(1);
    let chunk = opts.n_photons.div_ceil(workers as u64);
    let mut total = Tally::new(geometry.n_cols, geometry.n_rows, opts.keep_orders);
    let partials: Vec<Result<Tally>> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers as u64)
            .map(|w| {
                let start = w * chunk;
                let end = ((w + 1) * chunk).min(opts.n_photons);
                scope.spawn(move || {
                    let mut local = Tally::new(geometry.n_cols, geometry.n_rows, opts.keep_orders);
                    for index in start..end {
                        let fate =
                            trace_photon(index, opts.seed, phantom, geometry, spectrum, material)?;
                        local.record(fate);
                    }
                    Ok(local)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    for partial in partials {
        total.merge(&partial?);
    }
    Ok(total)
}

/// One complete photon history from its per-index stream: energy draw, then
/// the emission point on the detector rectangle, then transport.
fn trace_photon(
    index: u64,
    seed: u64,
    phantom: &Phantom,
    geometry: &AcquisitionGeometry,
    spectrum: &Spectrum,
    material: &Material,
) -> Result<Fate> {
    let mut rng = CounterRng::from_stream(seed, index);
    let energy = spectrum.sample(rng.next_f64());
    let source = geometry.source_position();
    let y = (rng.next_f64() - 0.5) * geometry.det_width;
    let z = (rng.next_f64() - 0.5) * geometry.det_height;
    let target = crate::vec3::vec3(geometry.detector_plane_x(), y, z);
    let state = PhotonState {
        position: source,
        direction: (target - source).normalized(),
        energy_kev: energy,
        scatter_count: 0,
    };
    transport_photon(state, phantom, geometry, material, &mut rng)
}

/// Analog transport: repeatedly draws an optical depth, walks the chord
/// sequence ahead of the photon, and either lets it leave the object (flying
/// on to the detector plane) or interacts. Photoelectric absorbs; Compton
/// and Rayleigh deflect and increment the scatter order; energies below the
/// transport cutoff are absorbed on the spot.
pub fn transport_photon(
    mut state: PhotonState,
    phantom: &Phantom,
    geometry: &AcquisitionGeometry,
    material: &Material,
    rng: &mut CounterRng,
) -> Result<Fate> {
    let detector_x = geometry.detector_plane_x();
    loop {
        if state.energy_kev < TRANSPORT_CUTOFF_KEV {
            return Ok(Fate::Absorbed);
        }
        let ray = Ray { origin: state.position, direction: state.direction };
        let chords = ray_chords(phantom, &ray);
        let mu = material.mu(state.energy_kev)?;
        let mu_total = mu.total();

        let mut optical = 0.0;
        for c in chords.iter() {
            if c.medium == Medium::Material {
                optical += mu_total * c.length();
            }
        }

        let tau = rng.exponential();
        if tau >= optical {
            // leaves the object; fly to the detector plane
            if state.direction.x <= 0.0 {
                return Ok(Fate::Escaped);
            }
            let t = (detector_x - state.position.x) / state.direction.x;
            let hit = ray.at(t);
            return Ok(match geometry.pixel_of(hit.y, hit.z) {
                Some((row, col)) => {
                    Fate::Detected { row, col, scatter_count: state.scatter_count }
                }
                None => Fate::Escaped,
            });
        }

        // locate the interaction point inside the chord sequence
        let mut acc = 0.0;
        let mut t_int = None;
        for c in chords.iter() {
            if c.medium != Medium::Material {
                continue;
            }
            let depth = mu_total * c.length();
            if acc + depth >= tau {
                t_int = Some(c.t_in + (tau - acc) / mu_total);
                break;
            }
            acc += depth;
        }
        // tau < optical guarantees a containing segment
        let t_int = t_int.expect("interaction depth inside total optical thickness");
        state.position = ray.at(t_int);

        match choose_interaction_mu(&mu, rng.next_f64()) {
            InteractionKind::Photoelectric => return Ok(Fate::Absorbed),
            InteractionKind::Compton => {
                let s = compton_scatter(state.energy_kev, rng);
                state.direction = state.direction.deflected(s.theta, s.phi);
                state.energy_kev = s.energy_out_kev;
                state.scatter_count += 1;
            }
            InteractionKind::Rayleigh => {
                let (theta, phi) = rayleigh_scatter(rng);
                state.direction = state.direction.deflected(theta, phi);
                state.scatter_count += 1;
            }
        }
    }
}

/// Exact expected flatfield of the uniform-on-detector emission scheme:
/// every pixel receives `n_photons * pixel_area / detector_area` on average.
pub fn expected_flatfield(geometry: &AcquisitionGeometry, n_photons: u64) -> Raster {
    let per_pixel = n_photons as f64 * geometry.pixel_area() / geometry.detector_area();
    Raster::new(geometry.n_cols, geometry.n_rows, per_pixel as f32)
}

/// Per-pixel S/P. Pixels with no primary counts carry a NaN sentinel and are
/// excluded from every downstream mean (with the exclusion count reported by
/// [`defect_spr_detailed`]).
pub fn spr_map(tally: &Tally) -> Raster {
    let mut out = Raster::new(tally.width(), tally.height(), 0.0);
    for i in 0..tally.primary_counts().len() {
        let p = tally.primary_counts()[i];
        let s = tally.scatter_counts()[i];
        out.values_mut()[i] = if p == 0 { f32::NAN } else { (s as f64 / p as f64) as f32 };
    }
    out
}

/// The paired training images: `with` = preprocess(P+S, I0),
/// `without` = preprocess(P, I0).
pub fn make_dataset_pair(set: &ProjectionSet) -> (Raster, Raster) {
    (set.with_scatter_log.clone(), set.primary_only_log.clone())
}

#[derive(Clone, Copy, Debug)]
pub struct MaskedSprStats {
    pub mean: f64,
    pub n_valid: usize,
    pub n_excluded: usize,
}

/// Mean over mask pixels of an SPR raster with valid (non-sentinel) values;
/// usable directly on rasters read back from disk.
pub fn masked_spr_stats(spr: &Raster, mask: &Raster) -> Result<MaskedSprStats> {
    if !mask.same_shape(spr) {
        return Err(Error::DimensionMismatch(format!(
            "mask {}x{} vs spr {}x{}",
            mask.width(),
            mask.height(),
            spr.width(),
            spr.height()
        )));
    }
    if mask.count_nonzero() == 0 {
        return Err(Error::EmptyMask("ground-truth mask has no pixels".into()));
    }
    let mut sum = 0.0;
    let mut n_valid = 0usize;
    let mut n_excluded = 0usize;
    for (m, v) in mask.values().iter().zip(spr.values()) {
        if *m != 0.0 {
            if v.is_finite() {
                sum += *v as f64;
                n_valid += 1;
            } else {
                n_excluded += 1;
            }
        }
    }
    if n_valid == 0 {
        return Err(Error::EmptyMask(format!(
            "no primary counts under any of the {n_excluded} mask pixels"
        )));
    }
    Ok(MaskedSprStats { mean: sum / n_valid as f64, n_valid, n_excluded })
}

/// Mean SPR over mask pixels with valid (non-sentinel) values.
pub fn defect_spr_detailed(set: &ProjectionSet, mask: &Raster) -> Result<MaskedSprStats> {
    masked_spr_stats(&set.spr, mask)
}

pub fn defect_spr(set: &ProjectionSet, mask: &Raster) -> Result<f64> {
    Ok(defect_spr_detailed(set, mask)?.mean)
}

/// Mean attenuation (with-scatter log image) over the mask pixels.
pub fn attenuation_at(set: &ProjectionSet, mask: &Raster) -> Result<f64> {
    if !mask.same_shape(&set.with_scatter_log) {
        return Err(Error::DimensionMismatch("mask vs log image".into()));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for (m, v) in mask.values().iter().zip(set.with_scatter_log.values()) {
        if *m != 0.0 {
            sum += *v as f64;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptyMask("mask has no pixels".into()));
    }
    Ok(sum / n as f64)
}
