//! Analytic phantom geometry: a homogeneous finite cylinder containing one
//! axis-aligned ellipsoidal void, plus seeded random generation of phantom
//! populations and the exact ray/phantom chord decomposition the projector
//! and transport engine are built on.
//!
//! Frame convention: the cylinder's rotation axis is the z axis, the cylinder
//! is centered at the origin with z in [-h/2, h/2]. All lengths are mm.

use std::fmt;
use std::path::Path;

use crate::error::{Error, Result};
use crate::projector::AcquisitionGeometry;
use crate::rng::{derive_seed, CounterRng};
use crate::vec3::{vec3, Vec3};

/// Attempt cap for the cavity placement rejection loop.
pub const MAX_CAVITY_ATTEMPTS: u32 = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CylinderSpec {
    pub radius: f64,
    pub height: f64,
    pub material: String,
}

impl CylinderSpec {
    pub fn new(radius: f64, height: f64, material: impl Into<String>) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::validation(format!("cylinder radius {radius} not in (0, inf)")));
        }
        if !(height > 0.0 && height.is_finite()) {
            return Err(Error::validation(format!("cylinder height {height} not in (0, inf)")));
        }
        let material = material.into();
        if material.is_empty() || material.contains(',') {
            return Err(Error::validation("material id must be non-empty and comma-free"));
        }
        Ok(CylinderSpec { radius, height, material })
    }
}

/// Axis-aligned ellipsoidal void. `center` is (x, y lateral; z along the
/// cylinder axis); `semi_axes` are the (a, b, c) half-extents.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EllipsoidCavity {
    pub center: Vec3,
    pub semi_axes: Vec3,
}

impl EllipsoidCavity {
    pub fn new(center: Vec3, semi_axes: Vec3) -> Result<Self> {
        for s in [semi_axes.x, semi_axes.y, semi_axes.z] {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::validation(format!("semi-axis {s} not in (0, inf)")));
            }
        }
        Ok(EllipsoidCavity { center, semi_axes })
    }

    /// Quadratic form value; < 1 inside, 1 on the surface.
    #[inline]
    pub fn quadratic_form(&self, p: Vec3) -> f64 {
        let dx = (p.x - self.center.x) / self.semi_axes.x;
        let dy = (p.y - self.center.y) / self.semi_axes.y;
        let dz = (p.z - self.center.z) / self.semi_axes.z;
        dx * dx + dy * dy + dz * dz
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes.x.max(self.semi_axes.y).max(self.semi_axes.z)
    }

    /// Chord of `ray` inside the ellipsoid as a parameter interval, if any.
    pub fn ray_interval(&self, ray: &Ray) -> Option<(f64, f64)> {
        let s = self.semi_axes;
        let o = vec3(
            (ray.origin.x - self.center.x) / s.x,
            (ray.origin.y - self.center.y) / s.y,
            (ray.origin.z - self.center.z) / s.z,
        );
        let d = vec3(ray.direction.x / s.x, ray.direction.y / s.y, ray.direction.z / s.z);
        let a = d.norm2();
        let b = 2.0 * o.dot(d);
        let c = o.norm2() - 1.0;
        let disc = b * b - 4.0 * a * c;
        // written so a NaN discriminant (degenerate near-zero semi-axes
        // overflow the scaled coordinates) counts as a miss
        if !(disc > 0.0 && disc.is_finite() && a.is_finite()) {
            return None;
        }
        let sq = disc.sqrt();
        Some(((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Phantom {
    pub id: u64,
    pub cylinder: CylinderSpec,
    pub cavity: EllipsoidCavity,
}

impl Phantom {
    pub fn new(id: u64, cylinder: CylinderSpec, cavity: EllipsoidCavity) -> Result<Self> {
        if !cavity_contained(&cylinder, &cavity) {
            return Err(Error::validation(format!(
                "cavity not strictly contained in cylinder (phantom {id})"
            )));
        }
        Ok(Phantom { id, cylinder, cavity })
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
}

impl Ray {
    /// Direction must be unit to 1e-12; chord lengths are parameter lengths.
    pub fn new(origin: Vec3, direction: Vec3) -> Result<Self> {
        if (direction.norm() - 1.0).abs() > 1e-12 {
            return Err(Error::validation(format!(
                "ray direction norm {} deviates from 1 by more than 1e-12",
                direction.norm()
            )));
        }
        Ok(Ray { origin, direction })
    }

    pub fn through(origin: Vec3, target: Vec3) -> Ray {
        Ray { origin, direction: (target - origin).normalized() }
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// What a chord segment traverses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Medium {
    Material,
    Void,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chord {
    pub medium: Medium,
    pub t_in: f64,
    pub t_out: f64,
}

impl Chord {
    #[inline]
    pub fn length(&self) -> f64 {
        self.t_out - self.t_in
    }
}

/// Chord decomposition of one ray: at most material/void/material, so a
/// fixed-capacity list keeps the transport hot path allocation-free.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChordList {
    items: [Chord; 3],
    len: u8,
}

impl ChordList {
    const EMPTY_CHORD: Chord = Chord { medium: Medium::Material, t_in: 0.0, t_out: 0.0 };

    fn new() -> Self {
        ChordList { items: [Self::EMPTY_CHORD; 3], len: 0 }
    }

    fn push(&mut self, c: Chord) {
        self.items[self.len as usize] = c;
        self.len += 1;
    }

    pub fn as_slice(&self) -> &[Chord] {
        &self.items[..self.len as usize]
    }

    pub fn len(&self) -> usize {
        self.len as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Chord> {
        self.as_slice().iter()
    }

    pub fn to_vec(&self) -> Vec<Chord> {
        self.as_slice().to_vec()
    }
}

impl Default for Chord {
    fn default() -> Self {
        ChordList::EMPTY_CHORD
    }
}

impl std::ops::Deref for ChordList {
    type Target = [Chord];
    fn deref(&self) -> &[Chord] {
        self.as_slice()
    }
}

impl<'a> IntoIterator for &'a ChordList {
    type Item = &'a Chord;
    type IntoIter = std::slice::Iter<'a, Chord>;
    fn into_iter(self) -> Self::IntoIter {
        self.iter()
    }
}

/// Point classification for [`contains`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Region {
    Exterior,
    CylinderMaterial,
    Void,
}

/// Ordered segments of `ray` ahead of its origin (t >= 0) inside the phantom,
/// split into material and void. A miss returns an empty list. Segment
/// endpoints share the same parameter values, so material + void lengths sum
/// to the total in-cylinder chord exactly up to rounding.
pub fn ray_chords(phantom: &Phantom, ray: &Ray) -> ChordList {
    let cyl = &phantom.cylinder;
    let empty = ChordList::new();

    // infinite cylinder x^2 + y^2 = R^2
    let (ox, oy) = (ray.origin.x, ray.origin.y);
    let (dx, dy) = (ray.direction.x, ray.direction.y);
    let a = dx * dx + dy * dy;
    let radial = if a < 1e-28 {
        if ox * ox + oy * oy < cyl.radius * cyl.radius {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            return empty;
        }
    } else {
        let b = 2.0 * (ox * dx + oy * dy);
        let c = ox * ox + oy * oy - cyl.radius * cyl.radius;
        let disc = b * b - 4.0 * a * c;
        if disc <= 0.0 {
            return empty;
        }
        let sq = disc.sqrt();
        ((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a))
    };

    // z slab |z| <= h/2
    let half_h = 0.5 * cyl.height;
    let slab = if ray.direction.z.abs() < 1e-300 {
        if ray.origin.z.abs() <= half_h {
            (f64::NEG_INFINITY, f64::INFINITY)
        } else {
            return empty;
        }
    } else {
        let t0 = (-half_h - ray.origin.z) / ray.direction.z;
        let t1 = (half_h - ray.origin.z) / ray.direction.z;
        (t0.min(t1), t0.max(t1))
    };

    let enter = radial.0.max(slab.0).max(0.0);
    let exit = radial.1.min(slab.1);
    if exit <= enter {
        return empty;
    }

    let mut chords = ChordList::new();
    match phantom.cavity.ray_interval(ray) {
        Some((e0, e1)) => {
            let v0 = e0.max(enter);
            let v1 = e1.min(exit);
            if v1 <= v0 {
                chords.push(Chord { medium: Medium::Material, t_in: enter, t_out: exit });
            } else {
                if v0 > enter {
                    chords.push(Chord { medium: Medium::Material, t_in: enter, t_out: v0 });
                }
                chords.push(Chord { medium: Medium::Void, t_in: v0, t_out: v1 });
                if exit > v1 {
                    chords.push(Chord { medium: Medium::Material, t_in: v1, t_out: exit });
                }
            }
        }
        None => chords.push(Chord { medium: Medium::Material, t_in: enter, t_out: exit }),
    }
    chords
}

/// Sum of material chord lengths of `ray` (what the primary beam attenuates
/// through; the void contributes nothing).
pub fn material_path_length(phantom: &Phantom, ray: &Ray) -> f64 {
    ray_chords(phantom, ray)
        .iter()
        .filter(|c| c.medium == Medium::Material)
        .map(Chord::length)
        .sum()
}

/// Cavity chord length of `ray`, zero when it misses the cavity.
pub fn cavity_chord(phantom: &Phantom, ray: &Ray) -> f64 {
    ray_chords(phantom, ray)
        .iter()
        .filter(|c| c.medium == Medium::Void)
        .map(Chord::length)
        .sum()
}

/// Scalar defect size: the cavity chord seen along the ray from the source
/// through the cavity center. Up to cone-beam obliquity this is the largest
/// intersection between the defect and any primary trajectory; a brute-force
/// per-pixel scan agrees within 1% at this acquisition geometry.
pub fn defect_size(phantom: &Phantom, geometry: &AcquisitionGeometry) -> f64 {
    let ray = Ray::through(geometry.source_position(), phantom.cavity.center);
    match phantom.cavity.ray_interval(&ray) {
        Some((t0, t1)) => (t1 - t0).max(0.0),
        None => 0.0,
    }
}

/// Classifies a point. Boundary points belong to the enclosing region: the
/// cavity surface counts as cylinder material, the cylinder surface as
/// exterior, which keeps the map total.
pub fn contains(phantom: &Phantom, point: Vec3) -> Region {
    let cyl = &phantom.cylinder;
    let r2 = point.x * point.x + point.y * point.y;
    let inside_cyl = r2 < cyl.radius * cyl.radius && point.z.abs() < 0.5 * cyl.height;
    if !inside_cyl {
        return Region::Exterior;
    }
    if phantom.cavity.quadratic_form(point) < 1.0 {
        Region::Void
    } else {
        Region::CylinderMaterial
    }
}

/// Strict containment of the cavity inside the finite cylinder.
///
/// The z test is closed-form. Radially, the cavity's lateral silhouette is
/// the ellipse (cx + a cos u, cy + b sin u); its farthest point from the axis
/// is found by dense sampling plus golden-section refinement, which is robust
/// for this smooth single-frequency objective.
pub fn cavity_contained(cylinder: &CylinderSpec, cavity: &EllipsoidCavity) -> bool {
    let half_h = 0.5 * cylinder.height;
    if cavity.center.z.abs() + cavity.semi_axes.z >= half_h {
        return false;
    }
    let (cx, cy) = (cavity.center.x, cavity.center.y);
    let (a, b) = (cavity.semi_axes.x, cavity.semi_axes.y);
    let dist = (cx * cx + cy * cy).sqrt();
    if dist + a.max(b) < cylinder.radius {
        return true; // conservative quick accept
    }
    let r2 = |u: f64| {
        let x = cx + a * u.cos();
        let y = cy + b * u.sin();
        x * x + y * y
    };
    let n = 256;
    let mut best_i = 0;
    let mut best = f64::MIN;
    for i in 0..n {
        let u = i as f64 / n as f64 * std::f64::consts::TAU;
        let v = r2(u);
        if v > best {
            best = v;
            best_i = i;
        }
    }
    let step = std::f64::consts::TAU / n as f64;
    let mut lo = (best_i as f64 - 1.0) * step;
    let mut hi = (best_i as f64 + 1.0) * step;
    let inv_phi = 0.618_033_988_749_894_9;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (r2(x1), r2(x2));
    for _ in 0..90 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = r2(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = r2(x1);
        }
    }
    let max_r2 = f1.max(f2).max(best);
    max_r2 < cylinder.radius * cylinder.radius
}

/// Uniform parameter ranges for phantom generation; each entry is (min, max).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomParamRanges {
    pub radius_range: (f64, f64),
    pub height_range: (f64, f64),
    pub cavity_base_radius_range: (f64, f64),
    pub axis_ratio_range: (f64, f64),
}

impl PhantomParamRanges {
    /// Cylinder radius 1-25 mm, height 20-55 mm, cavity base radius
    /// 0.1-1 mm deformed by per-axis ratios 0.7-1.3.
    pub fn defaults() -> Self {
        PhantomParamRanges {
            radius_range: (1.0, 25.0),
            height_range: (20.0, 55.0),
            cavity_base_radius_range: (0.1, 1.0),
            axis_ratio_range: (0.7, 1.3),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, (lo, hi), positive) in [
            ("radius_range", self.radius_range, true),
            ("height_range", self.height_range, true),
            ("cavity_base_radius_range", self.cavity_base_radius_range, true),
            ("axis_ratio_range", self.axis_ratio_range, true),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::validation(format!("{name}: need min <= max, got ({lo}, {hi})")));
            }
            if positive && lo <= 0.0 {
                return Err(Error::validation(format!("{name}: min must be > 0, got {lo}")));
            }
        }
        Ok(())
    }
}

/// Generates one phantom as a pure function of `(seed, ranges, material)`.
///
/// Cylinder radius and height are drawn first and never rejected, so their
/// marginals stay exactly uniform. Each cavity attempt draws base radius,
/// three axis ratios, then center (azimuth, radial distance, z) and is
/// rejected until strict containment holds; size and position are re-drawn
/// together so a small cylinder with an unluckily large cavity draw cannot
/// wedge the loop.
pub fn generate_phantom(
    seed: u64,
    ranges: &PhantomParamRanges,
    material: &str,
) -> Result<Phantom> {
    generate_phantom_with_id(seed, 0, ranges, material)
}

pub fn generate_phantom_with_id(
    seed: u64,
    id: u64,
    ranges: &PhantomParamRanges,
    material: &str,
) -> Result<Phantom> {
    ranges.validate()?;
    let mut rng = CounterRng::new(seed);
    let radius = rng.uniform(ranges.radius_range.0, ranges.radius_range.1);
    let height = rng.uniform(ranges.height_range.0, ranges.height_range.1);
    let cylinder = CylinderSpec::new(radius, height, material)?;

    for _ in 0..MAX_CAVITY_ATTEMPTS {
        let base =
            rng.uniform(ranges.cavity_base_radius_range.0, ranges.cavity_base_radius_range.1);
        let rx = rng.uniform(ranges.axis_ratio_range.0, ranges.axis_ratio_range.1);
        let ry = rng.uniform(ranges.axis_ratio_range.0, ranges.axis_ratio_range.1);
        let rz = rng.uniform(ranges.axis_ratio_range.0, ranges.axis_ratio_range.1);
        let azimuth = rng.uniform(0.0, std::f64::consts::TAU);
        let rho = rng.uniform(0.0, radius);
        let z = rng.uniform(-0.5 * height, 0.5 * height);
        let cavity = EllipsoidCavity {
            center: vec3(rho * azimuth.cos(), rho * azimuth.sin(), z),
            semi_axes: vec3(base * rx, base * ry, base * rz),
        };
        if cavity_contained(&cylinder, &cavity) {
            return Ok(Phantom { id, cylinder, cavity });
        }
    }
    Err(Error::GenerationFailure { attempts: MAX_CAVITY_ATTEMPTS })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::validation(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhantomRecord {
    pub phantom: Phantom,
    pub split: Split,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhantomSet {
    pub records: Vec<PhantomRecord>,
}

/// Draws `n_train + n_val + n_test` phantoms with disjoint ids (train first,
/// then val, then test) from independent per-split seed streams, so growing
/// one split never reshuffles another.
pub fn generate_set(
    seed: u64,
    n_train: usize,
    n_val: usize,
    n_test: usize,
    ranges: &PhantomParamRanges,
    material: &str,
) -> Result<PhantomSet> {
    let mut records = Vec::with_capacity(n_train + n_val + n_test);
    let mut id = 0u64;
    for (split, count, salt) in [
        (Split::Train, n_train, 1u64),
        (Split::Val, n_val, 2u64),
        (Split::Test, n_test, 3u64),
    ] {
        let split_seed = derive_seed(seed, salt);
        for i in 0..count {
            let phantom_seed = derive_seed(split_seed, i as u64);
            let phantom = generate_phantom_with_id(phantom_seed, id, ranges, material)?;
            records.push(PhantomRecord { phantom, split });
            id += 1;
        }
    }
    Ok(PhantomSet { records })
}

impl PhantomSet {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &PhantomRecord> {
        self.records.iter().filter(move |r| r.split == split)
    }

    pub fn get(&self, id: u64) -> Option<&PhantomRecord> {
        self.records.iter().find(|r| r.phantom.id == id)
    }

    /// Line-oriented CSV, one row per phantom:
    /// `id,radius_mm,height_mm,cx,cy,cz,a,b,c,material,split`.
    /// Reals carry 17 significant digits so the round trip is bit exact.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,radius_mm,height_mm,cx,cy,cz,a,b,c,material,split\n");
        for r in &self.records {
            let p = &r.phantom;
            out.push_str(&format!(
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{},{}\n",
                p.id,
                p.cylinder.radius,
                p.cylinder.height,
                p.cavity.center.x,
                p.cavity.center.y,
                p.cavity.center.z,
                p.cavity.semi_axes.x,
                p.cavity.semi_axes.y,
                p.cavity.semi_axes.z,
                p.cylinder.material,
                r.split
            ));
        }
        out
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut records = Vec::new();
        let mut seen_header = false;
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !seen_header && line.starts_with("id,") {
                seen_header = true;
                continue;
            }
            let parse_err = |what: &str| Error::Parse {
                path: origin.to_path_buf(),
                line: i + 1,
                what: what.to_string(),
            };
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 11 {
                return Err(parse_err(&format!("expected 11 fields, got {}", fields.len())));
            }
            let id: u64 = fields[0].parse().map_err(|_| parse_err("bad id"))?;
            let mut nums = [0.0f64; 8];
            for (j, n) in nums.iter_mut().enumerate() {
                *n = fields[j + 1]
                    .parse()
                    .map_err(|_| parse_err(&format!("bad real in field {}", j + 1)))?;
            }
            let material = fields[9].to_string();
            let split: Split = fields[10].parse()?;
            let cylinder = CylinderSpec::new(nums[0], nums[1], material)?;
            let cavity = EllipsoidCavity::new(
                vec3(nums[2], nums[3], nums[4]),
                vec3(nums[5], nums[6], nums[7]),
            )?;
            let phantom = Phantom::new(id, cylinder, cavity)?;
            records.push(PhantomRecord { phantom, split });
        }
        Ok(PhantomSet { records })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv(&text, path)
    }
}
