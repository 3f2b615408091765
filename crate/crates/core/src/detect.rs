//! Baseline defect segmentation and F1 scoring.
//!
//! The baseline detector is deliberately classical: per detector row it fits
//! a robust polynomial background to the in-silhouette attenuation profile,
//! flags pixels whose positive residual (a void lowers attenuation) exceeds a
//! noise multiple estimated from the median absolute deviation, and drops
//! connected components smaller than a pixel floor. It has no training phase,
//! which is what makes it usable on both dataset variants of the same
//! projection. Externally produced masks (e.g. from a learned segmenter) can
//! be imported instead and flow through the same scoring path.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::montecarlo::{defect_spr_detailed, ProjectionSet};
use crate::phantom::{defect_size, Phantom};
use crate::projector::AcquisitionGeometry;
use crate::raster::Raster;

/// Attenuation floor separating object silhouette from air pixels.
pub const SILHOUETTE_FLOOR: f64 = 0.05;
/// Cap on the silhouette-edge margin excluded from the background fit; the
/// profile slope there dominates any polynomial. Narrow silhouettes use a
/// proportional margin so tiny objects keep enough fit span.
pub const EDGE_MARGIN_PX: usize = 3;

fn edge_margin(span: usize) -> usize {
    (span / 10).clamp(1, EDGE_MARGIN_PX)
}
/// MAD-to-sigma factor for Gaussian noise.
const MAD_SIGMA: f64 = 1.482_602_218_505_602;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectorParams {
    /// Per-row background polynomial degree, 0 to 6.
    pub background_degree: usize,
    /// Residual threshold in estimated noise sigmas.
    pub noise_k: f64,
    /// Minimum connected-component size kept in the mask.
    pub min_component_px: usize,
}

impl Default for DetectorParams {
    fn default() -> Self {
        DetectorParams { background_degree: 4, noise_k: 4.0, min_component_px: 4 }
    }
}

impl DetectorParams {
    pub fn validate(&self) -> Result<()> {
        if self.background_degree > 6 {
            return Err(Error::validation("background_degree must be 0..=6"));
        }
        if !(self.noise_k > 0.0) {
            return Err(Error::validation("noise_k must be > 0"));
        }
        if self.min_component_px == 0 {
            return Err(Error::validation("min_component_px must be >= 1"));
        }
        Ok(())
    }

    /// `key = value` parameter file with the three detector knobs.
    pub fn load(path: &Path) -> Result<Self> {
        let side = crate::raster::Sidecar::read(path)?;
        let mut p = DetectorParams::default();
        for (key, target) in [("background_degree", 0usize), ("min_component_px", 1)] {
            if let Some(v) = side.get(key) {
                let parsed: usize = v
                    .parse()
                    .map_err(|_| Error::validation(format!("bad {key} `{v}` in {}", path.display())))?;
                match target {
                    0 => p.background_degree = parsed,
                    _ => p.min_component_px = parsed,
                }
            }
        }
        if let Some(v) = side.get("noise_k") {
            p.noise_k = v
                .parse()
                .map_err(|_| Error::validation(format!("bad noise_k `{v}` in {}", path.display())))?;
        }
        p.validate()?;
        Ok(p)
    }
}

/// Per-phantom detection outcome consumed by the POD fits.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DetectionRecord {
    pub phantom_id: u64,
    pub defect_size_mm: f64,
    /// Mean SPR under the ground-truth mask; NaN when no mask pixel had
    /// primary counts (thick objects at small budgets).
    pub defect_spr: f64,
    pub f1: f64,
    /// Set by `pod::binarize`; None until then.
    pub success: Option<bool>,
}

/// Segments one attenuation image. Deterministic: no internal randomness.
///
/// Two passes: every row's in-silhouette profile gets a robust polynomial
/// background (iterated one-sided trimming, since a void only ever lowers
/// attenuation), then the noise scale is estimated once from the MAD of all
/// background residuals pooled across the image — a defect occupies a tiny
/// fraction of the silhouette, so the pooled estimate is immune to it — and
/// pixels whose positive residual exceeds `noise_k` times that scale are
/// kept if they form a large enough connected component.
pub fn detect_baseline(projection: &Raster, params: &DetectorParams) -> Result<Raster> {
    params.validate()?;
    if projection.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("projection contains non-finite values"));
    }
    let (w, h) = (projection.width(), projection.height());
    let mut marked = vec![false; w * h];

    struct RowFit {
        row: usize,
        lo: usize,
        residual: Vec<f64>,
    }
    let mut fits: Vec<RowFit> = Vec::new();
    let mut pooled: Vec<f64> = Vec::new();

    for row in 0..h {
        let vals: Vec<f64> = (0..w).map(|c| projection.get(row, c) as f64).collect();
        // silhouette span: the longest contiguous run above the floor, so
        // isolated noisy air pixels cannot stretch the fit window
        let mut best: Option<(usize, usize)> = None;
        let mut run_start = None;
        for (c, &v) in vals.iter().chain(std::iter::once(&0.0)).enumerate() {
            if v > SILHOUETTE_FLOOR {
                run_start.get_or_insert(c);
            } else if let Some(s) = run_start.take() {
                if best.map_or(true, |(b0, b1)| c - 1 - s > b1 - b0) {
                    best = Some((s, c - 1));
                }
            }
        }
        let Some((mut lo, mut hi)) = best else { continue };
        let margin = edge_margin(hi - lo + 1);
        lo += margin;
        hi = hi.saturating_sub(margin);
        if hi <= lo {
            continue;
        }
        let n = hi - lo + 1;
        // narrow silhouettes get a reduced-degree background so the
        // polynomial cannot flex into the dip itself
        let degree = params.background_degree.min((n / 5).max(2));
        if n < 2 * (degree + 2) {
            continue;
        }
        let xs: Vec<f64> = (0..n)
            .map(|i| 2.0 * i as f64 / (n - 1) as f64 - 1.0)
            .collect();
        let ys = &vals[lo..=hi];

        let Some(mut coeffs) = polyfit(&xs, ys, degree, None) else { continue };
        let mut keep = vec![true; n];
        for _ in 0..3 {
            let res: Vec<f64> = xs
                .iter()
                .zip(ys)
                .map(|(&x, &y)| polyval(&coeffs, x) - y) // positive at a void
                .collect();
            let inlier: Vec<f64> = res
                .iter()
                .zip(&keep)
                .filter(|(_, &k)| k)
                .map(|(&r, _)| r)
                .collect();
            let sigma = mad_sigma(&inlier).max(1e-12);
            let mut changed = false;
            for (i, &r) in res.iter().enumerate() {
                let k = r < 2.0 * sigma && r > -3.5 * sigma;
                if k != keep[i] {
                    changed = true;
                    keep[i] = k;
                }
            }
            if !changed {
                break;
            }
            match polyfit(&xs, ys, degree, Some(&keep)) {
                Some(c) => coeffs = c,
                None => break, // too few inliers left; keep previous fit
            }
        }

        let residual: Vec<f64> = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| polyval(&coeffs, x) - y)
            .collect();
        for (r, &k) in residual.iter().zip(&keep) {
            if k {
                pooled.push(*r);
            }
        }
        fits.push(RowFit { row, lo, residual });
    }

    if pooled.is_empty() {
        return Ok(Raster::new(w, h, 0.0));
    }
    let sigma = mad_sigma(&pooled).max(1e-12);
    for fit in &fits {
        for (i, &r) in fit.residual.iter().enumerate() {
            if r > params.noise_k * sigma {
                marked[fit.row * w + fit.lo + i] = true;
            }
        }
    }

    Ok(filter_components(&marked, w, h, params.min_component_px))
}

fn mad_sigma(res: &[f64]) -> f64 {
    let median = |xs: &mut Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = xs.len();
        if n % 2 == 1 {
            xs[n / 2]
        } else {
            0.5 * (xs[n / 2 - 1] + xs[n / 2])
        }
    };
    let mut v = res.to_vec();
    let med = median(&mut v);
    let mut dev: Vec<f64> = res.iter().map(|r| (r - med).abs()).collect();
    MAD_SIGMA * median(&mut dev)
}

/// Least-squares polynomial fit on pre-normalized abscissas, optional point
/// mask. Normal equations are fine at degree <= 6 on [-1, 1].
fn polyfit(xs: &[f64], ys: &[f64], degree: usize, keep: Option<&[bool]>) -> Option<Vec<f64>> {
    let k = degree + 1;
    let mut ata = vec![0.0; k * k];
    let mut atb = vec![0.0; k];
    let mut used = 0usize;
    for (i, (&x, &y)) in xs.iter().zip(ys).enumerate() {
        if let Some(keep) = keep {
            if !keep[i] {
                continue;
            }
        }
        used += 1;
        let mut pow = vec![0.0; k];
        let mut p = 1.0;
        for pw in pow.iter_mut() {
            *pw = p;
            p *= x;
        }
        for a in 0..k {
            for b in 0..k {
                ata[a * k + b] += pow[a] * pow[b];
            }
            atb[a] += pow[a] * y;
        }
    }
    if used < k + 1 {
        return None;
    }
    crate::numeric::solve_spd(k, &ata, &atb)
}

fn polyval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for &c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// Keeps 8-connected components of at least `min_px` pixels.
fn filter_components(marked: &[bool], w: usize, h: usize, min_px: usize) -> Raster {
    let mut out = Raster::new(w, h, 0.0);
    let mut seen = vec![false; w * h];
    let mut stack = Vec::new();
    let mut component = Vec::new();
    for start in 0..w * h {
        if !marked[start] || seen[start] {
            continue;
        }
        stack.push(start);
        seen[start] = true;
        component.clear();
        while let Some(i) = stack.pop() {
            component.push(i);
            let (r, c) = (i / w, i % w);
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if dr == 0 && dc == 0 {
                        continue;
                    }
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= h as i64 || nc >= w as i64 {
                        continue;
                    }
                    let j = nr as usize * w + nc as usize;
                    if marked[j] && !seen[j] {
                        seen[j] = true;
                        stack.push(j);
                    }
                }
            }
        }
        if component.len() >= min_px {
            for &i in &component {
                out.values_mut()[i] = 1.0;
            }
        }
    }
    out
}

/// F1 = 2TP / (2TP + FP + FN) over pixels; two empty masks score 1.0.
pub fn f1_score(predicted: &Raster, ground_truth: &Raster) -> Result<f64> {
    if !predicted.same_shape(ground_truth) {
        return Err(Error::DimensionMismatch(format!(
            "predicted {}x{} vs truth {}x{}",
            predicted.width(),
            predicted.height(),
            ground_truth.width(),
            ground_truth.height()
        )));
    }
    let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
    for (&p, &t) in predicted.values().iter().zip(ground_truth.values()) {
        match (p != 0.0, t != 0.0) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fnn += 1,
            (false, false) => {}
        }
    }
    if tp + fp + fnn == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2.0 * tp as f64 + fp as f64 + fnn as f64))
}

/// Loads `<phantom_id>_mask.xr32` files from a directory, validating that
/// each is binary and matches the expected projection dimensions.
pub fn import_masks(
    directory: &Path,
    expected_width: usize,
    expected_height: usize,
) -> Result<BTreeMap<u64, Raster>> {
    let mut masks = BTreeMap::new();
    let entries = std::fs::read_dir(directory).map_err(|e| Error::io(directory, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(directory, e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        let Some(id_str) = name.strip_suffix("_mask.xr32") else { continue };
        let id: u64 = id_str.parse().map_err(|_| {
            Error::validation(format!("mask file `{name}` has a non-numeric phantom id"))
        })?;
        let mask = Raster::read_xr32(&entry.path())?;
        if mask.width() != expected_width || mask.height() != expected_height {
            return Err(Error::DimensionMismatch(format!(
                "{name}: {}x{} vs companion projections {expected_width}x{expected_height}",
                mask.width(),
                mask.height()
            )));
        }
        if !mask.is_binary() {
            return Err(Error::validation(format!("{name}: mask values must be exactly 0.0 or 1.0")));
        }
        masks.insert(id, mask);
    }
    Ok(masks)
}

/// Builds one record for one phantom.
pub fn score_phantom(
    phantom: &Phantom,
    geometry: &AcquisitionGeometry,
    predicted: &Raster,
    ground_truth: &Raster,
    set: &ProjectionSet,
) -> Result<DetectionRecord> {
    let f1 = f1_score(predicted, ground_truth)?;
    let spr = match defect_spr_detailed(set, ground_truth) {
        Ok(stats) => stats.mean,
        // no valid pixels under the mask: recorded as NaN, dropped later by
        // the multivariate fit
        Err(Error::EmptyMask(_)) => f64::NAN,
        Err(e) => return Err(e),
    };
    Ok(DetectionRecord {
        phantom_id: phantom.id,
        defect_size_mm: defect_size(phantom, geometry),
        defect_spr: spr,
        f1,
        success: None,
    })
}

/// Scores a whole dataset: one record per phantom, ordered by phantom id.
/// Every phantom must have a predicted mask, a ground truth, and a
/// projection set.
pub fn score_dataset(
    masks: &BTreeMap<u64, Raster>,
    ground_truths: &BTreeMap<u64, Raster>,
    phantoms: &[&Phantom],
    projection_sets: &BTreeMap<u64, ProjectionSet>,
    geometry: &AcquisitionGeometry,
) -> Result<Vec<DetectionRecord>> {
    let mut ids: Vec<u64> = phantoms.iter().map(|p| p.id).collect();
    ids.sort_unstable();
    let mut records = Vec::with_capacity(ids.len());
    for id in ids {
        let phantom = phantoms.iter().find(|p| p.id == id).unwrap();
        let mask = masks
            .get(&id)
            .ok_or_else(|| Error::validation(format!("missing predicted mask for phantom {id}")))?;
        let truth = ground_truths
            .get(&id)
            .ok_or_else(|| Error::validation(format!("missing ground truth for phantom {id}")))?;
        let set = projection_sets
            .get(&id)
            .ok_or_else(|| Error::validation(format!("missing projection set for phantom {id}")))?;
        records.push(score_phantom(phantom, geometry, mask, truth, set)?);
    }
    Ok(records)
}

/// records.csv schema: `phantom_id,defect_size_mm,defect_spr,f1` with
/// 9-digit reals.
pub fn records_to_csv(records: &[DetectionRecord]) -> String {
    let mut out = String::from("phantom_id,defect_size_mm,defect_spr,f1\n");
    for r in records {
        out.push_str(&format!(
            "{},{:.9e},{:.9e},{:.9e}\n",
            r.phantom_id, r.defect_size_mm, r.defect_spr, r.f1
        ));
    }
    out
}

pub fn records_from_csv(text: &str, origin: &Path) -> Result<Vec<DetectionRecord>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with("phantom_id") {
            continue;
        }
        let parse_err = |what: String| Error::Parse { path: origin.to_path_buf(), line: i + 1, what };
        let fs: Vec<&str> = line.split(',').collect();
        if fs.len() != 4 {
            return Err(parse_err(format!("expected 4 fields, got {}", fs.len())));
        }
        let phantom_id: u64 = fs[0].parse().map_err(|_| parse_err("bad phantom id".into()))?;
        let nums: Vec<f64> = fs[1..]
            .iter()
            .map(|f| f.parse().map_err(|_| parse_err(format!("bad real `{f}`"))))
            .collect::<Result<_>>()?;
        records.push(DetectionRecord {
            phantom_id,
            defect_size_mm: nums[0],
            defect_spr: nums[1],
            f1: nums[2],
            success: None,
        });
    }
    Ok(records)
}

pub fn save_records(records: &[DetectionRecord], path: &Path) -> Result<()> {
    std::fs::write(path, records_to_csv(records)).map_err(|e| Error::io(path, e))
}

pub fn load_records(path: &Path) -> Result<Vec<DetectionRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    records_from_csv(&text, path)
}
