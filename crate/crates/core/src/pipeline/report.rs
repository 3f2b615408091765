//! Report rendering: summary tables and SVG plots, computed purely from the
//! run's records.csv and fit.csv files (never from rasters).

use std::path::{Path, PathBuf};

use crate::detect::{load_records, DetectionRecord};
use crate::error::{Error, Result};
use crate::pod::{binarize, binned_histogram, pod_eval, s90, s90_95, PodFit};

use super::config::{ExperimentConfig, Variant};
use super::svg::Plot;

const HIST_BINS: usize = 10;
const CURVE_POINTS: usize = 120;

/// Writes `report/` under the run directory: a per-variant s90/s90-95 table
/// with a relative-difference row, an SPR-stratified s90 table from the
/// multivariate fits, and the plot set (F1 scatter, success histogram, POD
/// curve with band and markers, fixed-SPR curve pairs).
pub fn write_report(config: &ExperimentConfig, run_dir: &Path) -> Result<PathBuf> {
    let report_dir = run_dir.join("report");
    std::fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;

    let mut summaries = Vec::new();
    for &variant in &config.variants {
        let fit = PodFit::load(&run_dir.join("pod").join(format!("fit_{variant}.csv")))?;
        let mut records = load_records(&run_dir.join(format!("records_{variant}.csv")))?;
        binarize(&mut records, config.f1_threshold)?;
        let s_point = s90(&fit, None)?;
        // a fit too uncertain for its lower band to reach 90% anywhere has
        // no finite s90/95; the table renders that honestly instead of
        // aborting the report
        let s_lower = match s90_95(&fit, None) {
            Ok(v) => Some(v),
            Err(Error::Bracket { .. }) => None,
            Err(e) => return Err(e),
        };
        summaries.push((variant, fit.clone(), records.clone(), s_point, s_lower));

        write_scatter(&report_dir, variant, &records)?;
        write_histogram(&report_dir, variant, &records)?;
        write_pod_curve(&report_dir, variant, &fit, &records, s_point, s_lower)?;
    }

    // table 1: per-variant s90 and s90/95, plus the relative difference of
    // the without-scatter s90 against the with-scatter one
    let mut t1 = String::from("variant,s90_mm,s90_95_mm\n");
    for (variant, _, _, s_point, s_lower) in &summaries {
        let lower = match s_lower {
            Some(v) => format!("{v:.9e}"),
            None => "unbounded".to_string(),
        };
        t1.push_str(&format!("{variant},{s_point:.9e},{lower}\n"));
    }
    if config.variants.len() == 2 {
        let s_with = summaries
            .iter()
            .find(|(v, ..)| *v == Variant::With)
            .map(|(_, _, _, s, _)| *s)
            .unwrap();
        let s_without = summaries
            .iter()
            .find(|(v, ..)| *v == Variant::Without)
            .map(|(_, _, _, s, _)| *s)
            .unwrap();
        t1.push_str(&format!("difference,{:.9e},\n", (s_without - s_with) / s_with));
    }
    let t1_path = report_dir.join("table1.csv");
    std::fs::write(&t1_path, t1).map_err(|e| Error::io(&t1_path, e))?;

    // table 2 and the fixed-SPR plot need the multivariate fits
    if config.spr_covariate {
        let mut t2 = String::from("variant,max_spr,s90_at_spr0_mm,s90_at_max_spr_mm\n");
        let mut plot = Plot::new(
            "POD at fixed SPR levels",
            "defect size [mm]",
            "probability of detection",
            size_range(&summaries),
            (0.0, 1.0),
        );
        let colors = ["#0057b8", "#d64500", "#2a873b", "#7b2d8b"];
        let mut color_idx = 0;
        for (variant, _, records, _, _) in &summaries {
            let multi =
                PodFit::load(&run_dir.join("pod").join(format!("fit_{variant}_multi.csv")))?;
            let max_spr = records
                .iter()
                .map(|r| r.defect_spr)
                .filter(|v| v.is_finite())
                .fold(0.0f64, f64::max);
            let s0 = s90(&multi, Some(0.0))?;
            let s_max = s90(&multi, Some(max_spr))?;
            t2.push_str(&format!("{variant},{max_spr:.9e},{s0:.9e},{s_max:.9e}\n"));

            for level in [0.0, 0.5, 1.0] {
                if level > 0.0 && level > max_spr {
                    continue;
                }
                let (lo, hi) = size_range(&summaries);
                let pts: Vec<(f64, f64)> = (0..CURVE_POINTS)
                    .map(|i| {
                        let s = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
                        (s, multi.link.inverse(multi.eta(s, Some(level)).unwrap_or(0.0)))
                    })
                    .collect();
                let color = colors[color_idx % colors.len()];
                color_idx += 1;
                let dash = if *variant == Variant::Without { Some("5,4") } else { None };
                plot.polyline(&pts, color, 1.8, dash);
                plot.legend_entry(color, &format!("{variant}, SPR = {level}"));
            }
        }
        let t2_path = report_dir.join("table2.csv");
        std::fs::write(&t2_path, t2).map_err(|e| Error::io(&t2_path, e))?;
        let plot_path = report_dir.join("pod_by_spr.svg");
        std::fs::write(&plot_path, plot.render()).map_err(|e| Error::io(&plot_path, e))?;
    }

    Ok(report_dir)
}

type Summary = (Variant, PodFit, Vec<DetectionRecord>, f64, Option<f64>);

fn size_range(summaries: &[Summary]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (_, _, records, _, _) in summaries {
        for r in records {
            lo = lo.min(r.defect_size_mm);
            hi = hi.max(r.defect_size_mm);
        }
    }
    if lo.is_finite() && hi > lo {
        (lo, hi)
    } else {
        (0.0, 1.0)
    }
}

fn write_scatter(dir: &Path, variant: Variant, records: &[DetectionRecord]) -> Result<()> {
    let pts: Vec<(f64, f64)> = records.iter().map(|r| (r.defect_size_mm, r.f1)).collect();
    let (lo, hi) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(s, _)| {
        (lo.min(s), hi.max(s))
    });
    let mut plot = Plot::new(
        &format!("F1 score vs defect size ({variant} scatter signal)"),
        "defect size [mm]",
        "F1 score",
        (lo, hi),
        (0.0, 1.0),
    );
    plot.scatter(&pts, "#0057b8", 2.4);
    let path = dir.join(format!("scatter_{variant}.svg"));
    std::fs::write(&path, plot.render()).map_err(|e| Error::io(&path, e))
}

fn write_histogram(dir: &Path, variant: Variant, records: &[DetectionRecord]) -> Result<()> {
    let hist = binned_histogram(records, HIST_BINS)?;
    let (lo, hi) = (hist.bin_edges[0], *hist.bin_edges.last().unwrap());
    let mut plot = Plot::new(
        &format!("success fraction by defect size ({variant})"),
        "defect size [mm]",
        "fraction with F1 above threshold",
        (lo, hi),
        (0.0, 1.0),
    );
    plot.bars(&hist.bin_edges, &hist.success_fraction, "#2a873b");
    let path = dir.join(format!("histogram_{variant}.svg"));
    std::fs::write(&path, plot.render()).map_err(|e| Error::io(&path, e))
}

fn write_pod_curve(
    dir: &Path,
    variant: Variant,
    fit: &PodFit,
    records: &[DetectionRecord],
    s_point: f64,
    s_lower: Option<f64>,
) -> Result<()> {
    let path = dir.join(format!("pod_curve_{variant}.svg"));
    let svg = pod_curve_svg(
        fit,
        records,
        &format!("POD curve ({variant} scatter signal)"),
        Some((s_point, s_lower.unwrap_or(f64::NAN))),
    )?;
    std::fs::write(&path, svg).map_err(|e| Error::io(&path, e))
}

/// POD curve with its 95% band, a rug of the observations (successes up,
/// failures down), and s90 / s90-95 markers. Also used by the CLI's plot
/// subcommand.
pub fn pod_curve_svg(
    fit: &PodFit,
    records: &[DetectionRecord],
    title: &str,
    markers: Option<(f64, f64)>,
) -> Result<String> {
    let (mut lo, mut hi) = records.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r.defect_size_mm), hi.max(r.defect_size_mm))
    });
    if !lo.is_finite() || !(hi > lo) {
        (lo, hi) = (0.0, 1.0);
    }
    let mut plot = Plot::new(title, "defect size [mm]", "probability of detection", (lo, hi), (0.0, 1.0));
    let mut curve = Vec::with_capacity(CURVE_POINTS);
    let mut lower = Vec::with_capacity(CURVE_POINTS);
    let mut upper = Vec::with_capacity(CURVE_POINTS);
    for i in 0..CURVE_POINTS {
        let s = lo + (hi - lo) * i as f64 / (CURVE_POINTS - 1) as f64;
        let pt = pod_eval(fit, s, None)?;
        curve.push((s, pt.p));
        lower.push((s, pt.lo95));
        upper.push((s, pt.hi95));
    }
    plot.band(&lower, &upper, "#9db8e8", 0.45);
    plot.polyline(&curve, "#0057b8", 2.0, None);
    let xs: Vec<f64> = records.iter().map(|r| r.defect_size_mm).collect();
    let up: Vec<bool> = records.iter().map(|r| r.success.unwrap_or(r.f1 > 0.5)).collect();
    plot.rug(&xs, &up, "#333333");
    if let Some((s_point, s_lower)) = markers {
        if s_point.is_finite() {
            plot.vline(s_point, "#d64500", &format!("s90 = {s_point:.3}"));
        }
        if s_lower.is_finite() {
            plot.vline(s_lower, "#7b2d8b", &format!("s90/95 = {s_lower:.3}"));
        }
    }
    plot.legend_entry("#0057b8", "fitted POD");
    plot.legend_entry("#9db8e8", "95% band");
    Ok(plot.render())
}
