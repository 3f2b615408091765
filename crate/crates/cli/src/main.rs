//! `xspod` — cone-beam X-ray simulation and probability-of-detection
//! analysis for cavity defects in cylinders.
//!
//! Exit codes: 0 success, 2 validation/configuration error, 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use xspod_core::detect::{detect_baseline, f1_score, DetectionRecord, DetectorParams};
use xspod_core::montecarlo::{expected_flatfield, masked_spr_stats, simulate, SimulateOptions};
use xspod_core::phantom::{defect_size, generate_set, PhantomParamRanges, PhantomSet, Split};
use xspod_core::physics::{hvl, resolve_spectrum, Material};
use xspod_core::pipeline::{phantom_sim_seed, pod_curve_svg, write_report, ExperimentConfig};
use xspod_core::pod::{
    binarize, compare_fits, fit_pod, fit_pod_multi, pod_eval, s90, s90_95, Link, PodFit, Verdict,
};
use xspod_core::projector::{
    apply_poisson_noise, forward_project, ground_truth_mask, AcquisitionGeometry,
};
use xspod_core::raster::{Raster, Sidecar};
use xspod_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "xspod",
    version,
    about = "X-ray scatter simulation and probability-of-detection analysis",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GeometryArgs {
    /// Source to rotation-axis distance, mm
    #[arg(long, default_value_t = 200.0)]
    sod: f64,
    /// Source to detector distance, mm
    #[arg(long, default_value_t = 300.0)]
    sdd: f64,
    /// Detector width, mm
    #[arg(long, default_value_t = 75.0)]
    det_width: f64,
    /// Detector height, mm
    #[arg(long, default_value_t = 82.5)]
    det_height: f64,
    /// Pixel pitch, mm
    #[arg(long, default_value_t = 0.3)]
    pitch: f64,
}

impl GeometryArgs {
    fn build(&self) -> Result<AcquisitionGeometry> {
        let n_cols = (self.det_width / self.pitch).round() as usize;
        let n_rows = (self.det_height / self.pitch).round() as usize;
        AcquisitionGeometry::new(
            self.sod,
            self.sdd,
            self.det_width,
            self.det_height,
            self.pitch,
            n_cols,
            n_rows,
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a randomized phantom population and write it as CSV
    Phantoms {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 0)]
        train: usize,
        #[arg(long, default_value_t = 0)]
        val: usize,
        #[arg(long, default_value_t = 100)]
        test: usize,
        /// Material id recorded in the CSV (bundled name or free id)
        #[arg(long = "material-id", default_value = "pmma")]
        material_id: String,
        #[arg(long, default_value_t = 1.0)]
        radius_min: f64,
        #[arg(long, default_value_t = 25.0)]
        radius_max: f64,
        #[arg(long, default_value_t = 20.0)]
        height_min: f64,
        #[arg(long, default_value_t = 55.0)]
        height_max: f64,
        #[arg(long, default_value_t = 0.1)]
        cavity_min: f64,
        #[arg(long, default_value_t = 1.0)]
        cavity_max: f64,
        #[arg(long, default_value_t = 0.7)]
        ratio_min: f64,
        #[arg(long, default_value_t = 1.3)]
        ratio_max: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Half-value layer of a material under a spectrum, printed in mm
    Hvl {
        /// Bundled material name or attenuation table CSV path
        #[arg(long)]
        material: String,
        /// Spectrum CSV path, `kramers:KV`, or `kramers:KV:CUTOFF`
        #[arg(long)]
        spectrum: String,
    },
    /// Monte-Carlo transport of every phantom in a set
    Simulate {
        #[arg(long)]
        phantoms: PathBuf,
        #[arg(long)]
        material: String,
        #[arg(long)]
        spectrum: String,
        #[arg(long)]
        photons: u64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        /// Which split to simulate (train|val|test|all)
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Deterministic noise-free projection (optionally Poisson-noised)
    Project {
        #[arg(long)]
        phantoms: PathBuf,
        #[arg(long)]
        material: String,
        #[arg(long)]
        spectrum: String,
        /// Photon budget setting the flatfield level
        #[arg(long)]
        photons: u64,
        /// Draw Poisson counts with this seed instead of only expected values
        #[arg(long)]
        noise_seed: Option<u64>,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the baseline detector over simulated projections
    Detect {
        /// Directory of simulate outputs
        #[arg(long = "in")]
        input: PathBuf,
        /// Which image variant to segment (with|without)
        #[arg(long)]
        variant: String,
        /// Detector parameter file (key = value); defaults when omitted
        #[arg(long)]
        params: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predicted masks against ground truth into records.csv
    Score {
        /// Directory of predicted `<id>_mask.xr32` files
        #[arg(long)]
        masks: PathBuf,
        /// Simulate output directory (ground-truth masks and SPR maps)
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        phantoms: PathBuf,
        #[arg(long, default_value = "test")]
        split: String,
        #[command(flatten)]
        geometry: GeometryArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Probability-of-detection statistics
    #[command(subcommand)]
    Pod(PodCommand),
    /// Run a whole experiment from a config file
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Rebuild the report of a finished run directory
    Report {
        #[arg(long)]
        run: PathBuf,
    },
}

#[derive(Subcommand)]
enum PodCommand {
    /// Fit a POD model to records.csv
    Fit {
        #[arg(long)]
        records: PathBuf,
        /// Add a covariate column (currently `spr`)
        #[arg(long)]
        covariate: Option<String>,
        #[arg(long, default_value = "logit")]
        link: String,
        /// F1 threshold defining success
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a fitted curve at a defect size
    Eval {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        s: f64,
        #[arg(long)]
        spr: Option<f64>,
    },
    /// Print s90 and s90/95 of a fit
    S90 {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        spr: Option<f64>,
    },
    /// Compare two fits over a size grid
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 0.1)]
        grid_min: f64,
        #[arg(long, default_value_t = 3.0)]
        grid_max: f64,
        #[arg(long, default_value_t = 50)]
        grid_n: usize,
    },
    /// Render a POD curve SVG with band, rug, and s90 markers
    Plot {
        #[arg(long)]
        fit: PathBuf,
        #[arg(long)]
        records: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_split(s: &str) -> Result<Option<Split>> {
    match s {
        "all" => Ok(None),
        other => Ok(Some(other.parse()?)),
    }
}

fn selected_ids(set: &PhantomSet, split: Option<Split>) -> Vec<u64> {
    set.records
        .iter()
        .filter(|r| split.map_or(true, |s| r.split == s))
        .map(|r| r.phantom.id)
        .collect()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Phantoms {
            seed,
            train,
            val,
            test,
            material_id,
            radius_min,
            radius_max,
            height_min,
            height_max,
            cavity_min,
            cavity_max,
            ratio_min,
            ratio_max,
            out,
        } => {
            let ranges = PhantomParamRanges {
                radius_range: (radius_min, radius_max),
                height_range: (height_min, height_max),
                cavity_base_radius_range: (cavity_min, cavity_max),
                axis_ratio_range: (ratio_min, ratio_max),
            };
            let set = generate_set(seed, train, val, test, &ranges, &material_id)?;
            set.save(&out)?;
            println!("wrote {} phantoms to {}", set.len(), out.display());
            Ok(())
        }

        Command::Hvl { material, spectrum } => {
            let material = Material::resolve(&material)?;
            let spectrum = resolve_spectrum(&spectrum)?;
            println!("{:.6}", hvl(&material, &spectrum)?);
            Ok(())
        }

        Command::Simulate {
            phantoms,
            material,
            spectrum,
            photons,
            seed,
            workers,
            split,
            geometry,
            out,
        } => {
            let set = PhantomSet::load(&phantoms)?;
            let material = Material::resolve(&material)?;
            let spec = resolve_spectrum(&spectrum)?;
            let geometry = geometry.build()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let ids = selected_ids(&set, parse_split(&split)?);
            if ids.is_empty() {
                return Err(Error::validation("no phantoms in the selected split"));
            }
            for id in ids {
                let record = set.get(id).unwrap();
                let opts = SimulateOptions {
                    n_photons: photons,
                    seed: phantom_sim_seed(seed, id),
                    workers,
                    keep_orders: false,
                };
                let result = simulate(&record.phantom, &geometry, &spec, &material, opts)?;
                let mask = ground_truth_mask(&record.phantom, &geometry);
                let file = |kind: &str| out.join(format!("{id}_{kind}.xr32"));
                result.tally.primary_raster().write_xr32(&file("P"))?;
                result.tally.scatter_raster().write_xr32(&file("S"))?;
                result.flatfield.write_xr32(&file("I0"))?;
                result.with_scatter_log.write_xr32(&file("with"))?;
                result.primary_only_log.write_xr32(&file("without"))?;
                result.spr.write_xr32(&file("spr"))?;
                mask.write_xr32(&file("mask"))?;
                let mut meta = Sidecar::new();
                meta.set("phantom_id", id)
                    .set("material", material.name())
                    .set("spectrum", &spectrum)
                    .set("photons", photons)
                    .set("seed", opts.seed)
                    .set("split", record.split);
                meta.write(&out.join(format!("{id}.meta")))?;
                println!(
                    "phantom {id}: primary {} scatter {} absorbed {} escaped {}",
                    result.tally.primary_total(),
                    result.tally.scatter_total(),
                    result.tally.absorbed,
                    result.tally.escaped
                );
            }
            Ok(())
        }

        Command::Project {
            phantoms,
            material,
            spectrum,
            photons,
            noise_seed,
            split,
            geometry,
            out,
        } => {
            let set = PhantomSet::load(&phantoms)?;
            let material = Material::resolve(&material)?;
            let spec = resolve_spectrum(&spectrum)?;
            let geometry = geometry.build()?;
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let flatfield = expected_flatfield(&geometry, photons);
            let ids = selected_ids(&set, parse_split(&split)?);
            let n = ids.len();
            for id in ids {
                let record = set.get(id).unwrap();
                let proj =
                    forward_project(&record.phantom, &geometry, &spec, &material, &flatfield)?;
                let file = |kind: &str| out.join(format!("{id}_{kind}.xr32"));
                proj.transmission.write_xr32(&file("transmission"))?;
                proj.expected_counts.write_xr32(&file("expected"))?;
                ground_truth_mask(&record.phantom, &geometry).write_xr32(&file("mask"))?;
                if let Some(seed) = noise_seed {
                    let noisy = apply_poisson_noise(&proj.expected_counts, seed ^ id)?;
                    noisy.write_xr32(&file("counts"))?;
                }
            }
            println!("projected {n} phantoms into {}", out.display());
            Ok(())
        }

        Command::Detect { input, variant, params, out } => {
            if variant != "with" && variant != "without" {
                return Err(Error::validation("variant must be `with` or `without`"));
            }
            let params = match params {
                Some(p) => DetectorParams::load(&p)?,
                None => DetectorParams::default(),
            };
            std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
            let mut entries: Vec<_> = std::fs::read_dir(&input)
                .map_err(|e| Error::io(&input, e))?
                .collect::<std::io::Result<Vec<_>>>()
                .map_err(|e| Error::io(&input, e))?;
            entries.sort_by_key(|e| e.file_name());
            let suffix = format!("_{variant}.xr32");
            let mut n = 0;
            for entry in entries {
                let name = entry.file_name();
                let name = name.to_string_lossy().to_string();
                let Some(id_str) = name.strip_suffix(&suffix) else {
                    continue;
                };
                let projection = Raster::read_xr32(&entry.path())?;
                let mask = detect_baseline(&projection, &params)?;
                mask.write_xr32(&out.join(format!("{id_str}_mask.xr32")))?;
                n += 1;
            }
            if n == 0 {
                return Err(Error::validation(format!(
                    "no `*{suffix}` projections found in {}",
                    input.display()
                )));
            }
            println!("segmented {n} projections into {}", out.display());
            Ok(())
        }

        Command::Score { masks, truth, phantoms, split, geometry, out } => {
            let set = PhantomSet::load(&phantoms)?;
            let geometry = geometry.build()?;
            let mut records = Vec::new();
            for id in selected_ids(&set, parse_split(&split)?) {
                let phantom = &set.get(id).unwrap().phantom;
                let predicted_path = masks.join(format!("{id}_mask.xr32"));
                if !predicted_path.exists() {
                    return Err(Error::validation(format!(
                        "missing predicted mask for phantom {id}: {}",
                        predicted_path.display()
                    )));
                }
                let predicted = Raster::read_xr32(&predicted_path)?;
                let truth_mask = Raster::read_xr32(&truth.join(format!("{id}_mask.xr32")))?;
                let spr = Raster::read_xr32(&truth.join(format!("{id}_spr.xr32")))?;
                let f1 = f1_score(&predicted, &truth_mask)?;
                let spr_mean = match masked_spr_stats(&spr, &truth_mask) {
                    Ok(stats) => stats.mean,
                    Err(Error::EmptyMask(_)) => f64::NAN,
                    Err(e) => return Err(e),
                };
                records.push(DetectionRecord {
                    phantom_id: id,
                    defect_size_mm: defect_size(phantom, &geometry),
                    defect_spr: spr_mean,
                    f1,
                    success: None,
                });
            }
            xspod_core::detect::save_records(&records, &out)?;
            println!("scored {} phantoms into {}", records.len(), out.display());
            Ok(())
        }

        Command::Pod(pod) => dispatch_pod(pod),

        Command::Run { config } => {
            let config = ExperimentConfig::load(&config)?;
            let manifest = xspod_core::pipeline::run(&config)?;
            for (stage, status) in &manifest.stages {
                println!("{stage}: done in {:.2}s", status.seconds);
            }
            println!("run complete under {}", config.out_dir.display());
            Ok(())
        }

        Command::Report { run } => {
            let config_path = run.join("config.txt");
            let config = ExperimentConfig::load(&config_path)?;
            let dir = write_report(&config, &run)?;
            println!("report written to {}", dir.display());
            Ok(())
        }
    }
}

fn dispatch_pod(pod: PodCommand) -> Result<()> {
    match pod {
        PodCommand::Fit { records, covariate, link, threshold, out } => {
            let link: Link = link.parse()?;
            let mut records = xspod_core::detect::load_records(&records)?;
            binarize(&mut records, threshold)?;
            let fit = match covariate.as_deref() {
                None => {
                    let sizes: Vec<f64> = records.iter().map(|r| r.defect_size_mm).collect();
                    let successes: Vec<bool> =
                        records.iter().map(|r| r.success.unwrap()).collect();
                    fit_pod(&sizes, &successes, link)?
                }
                Some("spr") => {
                    let finite: Vec<&DetectionRecord> =
                        records.iter().filter(|r| r.defect_spr.is_finite()).collect();
                    if finite.len() < records.len() {
                        eprintln!(
                            "note: dropped {} records with undefined defect SPR",
                            records.len() - finite.len()
                        );
                    }
                    let sizes: Vec<f64> = finite.iter().map(|r| r.defect_size_mm).collect();
                    let sprs: Vec<f64> = finite.iter().map(|r| r.defect_spr).collect();
                    let succ: Vec<bool> = finite.iter().map(|r| r.success.unwrap()).collect();
                    fit_pod_multi(&sizes, &sprs, &succ, link)?
                }
                Some(other) => {
                    return Err(Error::validation(format!("unknown covariate `{other}` (spr)")))
                }
            };
            fit.save(&out)?;
            let coefs: Vec<String> = fit.coefficients.iter().map(|c| format!("{c:.6}")).collect();
            println!(
                "fitted {} link, coefficients [{}], deviance {:.4}, converged {}",
                fit.link,
                coefs.join(", "),
                fit.deviance,
                fit.converged
            );
            Ok(())
        }
        PodCommand::Eval { fit, s, spr } => {
            let fit = PodFit::load(&fit)?;
            let pt = pod_eval(&fit, s, spr)?;
            println!("s = {} pod = {:.6} lo95 = {:.6} hi95 = {:.6}", pt.s, pt.p, pt.lo95, pt.hi95);
            Ok(())
        }
        PodCommand::S90 { fit, spr } => {
            let fit = PodFit::load(&fit)?;
            let point = s90(&fit, spr)?;
            match s90_95(&fit, spr) {
                Ok(lower) => println!("s90 = {point:.6} mm, s90/95 = {lower:.6} mm"),
                Err(Error::Bracket { .. }) => {
                    println!("s90 = {point:.6} mm, s90/95 = unbounded (fit too uncertain)")
                }
                Err(e) => return Err(e),
            }
            Ok(())
        }
        PodCommand::Compare { a, b, grid_min, grid_max, grid_n } => {
            if grid_n < 2 || !(grid_max > grid_min) {
                return Err(Error::validation("need grid_max > grid_min and grid_n >= 2"));
            }
            let fit_a = PodFit::load(&a)?;
            let fit_b = PodFit::load(&b)?;
            let grid: Vec<f64> = (0..grid_n)
                .map(|i| grid_min + (grid_max - grid_min) * i as f64 / (grid_n - 1) as f64)
                .collect();
            let cmp = compare_fits(&fit_a, &fit_b, &grid, None)?;
            println!(
                "verdict: {}",
                match cmp.verdict {
                    Verdict::Indistinguishable => "indistinguishable",
                    Verdict::ABetter => "a_better",
                    Verdict::BBetter => "b_better",
                }
            );
            for p in cmp.points.iter().filter(|p| p.favors.is_some()) {
                println!(
                    "  s = {:.4}: p_a = {:.4} [{:.4}, {:.4}], p_b = {:.4} [{:.4}, {:.4}]",
                    p.s, p.a.p, p.a.lo95, p.a.hi95, p.b.p, p.b.lo95, p.b.hi95
                );
            }
            Ok(())
        }
        PodCommand::Plot { fit, records, threshold, out } => {
            let fit = PodFit::load(&fit)?;
            let mut records = xspod_core::detect::load_records(&records)?;
            binarize(&mut records, threshold)?;
            let point = s90(&fit, None)?;
            let lower = match s90_95(&fit, None) {
                Ok(v) => v,
                Err(Error::Bracket { .. }) => f64::NAN,
                Err(e) => return Err(e),
            };
            let svg = pod_curve_svg(&fit, &records, "POD curve", Some((point, lower)))?;
            std::fs::write(&out, svg).map_err(|e| Error::io(&out, e))?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}
