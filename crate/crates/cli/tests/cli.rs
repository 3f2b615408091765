//! End-to-end tests of the `xspod` binary: exit codes, file outputs, and a
//! miniature phantoms -> simulate -> detect -> score -> pod session.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn xspod(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xspod"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("xspod_cli_tests").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn version_and_help() {
    let v = xspod(&["--version"]);
    assert_ok(&v);
    assert!(String::from_utf8_lossy(&v.stdout).contains("xspod"));
    let h = xspod(&["--help"]);
    assert_ok(&h);
    let text = String::from_utf8_lossy(&h.stdout).to_string();
    for sub in ["phantoms", "hvl", "simulate", "project", "detect", "score", "pod", "run", "report"]
    {
        assert!(text.contains(sub), "help lacks `{sub}`");
    }
}

#[test]
fn hvl_monochromatic_prints_ln2_over_mu() {
    let dir = tmp("hvl");
    // synthetic flat table: mu_total = (0.4+0.4+0.2) cm2/g * 1 g/cm3 / 10 = 0.1/mm
    std::fs::write(
        dir.join("flat.csv"),
        "energy_keV,pe_cm2_per_g,compton_cm2_per_g,rayleigh_cm2_per_g\n10,0.4,0.4,0.2\n1000,0.4,0.4,0.2\n",
    )
    .unwrap();
    std::fs::write(dir.join("flat.meta"), "flat,1.0\n").unwrap();
    std::fs::write(dir.join("mono.csv"), "energy_keV,weight\n70,1\n").unwrap();
    let out = xspod(&[
        "hvl",
        "--material",
        dir.join("flat.csv").to_str().unwrap(),
        "--spectrum",
        dir.join("mono.csv").to_str().unwrap(),
    ]);
    assert_ok(&out);
    let val: f64 = String::from_utf8_lossy(&out.stdout).trim().parse().unwrap();
    assert!((val - std::f64::consts::LN_2 / 0.1).abs() < 1e-5, "hvl {val}");

    // bundled material by name with the kramers shorthand
    let out2 = xspod(&["hvl", "--material", "pmma", "--spectrum", "kramers:90"]);
    assert_ok(&out2);
    let val2: f64 = String::from_utf8_lossy(&out2.stdout).trim().parse().unwrap();
    assert!(val2 > 10.0 && val2 < 40.0, "pmma@90 hvl {val2}");
}

#[test]
fn exit_codes_distinguish_validation_and_io() {
    // validation error: bad spectrum syntax
    let bad = xspod(&["hvl", "--material", "pmma", "--spectrum", "kramers:abc"]);
    assert_eq!(bad.status.code(), Some(2));
    // io error: missing file
    let missing = xspod(&["hvl", "--material", "pmma", "--spectrum", "/no/such/spectrum.csv"]);
    assert_eq!(missing.status.code(), Some(3));
    // validation: sod > sdd
    let geo = xspod(&[
        "phantoms", "--seed", "1", "--test", "2", "--out", "/tmp/x.csv", "--radius-min", "-1",
    ]);
    assert_eq!(geo.status.code(), Some(2));
}

#[test]
fn mini_session_phantoms_to_pod() {
    let dir = tmp("session");
    let phantoms_csv = dir.join("phantoms.csv");
    let d = |p: &Path| p.to_str().unwrap().to_string();

    // compact high-contrast scenario, same scale the pipeline smoke test uses
    let out = xspod(&[
        "phantoms",
        "--seed", "21",
        "--test", "12",
        "--material-id", "iron",
        "--radius-min", "5.5",
        "--radius-max", "7",
        "--height-min", "6",
        "--height-max", "10",
        "--cavity-min", "0.6",
        "--cavity-max", "1.6",
        "--out", &d(&phantoms_csv),
    ]);
    assert_ok(&out);

    let sim_dir = dir.join("sim");
    let geom = [
        "--det-width", "36",
        "--det-height", "36",
        "--pitch", "0.9",
    ];
    let mut args = vec![
        "simulate",
        "--phantoms", &d(&phantoms_csv),
        "--material", "iron",
        "--spectrum", "kramers:300",
        "--photons", "4000000",
        "--seed", "21",
        "--workers", "4",
        "--out", &d(&sim_dir),
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(geom.iter().map(|s| s.to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_xspod"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(sim_dir.join("0_P.xr32").exists());
    assert!(sim_dir.join("0_spr.xr32").exists());
    assert!(sim_dir.join("0.meta").exists());

    // detect on the with-scatter variant
    let masks_dir = dir.join("masks");
    std::fs::write(dir.join("params.txt"), "noise_k = 2.0\n").unwrap();
    let out = xspod(&[
        "detect",
        "--in", &d(&sim_dir),
        "--variant", "with",
        "--params", &d(&dir.join("params.txt")),
        "--out", &d(&masks_dir),
    ]);
    assert_ok(&out);
    assert!(masks_dir.join("0_mask.xr32").exists());

    // score
    let records_csv = dir.join("records.csv");
    let mut args = vec![
        "score",
        "--masks", &d(&masks_dir),
        "--truth", &d(&sim_dir),
        "--phantoms", &d(&phantoms_csv),
        "--out", &d(&records_csv),
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    args.extend(geom.iter().map(|s| s.to_string()));
    let out = Command::new(env!("CARGO_BIN_EXE_xspod"))
        .args(&args)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(&records_csv).unwrap();
    assert_eq!(records.lines().count(), 13, "header + 12 rows:\n{records}");

    // pod fit + s90 + plot
    let fit_csv = dir.join("fit.csv");
    let out = xspod(&[
        "pod", "fit",
        "--records", &d(&records_csv),
        "--out", &d(&fit_csv),
    ]);
    assert_ok(&out);
    assert!(fit_csv.exists());

    let out = xspod(&["pod", "s90", "--fit", &d(&fit_csv)]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("s90 ="));

    let svg_path = dir.join("pod.svg");
    let out = xspod(&[
        "pod", "plot",
        "--fit", &d(&fit_csv),
        "--records", &d(&records_csv),
        "--out", &d(&svg_path),
    ]);
    assert_ok(&out);
    let svg = std::fs::read_to_string(&svg_path).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));

    // compare the fit with itself: indistinguishable
    let out = xspod(&[
        "pod", "compare",
        "--a", &d(&fit_csv),
        "--b", &d(&fit_csv),
        "--grid-min", "0.5",
        "--grid-max", "4",
    ]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("indistinguishable"));

    // eval at the s90 size must be near 0.9
    let s90_line = {
        let out = xspod(&["pod", "s90", "--fit", &d(&fit_csv)]);
        String::from_utf8_lossy(&out.stdout).to_string()
    };
    let s90_val: f64 = s90_line
        .split(&['=', ','][..])
        .nth(1)
        .unwrap()
        .trim()
        .trim_end_matches(" mm")
        .parse()
        .unwrap();
    let out = xspod(&["pod", "eval", "--fit", &d(&fit_csv), "--s", &format!("{s90_val}")]);
    assert_ok(&out);
    let text = String::from_utf8_lossy(&out.stdout).to_string();
    let p: f64 = text.split("pod = ").nth(1).unwrap().split_whitespace().next().unwrap().parse().unwrap();
    assert!((p - 0.9).abs() < 1e-3, "pod at s90 = {p}");
}

#[test]
fn project_writes_deterministic_rasters() {
    let dir = tmp("project");
    let phantoms_csv = dir.join("p.csv");
    assert_ok(&xspod(&[
        "phantoms", "--seed", "5", "--test", "2",
        "--radius-min", "3", "--radius-max", "5",
        "--height-min", "6", "--height-max", "8",
        "--out", phantoms_csv.to_str().unwrap(),
    ]));
    let out_dir = dir.join("proj");
    let run = |out: &Path| {
        let o = Command::new(env!("CARGO_BIN_EXE_xspod"))
            .args([
                "project",
                "--phantoms", phantoms_csv.to_str().unwrap(),
                "--material", "pmma",
                "--spectrum", "kramers:90",
                "--photons", "100000",
                "--noise-seed", "3",
                "--det-width", "19.2",
                "--det-height", "19.2",
                "--pitch", "0.6",
                "--out", out.to_str().unwrap(),
            ])
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    };
    run(&out_dir);
    let again = dir.join("proj2");
    run(&again);
    for kind in ["transmission", "expected", "counts", "mask"] {
        let a = std::fs::read(out_dir.join(format!("0_{kind}.xr32"))).unwrap();
        let b = std::fs::read(again.join(format!("0_{kind}.xr32"))).unwrap();
        assert_eq!(a, b, "{kind} not deterministic");
    }
}
