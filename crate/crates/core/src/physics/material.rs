//! Attenuation tables: per-process mass attenuation coefficients on an
//! ascending energy grid, log-log interpolated and scaled by density into
//! linear coefficients in 1/mm.
//!
//! Table CSV schema: `energy_keV,pe_cm2_per_g,compton_cm2_per_g,rayleigh_cm2_per_g`
//! with an optional header. A one-line sidecar `<stem>.meta` holds
//! `name,density_g_cm3`. Absorption edges are duplicate-energy rows; a lookup
//! at exactly the edge energy resolves to the above-edge row.

use std::path::Path;

use crate::error::{Error, Result};

use super::Spectrum;

#[derive(Clone, Copy, Debug)]
struct TableRow {
    energy: f64,
    pe: f64,
    compton: f64,
    rayleigh: f64,
}

/// Per-process linear attenuation at one energy, 1/mm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mu {
    pub photoelectric: f64,
    pub compton: f64,
    pub rayleigh: f64,
}

impl Mu {
    #[inline]
    pub fn total(&self) -> f64 {
        self.photoelectric + self.compton + self.rayleigh
    }
}

#[derive(Clone, Debug)]
pub struct Material {
    name: String,
    density: f64,
    rows: Vec<TableRow>,
}

const BUNDLED: &[(&str, &str, &str)] = &[
    (
        "pmma",
        include_str!("../../../../data/materials/pmma.csv"),
        include_str!("../../../../data/materials/pmma.meta"),
    ),
    (
        "aluminum",
        include_str!("../../../../data/materials/aluminum.csv"),
        include_str!("../../../../data/materials/aluminum.meta"),
    ),
    (
        "iron",
        include_str!("../../../../data/materials/iron.csv"),
        include_str!("../../../../data/materials/iron.meta"),
    ),
];

impl Material {
    pub fn from_rows(
        name: impl Into<String>,
        density: f64,
        rows: Vec<(f64, f64, f64, f64)>,
    ) -> Result<Self> {
        let name = name.into();
        if !(density > 0.0 && density.is_finite()) {
            return Err(Error::validation(format!("density {density} must be > 0")));
        }
        if rows.len() < 2 {
            return Err(Error::validation("attenuation table needs at least 2 rows"));
        }
        let mut table = Vec::with_capacity(rows.len());
        let mut prev = f64::NEG_INFINITY;
        let mut dup_run = 1;
        for (i, (energy, pe, compton, rayleigh)) in rows.into_iter().enumerate() {
            if energy < prev {
                return Err(Error::validation(format!(
                    "table energies must be ascending (row {i}: {energy} after {prev})"
                )));
            }
            if energy == prev {
                dup_run += 1;
                if dup_run > 2 {
                    return Err(Error::validation(format!(
                        "more than two rows share energy {energy} keV"
                    )));
                }
            } else {
                dup_run = 1;
            }
            for (label, v) in [("pe", pe), ("compton", compton), ("rayleigh", rayleigh)] {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(Error::validation(format!(
                        "{label} coefficient must be > 0 at {energy} keV, got {v}"
                    )));
                }
            }
            prev = energy;
            table.push(TableRow { energy, pe, compton, rayleigh });
        }
        Ok(Material { name, density, rows: table })
    }

    /// Parses a table CSV plus its `name,density` sidecar text.
    pub fn from_csv(table_csv: &str, sidecar: &str, origin: &Path) -> Result<Self> {
        let side = sidecar.trim();
        let (name, density_s) = side.split_once(',').ok_or_else(|| Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            what: "sidecar must be `name,density_g_cm3`".into(),
        })?;
        let density: f64 = density_s.trim().parse().map_err(|_| Error::Parse {
            path: origin.to_path_buf(),
            line: 1,
            what: format!("bad density `{density_s}`"),
        })?;

        let mut rows = Vec::new();
        for (i, line) in table_csv.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("energy") {
                continue;
            }
            let fs: Vec<&str> = line.split(',').collect();
            if fs.len() != 4 {
                return Err(Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    what: format!("expected 4 fields, got {}", fs.len()),
                });
            }
            let mut v = [0.0f64; 4];
            for (j, f) in fs.iter().enumerate() {
                v[j] = f.trim().parse().map_err(|_| Error::Parse {
                    path: origin.to_path_buf(),
                    line: i + 1,
                    what: format!("bad number `{f}`"),
                })?;
            }
            rows.push((v[0], v[1], v[2], v[3]));
        }
        if rows.is_empty() {
            return Err(Error::validation(format!("{}: empty attenuation table", origin.display())));
        }
        Self::from_rows(name.trim(), density, rows)
    }

    /// Loads `<path>` and its `<stem>.meta` sidecar.
    pub fn load(path: &Path) -> Result<Self> {
        let table = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let meta_path = path.with_extension("meta");
        let sidecar = std::fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        Self::from_csv(&table, &sidecar, path)
    }

    /// One of the tables shipped with the crate: pmma, aluminum, iron.
    pub fn bundled(name: &str) -> Result<Self> {
        for (n, table, meta) in BUNDLED {
            if *n == name {
                return Self::from_csv(table, meta, Path::new(n));
            }
        }
        Err(Error::validation(format!(
            "no bundled material `{name}` (have pmma, aluminum, iron)"
        )))
    }

    /// Resolves a CLI-style reference: an existing file path, else a bundled
    /// material name.
    pub fn resolve(spec: &str) -> Result<Self> {
        let path = Path::new(spec);
        if path.exists() {
            Self::load(path)
        } else {
            Self::bundled(spec)
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn density(&self) -> f64 {
        self.density
    }

    pub fn energy_range(&self) -> (f64, f64) {
        (self.rows[0].energy, self.rows[self.rows.len() - 1].energy)
    }

    /// Per-process linear attenuation in 1/mm at `energy_kev`.
    ///
    /// Each mass-coefficient column is interpolated log-log between the
    /// bracketing rows and scaled by density/10 (cm^2/g times g/cm^3 is 1/cm).
    /// At a tabulated energy the row value is returned as-is; where two rows
    /// share an edge energy the above-edge row wins.
    pub fn mu(&self, energy_kev: f64) -> Result<Mu> {
        let (lo, hi) = self.energy_range();
        if !(energy_kev >= lo && energy_kev <= hi) {
            return Err(Error::EnergyOutOfRange { energy_kev, min_kev: lo, max_kev: hi });
        }
        let scale = self.density / 10.0;
        // first row with energy > E; the row before it has energy <= E and,
        // for duplicated edge energies, is the above-edge row
        let idx = self.rows.partition_point(|r| r.energy <= energy_kev);
        let a = &self.rows[idx - 1];
        if a.energy == energy_kev {
            return Ok(Mu {
                photoelectric: a.pe * scale,
                compton: a.compton * scale,
                rayleigh: a.rayleigh * scale,
            });
        }
        let b = &self.rows[idx];
        let t = (energy_kev / a.energy).ln() / (b.energy / a.energy).ln();
        let interp = |va: f64, vb: f64| (va.ln() + t * (vb / va).ln()).exp();
        Ok(Mu {
            photoelectric: interp(a.pe, b.pe) * scale,
            compton: interp(a.compton, b.compton) * scale,
            rayleigh: interp(a.rayleigh, b.rayleigh) * scale,
        })
    }

    /// Total linear attenuation in 1/mm.
    #[inline]
    pub fn mu_total(&self, energy_kev: f64) -> Result<f64> {
        Ok(self.mu(energy_kev)?.total())
    }

    /// Errors unless the spectrum support lies inside the table range.
    pub fn check_covers(&self, spectrum: &Spectrum) -> Result<()> {
        let (lo, hi) = self.energy_range();
        let (smin, smax) = spectrum.support();
        if smin < lo || smax > hi {
            return Err(Error::validation(format!(
                "material `{}` table [{lo}, {hi}] keV does not cover spectrum support [{smin}, {smax}]",
                self.name
            )));
        }
        Ok(())
    }
}
