//! Row-major 32-bit rasters and the `XR32` container format.
//!
//! XR32 layout: a 16-byte header — magic `XR32`, then width, height and a
//! reserved word as little-endian u32 — followed by `width*height`
//! little-endian IEEE-754 f32 values in row-major order. Binary masks use the
//! same container with values 0.0/1.0.
//!
//! Each raster in a simulation output directory is accompanied by a `.meta`
//! sidecar (plain `key = value` lines) recording phantom id, material,
//! tube voltage, photon budget and seed.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub const XR32_MAGIC: &[u8; 4] = b"XR32";

#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl Raster {
    pub fn new(width: usize, height: usize, fill: f32) -> Self {
        Raster {
            width,
            height,
            values: vec![fill; width * height],
        }
    }

    pub fn from_values(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "raster {}x{} expects {} values, got {}",
                width,
                height,
                width * height,
                values.len()
            )));
        }
        Ok(Raster {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f32) {
        debug_assert!(row < self.height && col < self.width);
        self.values[row * self.width + col] = v;
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f32] {
        &mut self.values
    }

    pub fn same_shape(&self, other: &Raster) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Iterator of (row, col, value).
    pub fn iter_pixels(&self) -> impl Iterator<Item = (usize, usize, f32)> + '_ {
        let w = self.width;
        self.values
            .iter()
            .enumerate()
            .map(move |(i, &v)| (i / w, i % w, v))
    }

    /// True when every value is exactly 0.0 or 1.0.
    pub fn is_binary(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0 || v == 1.0)
    }

    pub fn count_nonzero(&self) -> usize {
        self.values.iter().filter(|&&v| v != 0.0).count()
    }

    pub fn write_xr32(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 + self.values.len() * 4);
        buf.extend_from_slice(XR32_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        for v in &self.values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&buf).map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn read_xr32(path: &Path) -> Result<Self> {
        let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut bytes = Vec::new();
        f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
        if bytes.len() < 16 || &bytes[0..4] != XR32_MAGIC {
            return Err(Error::validation(format!(
                "{}: not an XR32 file (bad magic or truncated header)",
                path.display()
            )));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let expect = 16 + width * height * 4;
        if bytes.len() != expect {
            return Err(Error::validation(format!(
                "{}: XR32 payload is {} bytes, header implies {}",
                path.display(),
                bytes.len(),
                expect
            )));
        }
        let values = bytes[16..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Raster {
            width,
            height,
            values,
        })
    }
}

/// `key = value` sidecar, kept sorted so serialization is byte-stable.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Sidecar {
    entries: BTreeMap<String, String>,
}

impl Sidecar {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(&mut self, key: &str, value: impl ToString) -> &mut Self {
        self.entries.insert(key.to_string(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        std::fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut entries = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                what: "expected `key = value`".into(),
            })?;
            entries.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Sidecar { entries })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn xr32_round_trip() {
        let dir = std::env::temp_dir().join("xspod_xr32_rt");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.xr32");
        let mut r = Raster::new(4, 3, 0.0);
        r.set(0, 0, 1.25);
        r.set(2, 3, -7.5e-3);
        r.set(1, 2, f32::NAN);
        r.write_xr32(&path).unwrap();
        let back = Raster::read_xr32(&path).unwrap();
        assert_eq!(back.width(), 4);
        assert_eq!(back.height(), 3);
        for (a, b) in r.values().iter().zip(back.values()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn xr32_rejects_bad_magic_and_size() {
        let dir = std::env::temp_dir().join("xspod_xr32_bad");
        std::fs::create_dir_all(&dir).unwrap();
        let p1 = dir.join("bad_magic.xr32");
        std::fs::write(&p1, b"NOPE\0\0\0\0\0\0\0\0\0\0\0\0").unwrap();
        assert!(Raster::read_xr32(&p1).is_err());

        let p2 = dir.join("short.xr32");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(XR32_MAGIC);
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&0u32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]); // 2 floats instead of 9
        std::fs::write(&p2, bytes).unwrap();
        assert!(Raster::read_xr32(&p2).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let dir = std::env::temp_dir().join("xspod_sidecar");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.meta");
        let mut s = Sidecar::new();
        s.set("phantom_id", 17)
            .set("material", "iron")
            .set("tube_kv", 450.0)
            .set("photons", 1_000_000u64)
            .set("seed", 7);
        s.write(&path).unwrap();
        let back = Sidecar::read(&path).unwrap();
        assert_eq!(s, back);
        assert_eq!(back.get("material"), Some("iron"));
    }

    #[test]
    fn binary_check() {
        let mut r = Raster::new(2, 2, 0.0);
        r.set(0, 1, 1.0);
        assert!(r.is_binary());
        r.set(1, 1, 0.5);
        assert!(!r.is_binary());
    }
}
