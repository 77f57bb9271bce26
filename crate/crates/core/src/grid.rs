//! Rectangular grids and fields sampled on them.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Rectangular lattice origin + i·spacing, i < counts, listed in row-major
/// order (last axis fastest).
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, spacing: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if origin.is_empty() || origin.len() != spacing.len() || origin.len() != counts.len() {
            return Err(Error::InvalidParameter("grid origin, spacing and counts must have equal nonzero length".into()));
        }
        if spacing.iter().any(|&h| !(h >= 0.0 && h.is_finite())) {
            return Err(Error::InvalidParameter("grid spacing must be finite and >= 0".into()));
        }
        Ok(Self { origin, spacing, counts })
    }

    /// Grid with `counts[i]` nodes spanning [lower[i], upper[i]].
    pub fn from_bounds(lower: &[f64], upper: &[f64], counts: &[usize]) -> Result<Self> {
        if lower.len() != upper.len() || lower.len() != counts.len() {
            return Err(Error::InvalidParameter("grid bounds and counts must have equal length".into()));
        }
        let spacing = lower
            .iter()
            .zip(upper)
            .zip(counts)
            .map(|((l, u), &c)| if c > 1 { (u - l) / (c - 1) as f64 } else { 0.0 })
            .collect();
        Self::new(lower.to_vec(), spacing, counts.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of the flat position `k`.
    pub fn index(&self, mut k: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for a in (0..self.dim()).rev() {
            idx[a] = k % self.counts[a];
            k /= self.counts[a];
        }
        idx
    }

    /// Coordinates of the flat position `k`.
    pub fn site(&self, k: usize) -> Vec<f64> {
        self.index(k)
            .iter()
            .enumerate()
            .map(|(a, &i)| self.origin[a] + i as f64 * self.spacing[a])
            .collect()
    }

    pub fn sites(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|k| self.site(k)).collect()
    }
}

/// Values on a grid together with the seed and a short description.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    pub grid: GridSpec,
    pub values: Vec<f64>,
    pub seed: u64,
    pub meta: String,
}

const MAGIC: &[u8; 4] = b"GFLD";
const VERSION: u32 = 1;

impl GridField {
    pub fn new(grid: GridSpec, values: Vec<f64>, seed: u64, meta: impl Into<String>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::DimensionMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid, values, seed, meta: meta.into() })
    }

    /// CSV with columns x1..xd,value and shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        let head: Vec<String> = (1..=d).map(|i| format!("x{i}")).chain(["value".to_string()]).collect();
        writeln!(w, "{}", head.join(","))?;
        for (k, v) in self.values.iter().enumerate() {
            let mut row: Vec<String> = self.grid.site(k).iter().map(|x| x.to_string()).collect();
            row.push(v.to_string());
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    /// Binary layout: magic "GFLD", u32 version, u32 dims, then per axis a u64
    /// count, then origin and spacing as f64 per axis, the u64 seed, and the
    /// values as f64 in row-major order. All little-endian.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&(self.grid.dim() as u32).to_le_bytes())?;
        for &c in &self.grid.counts {
            w.write_all(&(c as u64).to_le_bytes())?;
        }
        for x in self.grid.origin.iter().chain(&self.grid.spacing) {
            w.write_all(&x.to_le_bytes())?;
        }
        w.write_all(&self.seed.to_le_bytes())?;
        for v in &self.values {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads the layout written by [`GridField::write_binary`].
    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let mut b4 = [0u8; 4];
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b4).map_err(io)?;
        if &b4 != MAGIC {
            return Err(Error::Format("not a grid field file".into()));
        }
        r.read_exact(&mut b4).map_err(io)?;
        if u32::from_le_bytes(b4) != VERSION {
            return Err(Error::Format("unsupported grid field version".into()));
        }
        r.read_exact(&mut b4).map_err(io)?;
        let d = u32::from_le_bytes(b4) as usize;
        let mut counts = Vec::with_capacity(d);
        for _ in 0..d {
            r.read_exact(&mut b8).map_err(io)?;
            counts.push(u64::from_le_bytes(b8) as usize);
        }
        let mut read_f = |r: &mut R| -> Result<f64> {
            r.read_exact(&mut b8).map_err(io)?;
            Ok(f64::from_le_bytes(b8))
        };
        let origin = (0..d).map(|_| read_f(&mut r)).collect::<Result<Vec<_>>>()?;
        let spacing = (0..d).map(|_| read_f(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8).map_err(io)?;
        let seed = u64::from_le_bytes(b8);
        let grid = GridSpec::new(origin, spacing, counts)?;
        let mut values = Vec::with_capacity(grid.len());
        for _ in 0..grid.len() {
            r.read_exact(&mut b8).map_err(io)?;
            values.push(f64::from_le_bytes(b8));
        }
        Self::new(grid, values, seed, "binary")
    }
}
