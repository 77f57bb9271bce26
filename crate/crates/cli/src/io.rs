//! CSV input and output for the experiment bundle.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use stablegeo::grid::{GridField, GridSpec};
use stablegeo::kriging::EmpiricalBin;

/// Points with optional values, read from a CSV with header x1..xd[,value].
#[derive(Debug, Clone, PartialEq)]
pub struct PointTable {
    pub sites: Vec<Vec<f64>>,
    pub values: Option<Vec<f64>>,
}

fn reader(path: &Path) -> Result<csv::Reader<File>, String> {
    csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| format!("{}: {e}", path.display()))
}

fn number(s: &str, path: &Path, line: u64) -> Result<f64, String> {
    s.parse::<f64>()
        .map_err(|_| format!("{} line {line}: '{s}' is not a number", path.display()))
}

/// Numeric rows of a CSV with a header line.
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>, String> {
    let mut rdr = reader(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        rows.push(rec.iter().map(|s| number(s, path, line)).collect::<Result<Vec<_>, _>>()?);
    }
    Ok(rows)
}

pub fn read_points(path: &Path) -> Result<PointTable, String> {
    let mut rdr = reader(path)?;
    let header = rdr.headers().map_err(|e| format!("{}: {e}", path.display()))?.clone();
    let has_value = header.iter().next_back() == Some("value");
    let d = header.len() - usize::from(has_value);
    if d == 0 {
        return Err(format!("{}: no coordinate columns", path.display()));
    }
    let rows = read_table(path)?;
    let sites = rows.iter().map(|r| r[..d].to_vec()).collect();
    let values = has_value.then(|| rows.iter().map(|r| r[d]).collect());
    Ok(PointTable { sites, values })
}

/// Reads a field written by [`GridField::write_csv`]; the rows must cover a
/// regular lattice in row-major order.
pub fn read_grid_field(path: &Path) -> Result<GridField, String> {
    let t = read_points(path)?;
    let values = t.values.ok_or_else(|| format!("{}: missing 'value' column", path.display()))?;
    let d = t.sites.first().map_or(0, Vec::len);
    let mut axes: Vec<Vec<f64>> = vec![Vec::new(); d];
    for (a, axis) in axes.iter_mut().enumerate() {
        let mut v: Vec<f64> = t.sites.iter().map(|s| s[a]).collect();
        v.sort_by(|x, y| x.total_cmp(y));
        v.dedup();
        *axis = v;
    }
    let counts: Vec<usize> = axes.iter().map(Vec::len).collect();
    let lower: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let upper: Vec<f64> = axes.iter().map(|a| a[a.len() - 1]).collect();
    let grid = GridSpec::from_bounds(&lower, &upper, &counts).map_err(|e| e.to_string())?;
    if grid.len() != values.len() {
        return Err(format!("{}: {} rows do not form a full lattice", path.display(), values.len()));
    }
    for (k, s) in t.sites.iter().enumerate() {
        let g = grid.site(k);
        let tol = 1e-9 * (1.0 + s.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        if s.iter().zip(&g).any(|(x, y)| (x - y).abs() > tol) {
            return Err(format!("{}: row {} is not in row-major lattice order", path.display(), k + 1));
        }
    }
    GridField::new(grid, values, 0, format!("read from {}", path.display())).map_err(|e| e.to_string())
}

/// Reads the table written by `write_variogram_csv`; empty bins are skipped.
pub fn read_variogram(path: &Path) -> Result<Vec<EmpiricalBin>, String> {
    let mut rdr = reader(path)?;
    let mut bins = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| format!("{}: {e}", path.display()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 4 {
            return Err(format!("{} line {line}: expected h_center,gamma_hat,pair_count,direction_label", path.display()));
        }
        if rec[1].is_empty() {
            continue;
        }
        bins.push(EmpiricalBin {
            h_center: number(&rec[0], path, line)?,
            gamma_hat: number(&rec[1], path, line)?,
            pair_count: rec[2].parse().map_err(|_| format!("{} line {line}: bad pair count", path.display()))?,
            direction: rec[3].to_string(),
        });
    }
    Ok(bins)
}

pub fn create(path: &Path) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes header and rows of floats in shortest round-trip form.
pub fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(header)?;
    for r in rows {
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> std::io::Result<()> {
    let mut f = create(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()
}
