//! File layouts for grid-sampled vector fields.
//!
//! Binary (`.fbg`), little endian:
//!
//! ```text
//! magic  "FBGRID01"         8 bytes
//! d      u32
//! n      u32                points per axis
//! L      f64                half-width of [-L, L]^d
//! k      u32                values per point: d, or d + d² with the Jacobian
//! data   f64 × n^d × k      row-major points, values interleaved per point
//! ```
//!
//! CSV: a first line `d,n,L`, then one line of `d` comma-separated values per
//! point in row-major order. Lines starting with `#` are ignored.

use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::grid::{BoxGrid, VectorField};

const MAGIC: &[u8; 8] = b"FBGRID01";

/// Writes samples and optional Jacobian samples in the binary layout.
pub fn write_grid_binary(
    path: &Path,
    values: &VectorField,
    jacobian: Option<&[Vec<f64>]>,
) -> Result<()> {
    let grid = &values.grid;
    let d = grid.dim();
    let k = d + jacobian.map_or(0, |j| j.len());
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(d as u32).to_le_bytes())?;
    w.write_all(&(grid.points() as u32).to_le_bytes())?;
    w.write_all(&grid.half_width().to_le_bytes())?;
    w.write_all(&(k as u32).to_le_bytes())?;
    for flat in 0..grid.len() {
        for c in &values.components {
            w.write_all(&c[flat].to_le_bytes())?;
        }
        if let Some(jac) = jacobian {
            for c in jac {
                w.write_all(&c[flat].to_le_bytes())?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub type GridSamples = (VectorField, Option<Vec<Vec<f64>>>);

pub fn read_grid_binary(path: &Path) -> Result<GridSamples> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: bad magic", path.display())));
    }
    let mut u4 = [0u8; 4];
    let mut f8 = [0u8; 8];
    r.read_exact(&mut u4)?;
    let d = u32::from_le_bytes(u4) as usize;
    r.read_exact(&mut u4)?;
    let n = u32::from_le_bytes(u4) as usize;
    r.read_exact(&mut f8)?;
    let l = f64::from_le_bytes(f8);
    r.read_exact(&mut u4)?;
    let k = u32::from_le_bytes(u4) as usize;
    if k != d && k != d + d * d {
        return Err(Error::Format(format!("{}: {k} values per point for d={d}", path.display())));
    }
    let grid = BoxGrid::new(d, l, n)?;
    let mut values = VectorField::zeros(&grid);
    let mut jac = (k > d).then(|| vec![vec![0.0; grid.len()]; d * d]);
    let mut buf = vec![0u8; 8 * k];
    for flat in 0..grid.len() {
        r.read_exact(&mut buf)
            .map_err(|e| Error::Format(format!("{}: truncated data: {e}", path.display())))?;
        let val = |i: usize| f64::from_le_bytes(buf[8 * i..8 * i + 8].try_into().unwrap());
        for (c, comp) in values.components.iter_mut().enumerate() {
            comp[flat] = val(c);
        }
        if let Some(jac) = jac.as_mut() {
            for (c, comp) in jac.iter_mut().enumerate() {
                comp[flat] = val(d + c);
            }
        }
    }
    if r.read(&mut [0u8; 1])? != 0 {
        return Err(Error::Format(format!("{}: trailing bytes", path.display())));
    }
    Ok((values, jac))
}

pub fn write_grid_csv(path: &Path, values: &VectorField) -> Result<()> {
    let grid = &values.grid;
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{},{},{}", grid.dim(), grid.points(), grid.half_width())?;
    for flat in 0..grid.len() {
        let row: Vec<String> = values.components.iter().map(|c| format!("{:e}", c[flat])).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_grid_csv(path: &Path) -> Result<VectorField> {
    let r = BufReader::new(std::fs::File::open(path)?);
    let bad = |msg: String| Error::Format(format!("{}: {msg}", path.display()));
    let mut lines = r
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.starts_with('#')));
    let (_, header) = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let header = header?;
    let parts: Vec<&str> = header.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(bad(format!("header `{header}` is not `d,n,L`")));
    }
    let d: usize = parts[0].parse().map_err(|_| bad("bad d".into()))?;
    let n: usize = parts[1].parse().map_err(|_| bad("bad n".into()))?;
    let l: f64 = parts[2].parse().map_err(|_| bad("bad L".into()))?;
    let grid = BoxGrid::new(d, l, n)?;
    let mut values = VectorField::zeros(&grid);
    let mut flat = 0;
    for (lineno, line) in lines {
        let line = line?;
        if flat >= grid.len() {
            return Err(bad(format!("extra row at line {}", lineno + 1)));
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(format!("line {}: {e}", lineno + 1)))?;
        if row.len() != d {
            return Err(bad(format!("line {}: expected {d} values", lineno + 1)));
        }
        for (c, v) in row.into_iter().enumerate() {
            values.components[c][flat] = v;
        }
        flat += 1;
    }
    if flat != grid.len() {
        return Err(bad(format!("expected {} rows, found {flat}", grid.len())));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_field() -> VectorField {
        let g = BoxGrid::new(3, 1.5, 4).unwrap();
        let mut v = VectorField::zeros(&g);
        for flat in 0..g.len() {
            let x = g.position(flat);
            for k in 0..3 {
                v.components[k][flat] = x[k] * (k as f64 + 1.0) - 0.1 * flat as f64;
            }
        }
        v
    }

    #[test]
    fn binary_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.fbg");
        let v = sample_field();
        let jac: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64; v.grid.len()]).collect();
        write_grid_binary(&p, &v, Some(&jac)).unwrap();
        let (back, j) = read_grid_binary(&p).unwrap();
        assert_eq!(back, v);
        assert_eq!(j.unwrap(), jac);
        write_grid_binary(&p, &v, None).unwrap();
        assert!(read_grid_binary(&p).unwrap().1.is_none());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.csv");
        let v = sample_field();
        write_grid_csv(&p, &v).unwrap();
        assert_eq!(read_grid_csv(&p).unwrap(), v);
    }

    #[test]
    fn truncated_files_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("b.fbg");
        write_grid_binary(&p, &sample_field(), None).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_grid_binary(&p), Err(Error::Format(_))));
        std::fs::write(&p, b"NOTAGRID").unwrap();
        assert!(read_grid_binary(&p).is_err());
    }
}
