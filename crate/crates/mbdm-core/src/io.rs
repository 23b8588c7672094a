//! CSV interchange for datasets, samples and metric logs.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! write/read cycle reproduces values bit-for-bit.

use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::bridge::BridgeSet;
use crate::error::{Error, Result};
use crate::real::Real;
use crate::tensor::Tensor;

/// Write a plain matrix with `x0..x{d-1}` headers.
pub fn write_matrix_csv<T: Real>(path: &Path, data: &Tensor<T>) -> Result<()> {
    let mut out = String::new();
    let d = data.cols();
    for k in 0..d {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{k}");
    }
    out.push('\n');
    for i in 0..data.rows() {
        for (k, v) in data.row(i).iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a numeric CSV with a header row; returns (header, matrix).
pub fn read_matrix_csv<T: Real>(path: &Path) -> Result<(Vec<String>, Tensor<T>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::config(format!("cannot open {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let header: Vec<String> = match lines.next() {
        Some(h) => h?.split(',').map(|s| s.trim().to_string()).collect(),
        None => return Err(Error::config(format!("{}: empty file", path.display()))),
    };
    let width = header.len();
    let mut data: Vec<T> = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0;
        for field in line.split(',') {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::config(format!(
                    "{} line {}: '{}' is not a number",
                    path.display(),
                    lineno + 2,
                    field.trim()
                ))
            })?;
            data.push(T::of(v));
            count += 1;
        }
        if count != width {
            return Err(Error::config(format!(
                "{} line {}: {} fields, expected {}",
                path.display(),
                lineno + 2,
                count,
                width
            )));
        }
        rows += 1;
    }
    Ok((header, Tensor::from_vec(&[rows, width], data)?))
}

/// Write sample points with one membership column per constraint plus an
/// overall validity column: `x0..x{d-1}, member_<name>.., valid`.
pub fn write_samples_csv<T: Real>(
    path: &Path,
    rows: &[&[T]],
    bridges: &BridgeSet<T>,
) -> Result<()> {
    let mut out = String::new();
    let d = bridges
        .dim()
        .or_else(|| rows.first().map(|r| r.len()))
        .unwrap_or(0);
    for k in 0..d {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "x{k}");
    }
    for b in bridges.bridges() {
        let _ = write!(out, ",member_{}", b.name);
    }
    out.push_str(",valid\n");
    for row in rows {
        for (k, v) in row.iter().enumerate() {
            if k > 0 {
                out.push(',');
            }
            let _ = write!(out, "{v}");
        }
        let mut valid = true;
        for b in bridges.bridges() {
            let m = b.field.member(row);
            valid &= m;
            let _ = write!(out, ",{}", u8::from(m));
        }
        let _ = writeln!(out, ",{}", u8::from(valid));
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Columns of a sample CSV split back into coordinates and flags.
pub struct SampleCsv<T> {
    pub points: Tensor<T>,
    pub member_names: Vec<String>,
    pub members: Vec<Vec<bool>>,
    pub valid: Vec<bool>,
}

pub fn read_samples_csv<T: Real>(path: &Path) -> Result<SampleCsv<T>> {
    let (header, full) = read_matrix_csv::<T>(path)?;
    let d = header.iter().take_while(|h| h.starts_with('x')).count();
    let member_names: Vec<String> = header[d..]
        .iter()
        .filter(|h| h.starts_with("member_"))
        .map(|h| h["member_".len()..].to_string())
        .collect();
    if header.last().map(String::as_str) != Some("valid") {
        return Err(Error::config(format!(
            "{}: expected trailing 'valid' column",
            path.display()
        )));
    }
    let n = full.rows();
    let mut points = Tensor::zeros(&[n, d]);
    for i in 0..n {
        points.row_mut(i).copy_from_slice(&full.row(i)[..d]);
    }
    let members = (0..member_names.len())
        .map(|k| (0..n).map(|i| full.row(i)[d + k] != T::zero()).collect())
        .collect();
    let valid = (0..n)
        .map(|i| full.row(i)[header.len() - 1] != T::zero())
        .collect();
    Ok(SampleCsv {
        points,
        member_names,
        members,
        valid,
    })
}

/// Append-style metrics log: `iteration,train_loss,r_elbo`.
pub struct MetricsLog {
    file: std::fs::File,
}

impl MetricsLog {
    pub fn create(path: &Path) -> Result<Self> {
        let mut file = std::fs::File::create(path)?;
        writeln!(file, "iteration,train_loss,r_elbo")?;
        Ok(MetricsLog { file })
    }

    pub fn row(&mut self, iteration: u64, train_loss: f64, r_elbo: Option<f64>) -> Result<()> {
        match r_elbo {
            Some(r) => writeln!(self.file, "{iteration},{train_loss},{r}")?,
            None => writeln!(self.file, "{iteration},{train_loss},")?,
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bridge::{GammaSchedule, ManualBridge};
    use crate::constraint::Checkerboard;

    #[test]
    fn matrix_round_trip_is_bitwise() {
        let dir = std::env::temp_dir().join("mbdm_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.csv");
        let t = Tensor::from_vec(
            &[2, 3],
            vec![0.1, -2.5e-17, 3.0, f64::MIN_POSITIVE, 1e300, -0.0],
        )
        .unwrap();
        write_matrix_csv(&path, &t).unwrap();
        let (header, back) = read_matrix_csv::<f64>(&path).unwrap();
        assert_eq!(header, vec!["x0", "x1", "x2"]);
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn sample_csv_membership_columns_recompute() {
        let dir = std::env::temp_dir().join("mbdm_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.csv");
        let bridges = BridgeSet::combine(vec![ManualBridge::new(
            "checker",
            Box::new(Checkerboard::standard()),
            GammaSchedule::InverseSquared { scale: 1.0 },
        )])
        .unwrap();
        let pts: Vec<Vec<f64>> = vec![vec![0.5, 0.5], vec![1.5, 0.5]];
        let rows: Vec<&[f64]> = pts.iter().map(|r| r.as_slice()).collect();
        write_samples_csv(&path, &rows, &bridges).unwrap();
        let back = read_samples_csv::<f64>(&path).unwrap();
        assert_eq!(back.member_names, vec!["checker"]);
        assert_eq!(back.valid, vec![true, false]);
        let board = Checkerboard::standard();
        for i in 0..2 {
            let m = crate::constraint::DistanceField::<f64>::member(&board, back.points.row(i));
            assert_eq!(back.members[0][i], m);
        }
    }

    #[test]
    fn bad_csv_is_a_config_error() {
        let dir = std::env::temp_dir().join("mbdm_io_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.csv");
        std::fs::write(&path, "x0,x1\n1.0,notanumber\n").unwrap();
        let err = read_matrix_csv::<f64>(&path).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert!(err.to_string().contains("line 2"));
    }
}
