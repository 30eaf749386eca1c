//! CSV emission and read-back for kernels, solver traces, histograms,
//! energy curves, and result rows.
//!
//! All files are UTF-8, comma-separated, with a header row except for
//! kernel CSVs, which are bare row-major floats (one kernel row per
//! line) for easy inspection. Floats are written with Rust's default
//! shortest round-trip formatting, so read-back is exact.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::baseline::SolverTrace;
use crate::error::{DeconvError, Result};
use crate::kernel::Kernel;
use crate::metrics::GradientHistogram;

/// Schema version stamped into manifests next to the CSVs.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One grid-cell result: the seven-column row of the results table.
#[derive(Debug, Clone)]
pub struct ResultRow {
    pub image: String,
    pub kernel: String,
    pub method: String,
    pub seed: u64,
    pub psnr: f64,
    pub energy_final: f64,
    pub wall_seconds: f64,
}

pub const RESULT_ROW_HEADER: &str = "image,kernel,method,seed,psnr,energy_final,wall_seconds";

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.image,
            self.kernel,
            self.method,
            self.seed,
            self.psnr,
            self.energy_final,
            self.wall_seconds
        )
    }
}

pub fn write_result_rows<P: AsRef<Path>>(path: P, rows: &[ResultRow]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "{RESULT_ROW_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv_line())?;
    }
    w.flush()?;
    Ok(())
}

/// Row-major kernel dump, full float precision, no header.
pub fn write_kernel_csv<P: AsRef<Path>>(path: P, k: &Kernel) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in k.data().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a kernel CSV back. The center defaults to the geometric
/// center ((h-1)/2, (w-1)/2), matching every generated kernel.
pub fn read_kernel_csv<P: AsRef<Path>>(path: P) -> Result<Kernel> {
    let text = fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: std::result::Result<Vec<f64>, _> =
            line.split(',').map(|t| t.trim().parse::<f64>()).collect();
        let row = row.map_err(|e| {
            DeconvError::Parse(format!("kernel csv line {}: {e}", lineno + 1))
        })?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(DeconvError::Parse("ragged kernel csv".into()));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(DeconvError::Parse("empty kernel csv".into()));
    }
    let (h, w) = (rows.len(), rows[0].len());
    let data = ndarray::Array2::from_shape_vec((h, w), rows.concat()).unwrap();
    Kernel::new(data, ((h - 1) / 2, (w - 1) / 2))
}

/// `iter,objective,seconds` with cumulative wall time.
pub fn write_trace_csv<P: AsRef<Path>>(path: P, trace: &SolverTrace) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iter,objective,seconds")?;
    for (i, (obj, sec)) in trace.objectives.iter().zip(trace.seconds.iter()).enumerate() {
        writeln!(w, "{i},{obj},{sec}")?;
    }
    w.flush()?;
    Ok(())
}

/// Energy-only trace (DIKP runs have no per-iteration wall time).
pub fn write_energy_csv<P: AsRef<Path>>(path: P, energies: &[f64], stride: usize) -> Result<()> {
    let stride = stride.max(1);
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "iter,energy")?;
    for (i, e) in energies.iter().enumerate().step_by(stride) {
        writeln!(w, "{i},{e}")?;
    }
    w.flush()?;
    Ok(())
}

/// `bin_center,probability` over the 64 bins.
pub fn write_histogram_csv<P: AsRef<Path>>(path: P, h: &GradientHistogram) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "bin_center,probability")?;
    for (c, p) in h.bin_centers().iter().zip(h.probs().iter()) {
        writeln!(w, "{c},{p}")?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned energy curves: `iter,<label>...`, one column per target,
/// restricted to `[from, to)` when given.
pub fn write_curves_csv<P: AsRef<Path>>(
    path: P,
    curves: &[(String, Vec<f64>)],
    window: Option<(usize, usize)>,
) -> Result<()> {
    if curves.is_empty() {
        return Err(DeconvError::Invalid("no curves to write".into()));
    }
    let len = curves[0].1.len();
    if curves.iter().any(|(_, t)| t.len() != len) {
        return Err(DeconvError::ShapeMismatch("curves have unequal lengths".into()));
    }
    let (from, to) = window.unwrap_or((0, len));
    if from >= to || to > len {
        return Err(DeconvError::Invalid(format!(
            "window {from}..{to} outside 0..{len}"
        )));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    let labels: Vec<&str> = curves.iter().map(|(l, _)| l.as_str()).collect();
    writeln!(w, "iter,{}", labels.join(","))?;
    for i in from..to {
        let vals: Vec<String> = curves.iter().map(|(_, t)| format!("{}", t[i])).collect();
        writeln!(w, "{i},{}", vals.join(","))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{KernelKind, KernelSpec};

    #[test]
    fn kernel_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("k.csv");
        let k = KernelSpec::new(KernelKind::Gaussian).build().unwrap();
        write_kernel_csv(&path, &k).unwrap();
        let back = read_kernel_csv(&path).unwrap();
        assert_eq!(k.data(), back.data());
        assert_eq!(back.center(), (4, 4));
    }

    #[test]
    fn bad_kernel_csv_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.csv");
        std::fs::write(&p, "1.0,2.0\n3.0\n").unwrap();
        assert!(read_kernel_csv(&p).is_err());
        std::fs::write(&p, "").unwrap();
        assert!(read_kernel_csv(&p).is_err());
        std::fs::write(&p, "0.5,oops\n").unwrap();
        assert!(read_kernel_csv(&p).is_err());
    }

    #[test]
    fn result_row_has_seven_columns() {
        let row = ResultRow {
            image: "house".into(),
            kernel: "motion".into(),
            method: "dikp".into(),
            seed: 3,
            psnr: 24.5,
            energy_final: 1e-4,
            wall_seconds: 12.0,
        };
        assert_eq!(row.to_csv_line().split(',').count(), 7);
        assert_eq!(RESULT_ROW_HEADER.split(',').count(), 7);
    }

    #[test]
    fn curves_window() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("curves.csv");
        let curves = vec![
            ("a".to_string(), (0..300).map(|i| i as f64).collect::<Vec<_>>()),
            ("b".to_string(), (0..300).map(|i| 2.0 * i as f64).collect()),
        ];
        write_curves_csv(&p, &curves, Some((80, 200))).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "iter,a,b");
        assert_eq!(lines.len(), 1 + 120);
        assert!(lines[1].starts_with("80,"));
        assert!(write_curves_csv(&p, &curves, Some((200, 80))).is_err());
    }
}
