use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use super::{CoverageReport, WidthSeries};
use crate::{Error, Result};

pub const COVERAGE_HEADER: [&str; 6] = ["method", "target", "alpha", "timestep_s", "coordinate", "coverage"];
pub const SUMMARY_HEADER: [&str; 6] = ["method", "target", "alpha", "mean", "std", "median"];
pub const WIDTH_HEADER: [&str; 6] = ["method", "target", "alpha", "timestep_s", "width_kind", "width"];

/// 17 significant digits: parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CoverageRow {
    pub method: String,
    pub target: String,
    pub alpha: f64,
    pub timestep_s: f64,
    /// Bin index, or `all` for ellipsoids.
    pub coordinate: String,
    pub coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SummaryRow {
    pub method: String,
    pub target: String,
    pub alpha: f64,
    pub mean: f64,
    pub std: f64,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct WidthRow {
    pub method: String,
    pub target: String,
    pub alpha: f64,
    pub timestep_s: f64,
    pub width_kind: String,
    pub width: f64,
}

fn writer<W: Write>(out: W, header: &[&str]) -> Result<csv::Writer<W>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    w.write_record(header)?;
    Ok(w)
}

pub fn write_coverage_csv<W: Write>(out: W, reports: &[CoverageReport]) -> Result<()> {
    let mut w = writer(out, &COVERAGE_HEADER)?;
    for r in reports {
        let single = r.target.uses_ellipsoid();
        for (t, time) in r.times.iter().enumerate() {
            for c in 0..r.cells.ncols() {
                let coord = if single { "all".to_string() } else { c.to_string() };
                w.write_record([
                    r.method.to_string(),
                    r.target.to_string(),
                    fmt_f64(r.alpha),
                    fmt_f64(*time),
                    coord,
                    fmt_f64(r.cells[(t, c)]),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_csv<W: Write>(out: W, reports: &[CoverageReport]) -> Result<()> {
    let mut w = writer(out, &SUMMARY_HEADER)?;
    for r in reports {
        let s = r.summary();
        w.write_record([
            r.method.to_string(),
            r.target.to_string(),
            fmt_f64(r.alpha),
            fmt_f64(s.mean),
            fmt_f64(s.std),
            fmt_f64(s.median),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_width_csv<W: Write>(out: W, series: &[WidthSeries]) -> Result<()> {
    let mut w = writer(out, &WIDTH_HEADER)?;
    for s in series {
        for (time, v) in s.times.iter().zip(&s.values) {
            w.write_record([
                s.method.to_string(),
                s.target.to_string(),
                fmt_f64(s.alpha),
                fmt_f64(*time),
                s.kind.to_string(),
                fmt_f64(*v),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_rows<R: Read, T: serde::de::DeserializeOwned>(input: R, header: &[&str]) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_reader(input);
    let got: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if got != header {
        return Err(Error::Format(format!("unexpected CSV header {got:?}")));
    }
    Ok(r.deserialize().collect::<std::result::Result<Vec<T>, _>>()?)
}

pub fn read_coverage_csv<R: Read>(input: R) -> Result<Vec<CoverageRow>> {
    read_rows(input, &COVERAGE_HEADER)
}

pub fn read_summary_csv<R: Read>(input: R) -> Result<Vec<SummaryRow>> {
    read_rows(input, &SUMMARY_HEADER)
}

pub fn read_width_csv<R: Read>(input: R) -> Result<Vec<WidthRow>> {
    read_rows(input, &WIDTH_HEADER)
}

/// Writes `f`'s output to `path`, creating parent directories.
pub fn write_file(path: impl AsRef<Path>, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut buf = Vec::new();
    f(&mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::{CpMethod, UqTarget};
    use crate::metrics::WidthKind;
    use nalgebra::DMatrix;

    fn report(target: UqTarget, cols: usize) -> CoverageReport {
        CoverageReport {
            method: CpMethod::Split,
            target,
            alpha: 0.05,
            times: vec![0.0, 10.0],
            cells: DMatrix::from_fn(2, cols, |t, c| 1.0 - 0.1 / (1.0 + (t * cols + c) as f64 / 3.0)),
            n_test: 7,
            n_excluded: 0,
        }
    }

    #[test]
    fn empty_inputs_give_header_only_files() {
        let mut buf = Vec::new();
        write_width_csv(&mut buf, &[]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "method,target,alpha,timestep_s,width_kind,width\n");
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &[]).unwrap();
        assert!(read_summary_csv(buf.as_slice()).unwrap().is_empty());
    }

    #[test]
    fn summary_round_trip_is_bitwise() {
        let reps = vec![report(UqTarget::EndToEnd, 5), report(UqTarget::LatentDynamics, 1)];
        let mut buf = Vec::new();
        write_summary_csv(&mut buf, &reps).unwrap();
        let rows = read_summary_csv(buf.as_slice()).unwrap();
        for (row, rep) in rows.iter().zip(&reps) {
            let s = rep.summary();
            assert_eq!(row.mean.to_bits(), s.mean.to_bits());
            assert_eq!(row.std.to_bits(), s.std.to_bits());
            assert_eq!(row.median.to_bits(), s.median.to_bits());
            assert_eq!(row.alpha, 0.05);
            assert_eq!(row.method, "split");
        }
    }

    #[test]
    fn coverage_rows_recover_the_cell_table() {
        let rep = report(UqTarget::Reconstruction, 3);
        let mut buf = Vec::new();
        write_coverage_csv(&mut buf, &[rep.clone(), report(UqTarget::LatentDynamics, 1)]).unwrap();
        let rows = read_coverage_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.len(), 6 + 2);
        assert_eq!(rows[4].coordinate, "1");
        assert_eq!(rows[4].timestep_s, 10.0);
        assert_eq!(rows[4].coverage.to_bits(), rep.cells[(1, 1)].to_bits());
        assert_eq!(rows[7].coordinate, "all");
    }

    #[test]
    fn width_rows_round_trip() {
        let s = WidthSeries {
            method: CpMethod::CvPlus { k: 20 },
            target: UqTarget::LatentDynamics,
            alpha: 0.01,
            kind: WidthKind::EllipsoidVolume,
            times: vec![0.0, 10.0, 20.0],
            values: vec![1.0 / 3.0, 2.5e-300, 7.0],
        };
        let mut buf = Vec::new();
        write_width_csv(&mut buf, &[s.clone()]).unwrap();
        let rows = read_width_csv(buf.as_slice()).unwrap();
        assert_eq!(rows.iter().map(|r| r.width).collect::<Vec<_>>(), s.values);
        assert_eq!(rows[0].width_kind, "ellipsoid_volume");
        assert_eq!(rows[0].method, "cv_plus");
    }

    #[test]
    fn wrong_header_is_a_format_error() {
        assert!(matches!(read_summary_csv("a,b\n1,2\n".as_bytes()), Err(Error::Format(_))));
    }
}
