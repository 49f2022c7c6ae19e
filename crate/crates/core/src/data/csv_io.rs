//! CSV format: header `t,dim_0,...,dim_{N-1}`, one row per step, `t`
//! consecutive integers, an empty field marks a missing value. Values are
//! written with 17 significant digits so files round-trip bit-exactly.
//!
//! The mask sidecar `<name>.mask.csv` has the same header and shape with
//! `1` for observed and `0` for removed cells.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::fmt::fmt17;

fn header(dims: usize) -> Vec<String> {
    std::iter::once("t".to_string())
        .chain((0..dims).map(|d| format!("dim_{d}")))
        .collect()
}

pub fn read_csv<R: Read>(reader: R) -> Result<TimeSeries> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let head = rdr
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            msg: e.to_string(),
        })?
        .clone();
    if head.is_empty() || &head[0] != "t" {
        return Err(Error::Parse {
            row: 0,
            msg: "header must start with `t`".into(),
        });
    }
    let dims = head.len() - 1;
    if dims == 0 {
        return Err(Error::Parse {
            row: 0,
            msg: "no data columns".into(),
        });
    }
    for (d, name) in head.iter().skip(1).enumerate() {
        if name != format!("dim_{d}") {
            return Err(Error::Parse {
                row: 0,
                msg: format!("column {} is `{name}`, expected `dim_{d}`", d + 1),
            });
        }
    }
    let mut rows = Vec::new();
    let mut start = 0i64;
    let mut prev: Option<i64> = None;
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            msg: e.to_string(),
        })?;
        if rec.len() != dims + 1 {
            return Err(Error::Parse {
                row,
                msg: format!("{} fields, expected {}", rec.len(), dims + 1),
            });
        }
        let t: i64 = rec[0].parse().map_err(|_| Error::Parse {
            row,
            msg: format!("bad time index `{}`", &rec[0]),
        })?;
        match prev {
            None => start = t,
            Some(p) if t != p + 1 => {
                return Err(Error::Parse {
                    row,
                    msg: format!("time index {t} does not follow {p}"),
                });
            }
            _ => {}
        }
        prev = Some(t);
        let cells = rec
            .iter()
            .skip(1)
            .enumerate()
            .map(|(d, f)| {
                if f.is_empty() {
                    return Ok(None);
                }
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Some(v)),
                    _ => Err(Error::Parse {
                        row,
                        msg: format!("dim_{d}: `{f}` is not a finite number"),
                    }),
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(cells);
    }
    Ok(TimeSeries::from_rows(&rows, dims)?.with_start(start))
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<TimeSeries> {
    read_csv(File::open(path)?)
}

pub fn write_csv<W: Write>(series: &TimeSeries, mut w: W) -> Result<()> {
    writeln!(w, "{}", header(series.dims()).join(","))?;
    for t in 0..series.steps() {
        let mut line = (series.start() + t as i64).to_string();
        for d in 0..series.dims() {
            line.push(',');
            if let Some(v) = series.get(t, d) {
                line.push_str(&fmt17(v));
            }
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(series, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

/// `data/node_000.csv` -> `data/node_000.mask.csv`
pub fn mask_path(path: impl AsRef<Path>) -> PathBuf {
    let path = path.as_ref();
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!("{stem}.mask.csv"))
}

pub fn save_mask_csv(series: &TimeSeries, path: impl AsRef<Path>) -> Result<()> {
    let mut out = header(series.dims()).join(",");
    out.push('\n');
    for t in 0..series.steps() {
        out.push_str(&(series.start() + t as i64).to_string());
        for d in 0..series.dims() {
            out.push_str(if series.is_observed(t, d) { ",1" } else { ",0" });
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Reads a mask sidecar as a row-major observed grid.
pub fn load_mask_csv(path: impl AsRef<Path>) -> Result<Vec<Vec<bool>>> {
    let s = read_csv(File::open(path)?)?;
    (0..s.steps())
        .map(|t| {
            s.row(t)
                .into_iter()
                .map(|v| match v {
                    Some(1.0) => Ok(true),
                    Some(0.0) => Ok(false),
                    _ => Err(Error::Parse {
                        row: t + 1,
                        msg: "mask cells must be 0 or 1".into(),
                    }),
                })
                .collect()
        })
        .collect()
}
