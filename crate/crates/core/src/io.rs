//! CSV import/export: designs, candidate sets, moment matrices, graph data.
//!
//! The design format is a header `x1,...,xq` followed by one run per row of
//! decimal-point reals. Lines starting with `#` are comment metadata and are
//! skipped on read; writers emit them before the header.

use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graphs::{GraphData, GraphSeries};
use crate::model::{CandidateSet, Design};
use crate::region::Region;
use crate::scalar::Scalar;

/// Parse a design from CSV text. A header row of non-numeric fields is
/// accepted and checked only for column count; `snap` re-derives exact
/// sphere coordinates (see [`Design::snapped_to_sphere`]).
pub fn parse_design<S: Scalar>(text: &str, snap: Option<&Region<S>>) -> Result<Design<S>> {
    let mut rows: Vec<Vec<S>> = Vec::new();
    let mut width: Option<usize> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if let Some(w) = width {
            if fields.len() != w {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    w,
                    fields.len()
                )));
            }
        } else {
            width = Some(fields.len());
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(values) => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Parse(format!(
                        "line {}: non-finite coordinate",
                        lineno + 1
                    )));
                }
                rows.push(values.into_iter().map(S::of_f64).collect());
            }
            Err(_) => {
                if rows.is_empty() {
                    continue; // header row
                }
                return Err(Error::Parse(format!(
                    "line {}: expected numeric fields, got `{}`",
                    lineno + 1,
                    line
                )));
            }
        }
    }
    if rows.is_empty() {
        return Err(Error::Parse("no design rows found".into()));
    }
    let design = Design::from_rows(rows);
    Ok(match snap {
        Some(region) => design.snapped_to_sphere(region),
        None => design,
    })
}

/// Read a design CSV file.
pub fn read_design<S: Scalar>(path: &Path, snap: Option<&Region<S>>) -> Result<Design<S>> {
    let mut text = String::new();
    BufReader::new(File::open(path)?).read_to_string(&mut text)?;
    parse_design(&text, snap)
}

fn write_comments<W: Write>(out: &mut W, comments: &[(String, String)]) -> Result<()> {
    for (key, value) in comments {
        writeln!(out, "# {key}: {value}")?;
    }
    Ok(())
}

/// Write a design as CSV with optional `#` metadata comments. Coordinates
/// use the shortest representation that round-trips.
pub fn write_design<S: Scalar, W: Write>(
    out: &mut W,
    design: &Design<S>,
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(out, comments)?;
    let q = design.q();
    let header: Vec<String> = (1..=q).map(|i| format!("x{i}")).collect();
    writeln!(out, "{}", header.join(","))?;
    for pt in design.points() {
        let fields: Vec<String> = pt
            .coords()
            .iter()
            .map(|c| format!("{}", c.as_f64()))
            .collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Write the points of a candidate set in the design CSV format.
pub fn write_candidate_set<S: Scalar, W: Write>(
    out: &mut W,
    candidates: &CandidateSet<S>,
    comments: &[(String, String)],
) -> Result<()> {
    let design = Design::new(candidates.points().to_vec());
    write_design(out, &design, comments)
}

/// Export a matrix as CSV for audit.
pub fn write_matrix<S: Scalar, W: Write>(
    out: &mut W,
    m: &DMatrix<S>,
    comments: &[(String, String)],
) -> Result<()> {
    write_comments(out, comments)?;
    for i in 0..m.nrows() {
        let fields: Vec<String> = (0..m.ncols())
            .map(|j| format!("{:.16e}", m[(i, j)].as_f64()))
            .collect();
        writeln!(out, "{}", fields.join(","))?;
    }
    Ok(())
}

/// Significant digits carried by graph CSV values.
fn fmt10<S: Scalar>(v: S) -> String {
    format!("{:.9e}", v.as_f64())
}

/// Write a graph series as CSV: `#` metadata first, then `x,min,mean,max`
/// for the dispersion family (mean empty for cuboidal regions) or
/// `fraction,value` for the FDS family.
pub fn write_graph_series<S: Scalar, W: Write>(
    out: &mut W,
    series: &GraphSeries<S>,
    extra_comments: &[(String, String)],
) -> Result<()> {
    write_comments(out, &series.metadata)?;
    write_comments(out, extra_comments)?;
    match &series.data {
        GraphData::Dispersion(rows) => {
            writeln!(out, "x,min,mean,max")?;
            for row in rows {
                let mean = row.mean.map_or(String::new(), fmt10);
                writeln!(
                    out,
                    "{},{},{},{}",
                    fmt10(row.x),
                    fmt10(row.min),
                    mean,
                    fmt10(row.max)
                )?;
            }
        }
        GraphData::Fraction(rows) => {
            writeln!(out, "fraction,value")?;
            for (fraction, value) in rows {
                writeln!(out, "{},{}", fmt10(*fraction), fmt10(*value))?;
            }
        }
    }
    Ok(())
}

/// Read back one line per row of a two-column fraction CSV (testing aid).
pub fn read_fraction_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with("fraction") {
            continue;
        }
        let mut parts = line.split(',');
        let a = parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("bad fraction row `{line}`")))?;
        let b = parts
            .next()
            .and_then(|v| v.parse::<f64>().ok())
            .ok_or_else(|| Error::Parse(format!("bad fraction row `{line}`")))?;
        out.push((a, b));
    }
    Ok(out)
}
