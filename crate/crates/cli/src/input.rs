//! Text input files: one record per line, whitespace-separated reals, `#`
//! starts a comment.

use std::path::Path;

use anyhow::{bail, Context, Result};
use sphex::sampling::UNIT_NORM_TOL;
use sphex::SampleSet;

/// Parsed records with the 1-based line number each came from.
#[derive(Debug)]
pub struct Records {
    pub lines: Vec<usize>,
    pub values: Vec<Vec<f64>>,
}

pub fn read_records(path: &Path, arity: usize, what: &str) -> Result<Records> {
    let text = std::fs::read_to_string(path).map_err(|e| sphex::Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    parse_records(&text, arity, what).with_context(|| format!("{}", path.display()))
}

pub fn parse_records(text: &str, arity: usize, what: &str) -> Result<Records> {
    let mut out = Records {
        lines: Vec::new(),
        values: Vec::new(),
    };
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let n = i + 1;
        let vals = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .with_context(|| format!("line {n}: cannot parse {tok:?} as a finite real"))
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != arity {
            bail!(
                "line {n}: expected {arity} values per {what}, found {}",
                vals.len()
            );
        }
        out.lines.push(n);
        out.values.push(vals);
    }
    if out.values.is_empty() {
        bail!("no {what} records found");
    }
    Ok(out)
}

/// Builds a point set from the first `d` entries of each record, rejecting
/// points off the unit sphere by line number.
pub fn to_points(records: &Records, d: usize) -> Result<SampleSet> {
    let mut coords = Vec::with_capacity(records.values.len() * d);
    for (vals, &n) in records.values.iter().zip(&records.lines) {
        let p = &vals[..d];
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(sphex::Error::InputData(format!(
                "line {n}: point has norm {norm}, not within {UNIT_NORM_TOL:e} of 1"
            ))
            .into());
        }
        coords.extend_from_slice(p);
    }
    Ok(SampleSet::from_coords(d, coords)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_blank_lines() {
        let r = parse_records("# header\n\n1 0 0 # x axis\n0 1 0\n", 3, "point").unwrap();
        assert_eq!(r.lines, vec![3, 4]);
        assert_eq!(r.values[1], vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let e = parse_records("1 0 0\n1 0\n", 3, "point")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 2"), "{e}");
        let e = parse_records("1 0 x\n", 3, "point")
            .unwrap_err()
            .to_string();
        assert!(e.contains("line 1"), "{e}");
        assert!(parse_records("# nothing\n", 3, "point").is_err());
    }

    #[test]
    fn off_sphere_point_is_rejected() {
        let r = parse_records("1 0\n0.6 0.9\n", 2, "point").unwrap();
        let e = to_points(&r, 2).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }
}
