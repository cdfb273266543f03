//! Plain-text measure files: one atom per line, `d` coordinates followed by
//! the weight, whitespace separated. `#` starts a comment.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::{stable_sum, DiscreteMeasure, MASS_TOL};

/// Weight sums within this distance of one are renormalized on load.
pub const LOAD_TOL: f64 = 1e-6;

pub fn parse_measure(text: &str) -> Result<DiscreteMeasure> {
    let mut dim = None;
    let mut coords = Vec::new();
    let mut weights = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let fields = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
        if fields.len() < 2 {
            return Err(Error::Parse { line: n + 1, msg: "need coordinates and a weight".into() });
        }
        let d = *dim.get_or_insert(fields.len() - 1);
        if fields.len() - 1 != d {
            return Err(Error::Parse {
                line: n + 1,
                msg: format!("expected {d} coordinates, found {}", fields.len() - 1),
            });
        }
        coords.extend_from_slice(&fields[..d]);
        weights.push(fields[d]);
    }
    let dim = dim.ok_or_else(|| Error::InvalidMeasure("file contains no atoms".into()))?;
    if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
        return Err(Error::InvalidMeasure(format!("weight {w} is not positive")));
    }
    let total = stable_sum(weights.iter().copied());
    if (total - 1.0).abs() > LOAD_TOL {
        return Err(Error::InvalidMeasure(format!("weights sum to {total}, not within {LOAD_TOL} of 1")));
    }
    if (total - 1.0).abs() > MASS_TOL {
        for w in &mut weights {
            *w /= total;
        }
    }
    DiscreteMeasure::new(dim, coords, weights)
}

pub fn load_measure(path: &Path) -> Result<DiscreteMeasure> {
    parse_measure(&fs::read_to_string(path)?)
}

/// Serialize with one `# key = value` comment line per header entry.
/// Floats use the shortest representation that reads back bit-identically.
pub fn format_measure(measure: &DiscreteMeasure, header: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in header {
        let _ = writeln!(out, "# {k} = {v}");
    }
    for (i, a) in measure.atoms().enumerate() {
        for c in a {
            let _ = write!(out, "{c:?} ");
        }
        let _ = writeln!(out, "{:?}", measure.weight(i));
    }
    out
}

pub fn save_measure(path: &Path, measure: &DiscreteMeasure, header: &[(String, String)]) -> Result<()> {
    fs::write(path, format_measure(measure, header))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_renormalizes() {
        let m = parse_measure("# header\n0.0 0.5000001\n\n1.0 0.5 # trailing\n").unwrap();
        assert_eq!(m.len(), 2);
        assert!((m.weight(0) + m.weight(1) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_far_from_one() {
        assert!(parse_measure("0 0.5\n1 0.4\n").is_err());
    }

    #[test]
    fn rejects_ragged_lines() {
        let err = parse_measure("0 0 0.5\n1 0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn round_trip_is_exact() {
        let m = DiscreteMeasure::new(2, vec![0.1, 1.0 / 3.0, 2.0 / 3.0, 0.7], vec![0.2, 0.8]).unwrap();
        let text = format_measure(&m, &[("depth".into(), "1".into())]);
        assert!(text.starts_with("# depth = 1\n"));
        assert_eq!(parse_measure(&text).unwrap(), m);
    }
}
