use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::numerics::Tensor2;

fn parse_err<T>(line: usize, msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse { line, msg: msg.into() })
}

/// Parses numeric CSV text. A first line with no numeric cells is a header.
/// Features are min-max scaled per column; labels are remapped to `0..K` in sorted order.
pub fn parse_csv(text: &str, name: &str, has_labels: bool) -> Result<Dataset> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    let mut first = true;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = cells.iter().map(|c| c.parse::<f64>().ok()).collect();
        if first && parsed.iter().all(Option::is_none) {
            first = false;
            width = Some(cells.len());
            continue;
        }
        first = false;
        if let Some(w) = width {
            if cells.len() != w {
                return parse_err(line_no, format!("expected {w} fields, found {}", cells.len()));
            }
        } else {
            width = Some(cells.len());
        }
        let mut row = Vec::with_capacity(cells.len());
        for (c, v) in cells.iter().zip(&parsed) {
            match v {
                Some(v) if v.is_finite() => row.push(*v),
                _ => return parse_err(line_no, format!("non-numeric cell {c:?}")),
            }
        }
        rows.push(row);
    }
    let width = width.unwrap_or(0);
    let n_features = if has_labels {
        if width < 2 {
            return parse_err(1, "labelled CSV needs at least one feature column");
        }
        width - 1
    } else {
        width
    };

    let labels = if has_labels {
        let raw: Vec<i64> = rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let v = r[n_features];
                if v.fract() != 0.0 {
                    return parse_err(i + 1, format!("label {v} is not an integer"));
                }
                Ok(v as i64)
            })
            .collect::<Result<_>>()?;
        let mut ids: BTreeMap<i64, usize> = raw.iter().map(|&v| (v, 0)).collect();
        for (rank, id) in ids.values_mut().enumerate() {
            *id = rank;
        }
        Some(raw.iter().map(|v| ids[v]).collect())
    } else {
        None
    };

    let mut x = Tensor2::zeros(rows.len(), n_features);
    for c in 0..n_features {
        let (lo, hi) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r[c]), hi.max(r[c])));
        let range = hi - lo;
        for (r, row) in rows.iter().enumerate() {
            let v = if range > 0.0 { ((row[c] - lo) / range).clamp(0.0, 1.0) } else { 0.0 };
            x.set(r, c, v);
        }
    }
    Dataset::new(name, x, labels)
}

pub fn load_csv(path: &Path, has_labels: bool) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv");
    parse_csv(&text, name, has_labels)
}

/// One row per example, label last when present. Values use round-trip formatting.
pub fn to_csv_string(data: &Dataset) -> String {
    let mut out = String::new();
    for (r, row) in data.x.row_iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            write!(out, "{v}").unwrap();
        }
        if let Some(l) = &data.labels {
            write!(out, ",{}", l[r]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub fn save_csv(data: &Dataset, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv_string(data))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scales_two_rows() {
        let d = parse_csv("0,0,0\n1,1,1", "t", true).unwrap();
        assert_eq!(d.x.data(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(d.labels, Some(vec![0, 1]));
    }

    #[test]
    fn single_row_is_constant() {
        let d = parse_csv("3,-2,7\n", "t", false).unwrap();
        assert_eq!(d.x.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn header_is_skipped() {
        let d = parse_csv("a,b,label\n0,2,5\n1,4,9\n", "t", true).unwrap();
        assert_eq!(d.x.data(), &[0.0, 0.0, 1.0, 1.0]);
        assert_eq!(d.labels, Some(vec![0, 1]));
    }

    #[test]
    fn ragged_row_reports_line() {
        match parse_csv("0,1\n1,2\n\n3\n", "t", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_numeric_reports_line() {
        match parse_csv("0,1\n1,x\n", "t", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn labels_are_remapped() {
        let d = parse_csv("0,10\n1,-3\n2,10\n", "t", true).unwrap();
        assert_eq!(d.labels, Some(vec![1, 0, 1]));
    }

    #[test]
    fn round_trip_is_exact() {
        let d = parse_csv("0.1,5,2\n0.7,3,0\n0.3,4,1\n", "t", true).unwrap();
        let again = parse_csv(&to_csv_string(&d), "t", true).unwrap();
        assert_eq!(d.x, again.x);
        assert_eq!(d.labels, again.labels);
    }
}
