use std::fmt::Write as _;

use nalgebra::DMatrix;

use super::Dataset;
use crate::error::{Error, Result};

fn to_text(bytes: &[u8]) -> Result<&str> {
    std::str::from_utf8(bytes).map_err(|e| Error::parse(0, format!("invalid utf-8: {e}")))
}

fn parse_number(tok: &str, line: usize, what: &str) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(line, format!("invalid {what} `{tok}`")))?;
    if !v.is_finite() {
        return Err(Error::parse(line, format!("non-finite {what} `{tok}`")));
    }
    Ok(v)
}

/// Remaps raw labels to contiguous indices, ordered by ascending label value.
fn remap_labels(raw: &[f64]) -> (Vec<usize>, Vec<f64>) {
    let mut values: Vec<f64> = raw.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let labels = raw
        .iter()
        .map(|v| values.binary_search_by(|p| p.total_cmp(v)).expect("label present"))
        .collect();
    (labels, values)
}

/// Parses LIBSVM sparse text: `<label> <idx>:<val> ...` with 1-based,
/// strictly increasing indices. Absent entries are zero and the width is
/// the largest index seen.
pub fn parse_libsvm(bytes: &[u8], name: &str) -> Result<Dataset> {
    let text = to_text(bytes)?;
    let mut raw_labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut width = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut toks = line.split_whitespace();
        let label = parse_number(toks.next().expect("nonempty line"), lineno, "label")?;
        let mut entries = Vec::new();
        let mut last = 0usize;
        for tok in toks {
            let (idx, val) = tok
                .split_once(':')
                .ok_or_else(|| Error::parse(lineno, format!("expected idx:val, got `{tok}`")))?;
            let idx: usize = idx
                .parse()
                .map_err(|_| Error::parse(lineno, format!("invalid index `{idx}`")))?;
            if idx == 0 {
                return Err(Error::parse(lineno, "indices are 1-based"));
            }
            if idx <= last {
                return Err(Error::parse(lineno, format!("index {idx} not increasing after {last}")));
            }
            last = idx;
            entries.push((idx - 1, parse_number(val, lineno, "value")?));
        }
        width = width.max(last);
        raw_labels.push(label);
        rows.push(entries);
    }
    if rows.is_empty() {
        return Err(Error::EmptyInput);
    }
    if width == 0 {
        return Err(Error::parse(0, "no feature columns"));
    }
    let mut features = DMatrix::zeros(rows.len(), width);
    for (i, entries) in rows.iter().enumerate() {
        for &(j, v) in entries {
            features[(i, j)] = v;
        }
    }
    let (labels, values) = remap_labels(&raw_labels);
    Dataset::new(name, features, labels, values)
}

/// Headerless CSV: `label,f1,...,fd` per line.
pub fn parse_csv(bytes: &[u8], name: &str) -> Result<Dataset> {
    let text = to_text(bytes)?;
    let mut raw_labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        raw_labels.push(parse_number(fields.next().expect("nonempty"), lineno, "label")?);
        let before = values.len();
        for f in fields {
            values.push(parse_number(f, lineno, "value")?);
        }
        let w = values.len() - before;
        match width {
            None => width = Some(w),
            Some(prev) if prev != w => {
                return Err(Error::parse(lineno, format!("expected {prev} features, got {w}")))
            }
            _ => {}
        }
    }
    let width = width.ok_or(Error::EmptyInput)?;
    if width == 0 {
        return Err(Error::parse(0, "no feature columns"));
    }
    let features = DMatrix::from_row_slice(raw_labels.len(), width, &values);
    let (labels, classes) = remap_labels(&raw_labels);
    Dataset::new(name, features, labels, classes)
}

fn fmt_label(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:?}")
    }
}

/// Writes the dataset as LIBSVM text. Zeros are omitted except the last
/// column, which is always written so the width survives a round trip.
pub fn to_libsvm(ds: &Dataset) -> String {
    let mut out = String::new();
    let d = ds.dim();
    for (i, row) in ds.features.row_iter().enumerate() {
        out.push_str(&fmt_label(ds.label_values[ds.labels[i]]));
        for (j, &v) in row.iter().enumerate() {
            if v != 0.0 || j + 1 == d {
                let _ = write!(out, " {}:{v:?}", j + 1);
            }
        }
        out.push('\n');
    }
    out
}

pub fn to_csv(ds: &Dataset) -> String {
    let mut out = String::new();
    for (i, row) in ds.features.row_iter().enumerate() {
        out.push_str(&fmt_label(ds.label_values[ds.labels[i]]));
        for v in row.iter() {
            let _ = write!(out, ",{v:?}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_two_rows() {
        let ds = parse_libsvm(b"+1 1:0.5 3:2.0\n-1 2:1.0", "t").unwrap();
        assert_eq!(ds.features, DMatrix::from_row_slice(2, 3, &[0.5, 0.0, 2.0, 0.0, 1.0, 0.0]));
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.label_values, vec![-1.0, 1.0]);
        assert_eq!(ds.class_count, 2);
    }

    #[test]
    fn single_explicit_zero() {
        let ds = parse_libsvm(b"1 1:0.0", "t").unwrap();
        assert_eq!(ds.features, DMatrix::from_element(1, 1, 0.0));
        assert_eq!(ds.labels, vec![0]);
    }

    #[test]
    fn rejects_decreasing_indices() {
        let err = parse_libsvm(b"1 2:1 1:1", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }), "{err}");
    }

    #[test]
    fn malformed_reports_line() {
        let err = parse_libsvm(b"1 1:1\n\n2 3-4\n", "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(matches!(parse_libsvm(b"x 1:1", "t"), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(parse_libsvm(b"1 0:1", "t"), Err(Error::Parse { .. })));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(parse_libsvm(b"", "t"), Err(Error::EmptyInput)));
        assert!(matches!(parse_libsvm(b"\n  \n", "t"), Err(Error::EmptyInput)));
    }

    #[test]
    fn multi_class_labels_sorted() {
        let ds = parse_libsvm(b"26 1:1\n3 1:2\n1 1:3\n3 1:4", "t").unwrap();
        assert_eq!(ds.labels, vec![2, 1, 0, 1]);
        assert_eq!(ds.label_values, vec![1.0, 3.0, 26.0]);
    }

    #[test]
    fn csv_variant() {
        let ds = parse_csv(b"1,0.5,2\n0,1,-1\n", "c").unwrap();
        assert_eq!(ds.features, DMatrix::from_row_slice(2, 2, &[0.5, 2.0, 1.0, -1.0]));
        assert_eq!(ds.labels, vec![1, 0]);
        assert!(parse_csv(b"1,2\n1,2,3\n", "c").is_err());
    }

    proptest! {
        #[test]
        fn libsvm_round_trip(
            vals in prop::collection::vec(prop::collection::vec(-1e3f64..1e3, 4), 1..20),
            zero_mask in prop::collection::vec(any::<bool>(), 80),
            labels in prop::collection::vec(-3i32..4, 20),
        ) {
            let n = vals.len();
            let m = DMatrix::from_fn(n, 4, |i, j| if zero_mask[i * 4 + j] { 0.0 } else { vals[i][j] });
            let raw: Vec<f64> = labels[..n].iter().map(|&l| l as f64).collect();
            let (lab, classes) = remap_labels(&raw);
            let ds = Dataset::new("p", m, lab, classes).unwrap();
            let back = parse_libsvm(to_libsvm(&ds).as_bytes(), "p").unwrap();
            prop_assert_eq!(&back.labels, &ds.labels);
            prop_assert_eq!(&back.label_values, &ds.label_values);
            prop_assert!((&back.features - &ds.features).amax() <= 1e-12);
            let back = parse_csv(to_csv(&ds).as_bytes(), "p").unwrap();
            prop_assert!((&back.features - &ds.features).amax() <= 1e-12);
        }
    }
}
