//! Dataset interchange format: plain CSV with header
//! `domain,label,f0,...,f{d-1}` and one sample per row. Floats are written
//! in shortest round-trip form, so save/load is value-exact.

use std::fs;
use std::path::Path;

use ddian_core::data::{DomainDataset, Sample};

use crate::CliError;

pub fn save_csv(ds: &DomainDataset, path: &Path) -> Result<(), CliError> {
    let mut out = String::new();
    out.push_str("domain,label");
    for i in 0..ds.feature_dim() {
        out.push_str(&format!(",f{i}"));
    }
    out.push('\n');
    for dense in 0..ds.num_domains() {
        let original = ds.domain_ids()[dense];
        for s in ds.samples(dense) {
            out.push_str(&format!("{original},{}", s.y));
            for v in &s.x {
                out.push_str(&format!(",{v:?}"));
            }
            out.push('\n');
        }
    }
    fs::write(path, out)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn parse_error(path: &Path, line: usize, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{}:{line}: {msg}", path.display()))
}

/// Loads a dataset, rejecting malformed rows with their line number. The
/// class count is taken from `declared_classes` when given (rows with larger
/// labels are errors) and inferred as `max label + 1` otherwise.
pub fn load_csv(path: &Path, declared_classes: Option<usize>) -> Result<DomainDataset, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file: no samples"))?;
    let fields: Vec<&str> = header.split(',').collect();
    if fields.len() < 3 || fields[0] != "domain" || fields[1] != "label" {
        return Err(parse_error(path, 1, "header must be `domain,label,f0,...`"));
    }
    for (i, name) in fields[2..].iter().enumerate() {
        if *name != format!("f{i}") {
            return Err(parse_error(
                path,
                1,
                format!("feature column {} must be named f{i}", i + 2),
            ));
        }
    }
    let dim = fields.len() - 2;

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != dim + 2 {
            return Err(parse_error(
                path,
                line_no,
                format!("expected {} fields, found {}", dim + 2, cells.len()),
            ));
        }
        let parse_id = |cell: &str, what: &str| -> Result<usize, CliError> {
            let v: i64 = cell.trim().parse().map_err(|_| {
                parse_error(path, line_no, format!("{what} `{cell}` is not an integer"))
            })?;
            if v < 0 {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("{what} {v} is negative"),
                ));
            }
            Ok(v as usize)
        };
        let d = parse_id(cells[0], "domain id")?;
        let y = parse_id(cells[1], "label")?;
        if let Some(k) = declared_classes {
            if y >= k {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("label {y} out of range [0, {k})"),
                ));
            }
        }
        let mut x = Vec::with_capacity(dim);
        for cell in &cells[2..] {
            let v: f64 = cell.trim().parse().map_err(|_| {
                parse_error(path, line_no, format!("feature `{cell}` is not a number"))
            })?;
            if !v.is_finite() {
                return Err(parse_error(
                    path,
                    line_no,
                    format!("feature {v} is not finite"),
                ));
            }
            x.push(v);
        }
        samples.push(Sample { x, y, d });
    }
    if samples.is_empty() {
        return Err(parse_error(path, 1, "no samples"));
    }
    let classes =
        declared_classes.unwrap_or_else(|| samples.iter().map(|s| s.y).max().unwrap() + 1);
    DomainDataset::from_samples(samples, classes)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}
