//! Tab-separated dataset files.
//!
//! One series per line: `label<TAB>v_1<TAB>...<TAB>v_N` (commas are accepted
//! in place of tabs on lines without any tab). Multi-channel
//! observations are written as colon-separated scalars (`0.1:-0.3`). Times
//! are implicit, `t_i = i / (N - 1)`. Blank lines and lines starting with `#`
//! are skipped.

use std::fmt::Write as _;
use std::path::Path;

use super::Dataset;
use crate::error::{Error, Result};
use crate::signature::{unit_grid, TimeSeries};

struct Row {
    line: usize,
    label: String,
    values: Vec<f64>,
    dim: usize,
}

fn parse_rows(path: &Path) -> Result<Vec<Row>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let err = |line: usize, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut rows: Vec<Row> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let trimmed = raw.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let sep = if trimmed.contains('\t') { '\t' } else { ',' };
        let mut fields = trimmed.split(sep);
        let label = fields.next().unwrap_or_default().trim().to_string();
        if label.is_empty() {
            return Err(err(line, "empty label".into()));
        }
        let mut values = Vec::new();
        let mut dim = None;
        for (j, tok) in fields.enumerate() {
            let parts: Vec<&str> = tok.trim().split(':').collect();
            match dim {
                None => dim = Some(parts.len()),
                Some(d) if d != parts.len() => {
                    return Err(err(
                        line,
                        format!("observation {} has {} channels, expected {d}", j + 1, parts.len()),
                    ))
                }
                _ => {}
            }
            for p in parts {
                let v: f64 = p
                    .parse()
                    .map_err(|_| err(line, format!("cannot parse {p:?} as a number")))?;
                values.push(v);
            }
        }
        let dim = dim.ok_or_else(|| err(line, "row has no observations".into()))?;
        if values.len() / dim < 2 {
            return Err(err(line, "a series needs at least 2 observations".into()));
        }
        if let Some(first) = rows.first() {
            if first.dim != dim || first.values.len() != values.len() {
                return Err(err(
                    line,
                    format!(
                        "row has {} observations of dimension {dim}, line {} has {} of dimension {}",
                        values.len() / dim,
                        first.line,
                        first.values.len() / first.dim,
                        first.dim
                    ),
                ));
            }
        }
        rows.push(Row {
            line,
            label,
            values,
            dim,
        });
    }
    if rows.is_empty() {
        return Err(err(0, "file holds no series".into()));
    }
    Ok(rows)
}

fn build(path: &Path, rows: Vec<Row>, label_names: Vec<String>, every_class: bool) -> Result<Dataset> {
    let n = rows[0].values.len() / rows[0].dim;
    let times = unit_grid(n);
    let mut items = Vec::with_capacity(rows.len());
    for row in rows {
        let Some(class) = label_names.iter().position(|l| *l == row.label) else {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: row.line,
                msg: format!("unknown label {:?}", row.label),
            });
        };
        items.push((TimeSeries::new(times.clone(), row.values, row.dim)?, class));
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ds = Dataset {
        name,
        items,
        label_names,
    };
    if every_class {
        ds.validate()?;
    }
    Ok(ds)
}

/// Reads a dataset, numbering the distinct labels in sorted order (numeric
/// when every label parses as a number).
pub fn load_tsv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = parse_rows(path)?;
    let mut labels: Vec<String> = rows.iter().map(|r| r.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let numeric: Option<Vec<f64>> = labels.iter().map(|l| l.parse().ok()).collect();
    if let Some(keys) = numeric {
        let mut pairs: Vec<(f64, String)> = keys.into_iter().zip(labels).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        labels = pairs.into_iter().map(|(_, l)| l).collect();
    }
    build(path, rows, labels, true)
}

/// Reads a dataset against a fixed label list (e.g. the training split's),
/// failing on labels outside it. Classes may be absent.
pub fn load_tsv_with_labels(path: impl AsRef<Path>, label_names: &[String]) -> Result<Dataset> {
    let path = path.as_ref();
    let rows = parse_rows(path)?;
    build(path, rows, label_names.to_vec(), false)
}

/// Writes a dataset; values use the shortest representation that reads back
/// to the same `f64`.
pub fn write_tsv(path: impl AsRef<Path>, ds: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for (x, y) in &ds.items {
        out.push_str(&ds.label_names[*y]);
        for i in 0..x.len() {
            out.push('\t');
            for (c, v) in x.row(i).iter().enumerate() {
                if c > 0 {
                    out.push(':');
                }
                write!(out, "{v}").expect("writing to a String");
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
