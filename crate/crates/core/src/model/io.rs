//! Text serialization of [`ModelParams`].
//!
//! Layout, one field per line, in this order:
//!
//! ```text
//! expsig-model 1
//! dim <int>
//! n_points <int>
//! classes <int>
//! labels <count> <names...>
//! level <int>
//! samples <int>
//! strategy midpoints | extended <before> <after> <margin | auto>
//! c <float>
//! a <float>
//! solve_tol <float>
//! max_iter <int>
//! band none | <int>
//! augment true | false
//! rescale_time true | false
//! v_init_scale <float>
//! seed <int>
//! w_m <len> <values...>
//! b_m <len> <values...>
//! w_v <len> <values...>
//! b_v <len> <values...>
//! readout_w <len> <values...>
//! readout_b <len> <values...>
//! ```
//!
//! Matrices are row-major; the augmenter blocks have length 0 for a model
//! without augmentation. Floats are written in shortest round-trip form.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use super::{Hyper, ModelParams};
use crate::augment::{AugmenterParams, TimeStrategy};
use crate::error::{Error, Result};
use crate::normalization::NormConfig;

pub const MAGIC: &str = "expsig-model";
pub const VERSION: u32 = 1;

fn push_array(out: &mut String, key: &str, values: &[f64]) {
    write!(out, "{key} {}", values.len()).unwrap();
    for v in values {
        write!(out, " {v}").unwrap();
    }
    out.push('\n');
}

pub fn to_text(p: &ModelParams) -> String {
    let h = &p.hyper;
    let mut out = String::new();
    let mut line = |k: &str, v: String| writeln!(out, "{k} {v}").unwrap();
    line(MAGIC, VERSION.to_string());
    line("dim", p.dim.to_string());
    line("n_points", p.n_points.to_string());
    line("classes", p.classes.to_string());
    line("labels", format!("{} {}", p.labels.len(), p.labels.join(" ")));
    line("level", h.level.to_string());
    line("samples", h.samples.to_string());
    line(
        "strategy",
        match h.strategy {
            TimeStrategy::Midpoints => "midpoints".to_string(),
            TimeStrategy::Extended {
                before,
                after,
                margin,
            } => format!(
                "extended {before} {after} {}",
                margin.map_or("auto".to_string(), |m| m.to_string())
            ),
        },
    );
    line("c", h.norm.c.to_string());
    line("a", h.norm.a.to_string());
    line("solve_tol", h.norm.solve_tol.to_string());
    line("max_iter", h.norm.max_iter.to_string());
    line("band", h.band.map_or("none".to_string(), |b| b.to_string()));
    line("augment", h.augment.to_string());
    line("rescale_time", h.rescale_time.to_string());
    line("v_init_scale", h.v_init_scale.to_string());
    line("seed", h.seed.to_string());
    let empty: &[f64] = &[];
    let aug = p.augmenter.as_ref();
    push_array(&mut out, "w_m", aug.map_or(empty, |a| &a.w_m));
    push_array(&mut out, "b_m", aug.map_or(empty, |a| &a.b_m));
    push_array(&mut out, "w_v", aug.map_or(empty, |a| &a.w_v));
    push_array(&mut out, "b_v", aug.map_or(empty, |a| &a.b_v));
    push_array(&mut out, "readout_w", &p.readout_w);
    push_array(&mut out, "readout_b", &p.readout_b);
    out
}

struct Reader<'a> {
    path: &'a Path,
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Reader<'a> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line,
            msg: msg.into(),
        }
    }

    /// Next line, which must start with `key`; returns its line number and
    /// remaining tokens.
    fn field(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let Some((i, text)) = self.lines.next() else {
            return Err(self.err(0, format!("missing field {key}")));
        };
        let mut tokens = text.split_whitespace();
        match tokens.next() {
            Some(k) if k == key => Ok((i + 1, tokens.collect())),
            other => Err(self.err(i + 1, format!("expected field {key}, found {other:?}"))),
        }
    }

    fn scalar<T: FromStr>(&mut self, key: &str) -> Result<T> {
        let (line, tokens) = self.field(key)?;
        match tokens.as_slice() {
            [v] => v
                .parse()
                .map_err(|_| self.err(line, format!("bad value {v:?} for {key}"))),
            _ => Err(self.err(line, format!("{key} takes exactly one value"))),
        }
    }

    fn array(&mut self, key: &str) -> Result<Vec<f64>> {
        let (line, tokens) = self.field(key)?;
        let Some((len, rest)) = tokens.split_first() else {
            return Err(self.err(line, format!("{key} needs a length")));
        };
        let len: usize = len
            .parse()
            .map_err(|_| self.err(line, format!("bad length {len:?}")))?;
        if rest.len() != len {
            return Err(self.err(line, format!("{key} declares {len} values, has {}", rest.len())));
        }
        rest.iter()
            .map(|v| {
                v.parse()
                    .map_err(|_| self.err(line, format!("bad number {v:?} in {key}")))
            })
            .collect()
    }
}

pub fn from_text(text: &str, path: &Path) -> Result<ModelParams> {
    let mut r = Reader {
        path,
        lines: text.lines().enumerate(),
    };
    let version: u32 = r.scalar(MAGIC)?;
    if version != VERSION {
        return Err(r.err(1, format!("unsupported model version {version}")));
    }
    let dim = r.scalar("dim")?;
    let n_points = r.scalar("n_points")?;
    let classes = r.scalar("classes")?;
    let (line, tokens) = r.field("labels")?;
    let labels: Vec<String> = match tokens.split_first() {
        Some((n, names)) if n.parse() == Ok(names.len()) => names.iter().map(|s| s.to_string()).collect(),
        _ => return Err(r.err(line, "labels line does not match its count")),
    };
    let level = r.scalar("level")?;
    let samples = r.scalar("samples")?;
    let (line, tokens) = r.field("strategy")?;
    let strategy = match tokens.as_slice() {
        ["midpoints"] => TimeStrategy::Midpoints,
        ["extended", b, a, m] => {
            let bad = || r.err(line, "bad extended strategy");
            TimeStrategy::Extended {
                before: b.parse().map_err(|_| bad())?,
                after: a.parse().map_err(|_| bad())?,
                margin: match *m {
                    "auto" => None,
                    m => Some(m.parse().map_err(|_| bad())?),
                },
            }
        }
        _ => return Err(r.err(line, "unknown strategy")),
    };
    let norm = NormConfig {
        c: r.scalar("c")?,
        a: r.scalar("a")?,
        solve_tol: r.scalar("solve_tol")?,
        max_iter: r.scalar("max_iter")?,
    };
    let (line, tokens) = r.field("band")?;
    let band = match tokens.as_slice() {
        ["none"] => None,
        [b] => Some(b.parse().map_err(|_| r.err(line, format!("bad band {b:?}")))?),
        _ => return Err(r.err(line, "band takes exactly one value")),
    };
    let hyper = Hyper {
        level,
        samples,
        strategy,
        norm,
        band,
        augment: r.scalar("augment")?,
        rescale_time: r.scalar("rescale_time")?,
        v_init_scale: r.scalar("v_init_scale")?,
        seed: r.scalar("seed")?,
    };
    let (w_m, b_m, w_v, b_v) = (r.array("w_m")?, r.array("b_m")?, r.array("w_v")?, r.array("b_v")?);
    let readout_w = r.array("readout_w")?;
    let readout_b = r.array("readout_b")?;

    // shapes come from a freshly initialized model of the same hyperparameters
    let mut p = ModelParams::init(dim, n_points, classes, hyper)?;
    let augmenter = match p.augmenter.take() {
        Some(template) => Some(AugmenterParams {
            w_m: same_len(w_m, &template.w_m, "w_m", path)?,
            b_m: same_len(b_m, &template.b_m, "b_m", path)?,
            w_v: same_len(w_v, &template.w_v, "w_v", path)?,
            b_v: same_len(b_v, &template.b_v, "b_v", path)?,
            ..template
        }),
        None => {
            if !(w_m.is_empty() && b_m.is_empty() && w_v.is_empty() && b_v.is_empty()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line: 0,
                    msg: "augmenter blocks present in a model without augmentation".into(),
                });
            }
            None
        }
    };
    p.augmenter = augmenter;
    if labels.len() != classes {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 5,
            msg: format!("{} labels for {classes} classes", labels.len()),
        });
    }
    p.labels = labels;
    p.readout_w = same_len(readout_w, &p.readout_w, "readout_w", path)?;
    p.readout_b = same_len(readout_b, &p.readout_b, "readout_b", path)?;
    Ok(p)
}

fn same_len(got: Vec<f64>, want: &[f64], key: &str, path: &Path) -> Result<Vec<f64>> {
    if got.len() != want.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            msg: format!("{key} has {} values, the header implies {}", got.len(), want.len()),
        });
    }
    Ok(got)
}

/// Writes the model; class names must be non-empty and free of whitespace.
pub fn save_model(path: impl AsRef<Path>, p: &ModelParams) -> Result<()> {
    let path = path.as_ref();
    if let Some(bad) = p.labels.iter().find(|l| l.is_empty() || l.chars().any(char::is_whitespace)) {
        return Err(Error::invalid(format!("class name {bad:?} cannot be stored in a model file")));
    }
    std::fs::write(path, to_text(p)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text, path)
}
