//! CSV writers and the policy parameter format.

use std::path::Path;

use shapemmr::Policy;

use crate::error::{CliError, CliResult};

/// Rounds to 12 significant digits and prints the shortest decimal that
/// reads back to the rounded value.
pub fn fmt_num(v: f64) -> String {
    if !v.is_finite() {
        return if v.is_nan() {
            "nan".into()
        } else if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        };
    }
    let rounded = round12(v);
    if rounded == 0.0 {
        return "0".into();
    }
    let a = rounded.abs();
    if (1e-6..1e15).contains(&a) {
        format!("{rounded}")
    } else {
        format!("{rounded:e}")
    }
}

pub fn round12(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().expect("formatted float parses")
}

/// Collects rows in memory and writes them in one go.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Self {
            header: header.iter().map(|s| s.as_ref().to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let fail = |e: &dyn std::fmt::Display| CliError::Output(format!("{}: {e}", path.display()));
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_path(path)
            .map_err(|e| fail(&e))?;
        w.write_record(&self.header).map_err(|e| fail(&e))?;
        for r in &self.rows {
            w.write_record(r).map_err(|e| fail(&e))?;
        }
        w.flush().map_err(|e| fail(&e))
    }
}

/// Policy with every number rounded as it will be printed.
pub fn rounded_policy(policy: &Policy) -> Policy {
    match policy {
        Policy::Constant(j) => Policy::Constant(*j),
        Policy::LinearScore {
            features,
            beta,
            cutoffs,
        } => Policy::LinearScore {
            features: features.clone(),
            beta: beta.iter().map(|&b| round12(b)).collect(),
            cutoffs: cutoffs.iter().map(|&c| round12(c)).collect(),
        },
    }
}

/// Rows `name,index,value`. Covariate columns are named as in the data file.
pub fn policy_params(policy: &Policy, grid_values: &[f64], objective: f64) -> Table {
    let mut t = Table::new(&["name", "index", "value"]);
    match policy {
        Policy::Constant(j) => {
            t.push(vec!["kind".into(), "0".into(), "constant".into()]);
            t.push(vec!["level".into(), "0".into(), j.to_string()]);
            t.push(vec!["d".into(), "0".into(), fmt_num(grid_values[*j])]);
        }
        Policy::LinearScore {
            features,
            beta,
            cutoffs,
        } => {
            t.push(vec!["kind".into(), "0".into(), "linear_score".into()]);
            for (i, (f, b)) in features.iter().zip(beta).enumerate() {
                t.push(vec!["feature".into(), i.to_string(), format!("x{}", f + 1)]);
                t.push(vec!["beta".into(), i.to_string(), fmt_num(*b)]);
            }
            for (i, c) in cutoffs.iter().enumerate() {
                t.push(vec!["cutoff".into(), i.to_string(), fmt_num(*c)]);
            }
        }
    }
    t.push(vec!["objective".into(), "0".into(), fmt_num(objective)]);
    t
}

/// Reads a policy written by [`policy_params`].
pub fn parse_policy_params(text: &str) -> CliResult<Policy> {
    let bad = |m: String| CliError::Validation(format!("policy parameters: {m}"));
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut kind = None;
    let mut level = None;
    let mut features = Vec::new();
    let mut beta = Vec::new();
    let mut cutoffs = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let (name, value) = (&rec[0], &rec[2]);
        let num = || {
            value
                .parse::<f64>()
                .map_err(|_| bad(format!("`{value}` is not a number")))
        };
        match name {
            "kind" => kind = Some(value.to_string()),
            "level" => {
                level = Some(
                    value
                        .parse::<usize>()
                        .map_err(|_| bad(format!("bad level `{value}`")))?,
                )
            }
            "feature" => {
                let idx = value
                    .strip_prefix('x')
                    .and_then(|s| s.parse::<usize>().ok())
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| bad(format!("bad feature `{value}`")))?;
                features.push(idx - 1);
            }
            "beta" => beta.push(num()?),
            "cutoff" => cutoffs.push(num()?),
            _ => {}
        }
    }
    match kind.as_deref() {
        Some("constant") => Ok(Policy::Constant(
            level.ok_or_else(|| bad("missing level".into()))?,
        )),
        Some("linear_score") => {
            Policy::linear_score(features, beta, cutoffs).map_err(|e| bad(e.to_string()))
        }
        other => Err(bad(format!("unknown kind {other:?}"))),
    }
}

/// File-name form of a treatment value, e.g. `12.5`.
pub fn level_tag(d: f64) -> String {
    fmt_num(d)
}
