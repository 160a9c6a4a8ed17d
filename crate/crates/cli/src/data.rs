//! Input data: CSV with header `treatment,outcome,x1,...,xk`.

use std::io::Read;
use std::path::Path;

use shapemmr::Observation;

use crate::error::{CliError, CliResult};

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn check_header(header: &csv::StringRecord) -> CliResult<usize> {
    for (i, name) in header.iter().enumerate() {
        let expected = match i {
            0 => "treatment".to_string(),
            1 => "outcome".to_string(),
            _ => format!("x{}", i - 1),
        };
        if name != expected {
            return Err(invalid(format!(
                "data header column {} is `{name}`, expected `{expected}`",
                i + 1
            )));
        }
    }
    if header.len() < 2 {
        return Err(invalid("data header must start with `treatment,outcome`"));
    }
    Ok(header.len() - 2)
}

pub fn read_observations<R: Read>(reader: R) -> CliResult<Vec<Observation>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| invalid(format!("data header: {e}")))?
        .clone();
    let k = check_header(&header)?;
    let mut rows = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| invalid(format!("data line {line}: {e}")))?;
        let mut values = Vec::with_capacity(k + 2);
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                invalid(format!(
                    "data line {line}, column `{}`: `{field}` is not a number",
                    &header[c]
                ))
            })?;
            if !v.is_finite() {
                return Err(invalid(format!(
                    "data line {line}, column `{}`: value must be finite",
                    &header[c]
                )));
            }
            values.push(v);
        }
        rows.push(Observation {
            treatment: values[0],
            outcome: values[1],
            covariates: values[2..].to_vec(),
        });
    }
    if rows.is_empty() {
        return Err(invalid("data file has no rows"));
    }
    Ok(rows)
}

pub fn load(path: &Path) -> CliResult<Vec<Observation>> {
    let file = std::fs::File::open(path)
        .map_err(|e| invalid(format!("cannot read data {}: {e}", path.display())))?;
    read_observations(file)
}
