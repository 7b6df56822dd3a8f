//! Text model files: JSON with every number written to 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::Deserialize;

use crate::data::write_atomic;
use crate::error::{DhmmError, Result};
use crate::hmm::{EmissionModel, Family, HmmParams, InitialDistribution, TransitionMatrix};

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn vector(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|&x| num(x)).collect();
    format!("[{}]", items.join(", "))
}

fn matrix(m: &DMatrix<f64>, indent: &str) -> String {
    let rows: Vec<String> = (0..m.nrows())
        .map(|i| format!("{indent}  {}", vector(&m.row(i).iter().copied().collect::<Vec<_>>())))
        .collect();
    format!("[\n{}\n{indent}]", rows.join(",\n"))
}

/// Serializes `params` to the model-file text.
pub fn model_to_string(params: &HmmParams) -> String {
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"k\": {},", params.k());
    let _ = writeln!(out, "  \"family\": \"{}\",", params.b.family());
    let _ = writeln!(out, "  \"pi\": {},", vector(params.pi.probs()));
    let _ = writeln!(out, "  \"a\": {},", matrix(params.a.matrix(), "  "));
    out.push_str("  \"emission\": {\n");
    match &params.b {
        EmissionModel::Gaussian { means, stddevs } => {
            let _ = writeln!(out, "    \"means\": {},", vector(means));
            let _ = writeln!(out, "    \"stddevs\": {}", vector(stddevs));
        }
        EmissionModel::Categorical { probs } | EmissionModel::Bernoulli { probs } => {
            let _ = writeln!(out, "    \"probs\": {}", matrix(probs, "    "));
        }
    }
    out.push_str("  }\n}\n");
    out
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    k: usize,
    family: Family,
    pi: Vec<f64>,
    a: Vec<Vec<f64>>,
    emission: EmissionDoc,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EmissionDoc {
    means: Option<Vec<f64>>,
    stddevs: Option<Vec<f64>>,
    probs: Option<Vec<Vec<f64>>>,
}

fn schema(what: &str, e: DhmmError) -> DhmmError {
    match e {
        DhmmError::InvalidInput(m) | DhmmError::Schema(m) => DhmmError::Schema(format!("{what}: {m}")),
        other => other,
    }
}

fn rows_to_matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let cols = rows.first().map_or(0, Vec::len);
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(DhmmError::Schema(format!("{what}: row {i} has {} entries, expected {cols}", rows[i].len())));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

/// Parses and validates a model file.
pub fn model_from_str(text: &str) -> Result<HmmParams> {
    let doc: ModelDoc = serde_json::from_str(text)?;
    if doc.pi.len() != doc.k || doc.a.len() != doc.k {
        return Err(DhmmError::Schema(format!(
            "k = {} but pi has {} entries and a has {} rows",
            doc.k,
            doc.pi.len(),
            doc.a.len()
        )));
    }
    let pi = InitialDistribution::new(doc.pi).map_err(|e| schema("pi", e))?;
    let a = TransitionMatrix::from_rows(&doc.a).map_err(|e| schema("a", e))?;
    let e = doc.emission;
    let b = match doc.family {
        Family::Gaussian => match (e.means, e.stddevs, e.probs) {
            (Some(m), Some(s), None) => EmissionModel::gaussian(m, s),
            _ => return Err(DhmmError::Schema("gaussian emission needs exactly means and stddevs".into())),
        },
        Family::Categorical | Family::Bernoulli => match (e.means, e.stddevs, e.probs) {
            (None, None, Some(p)) => {
                let m = rows_to_matrix(&p, "emission probs")?;
                if doc.family == Family::Categorical {
                    EmissionModel::categorical(m)
                } else {
                    EmissionModel::bernoulli(m)
                }
            }
            _ => return Err(DhmmError::Schema(format!("{} emission needs exactly probs", doc.family))),
        },
    }
    .map_err(|e| schema("emission", e))?;
    HmmParams::new(pi, a, b).map_err(|e| schema("model", e))
}

pub fn save_model(params: &HmmParams, path: &Path) -> Result<()> {
    write_atomic(path, model_to_string(params).as_bytes())
}

pub fn load_model(path: &Path) -> Result<HmmParams> {
    let text = fs::read_to_string(path).map_err(|e| DhmmError::io(path, e))?;
    model_from_str(&text)
}
