use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sample Pearson correlation, two-pass.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Invalid(format!("length mismatch: {} vs {}", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(Error::Invalid("correlation needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Invalid("correlation undefined for zero variance".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SizeTransform {
    Linear,
    #[default]
    Log,
}

impl SizeTransform {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Linear => x,
            Self::Log => x.ln(),
        }
    }
}

impl FromStr for SizeTransform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(Self::Linear),
            "log" => Ok(Self::Log),
            other => Err(Error::Config(format!("unknown size transform {other:?} (expected log or linear)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRow {
    pub model: String,
    pub params_b: f64,
    pub values: Vec<f64>,
}

/// Degradation percentages per model, with model size in billions.
///
/// A CSV row whose `params_b` cell is `-` carries previously reported
/// correlations for the same columns rather than a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationTable {
    pub columns: Vec<String>,
    pub rows: Vec<DegradationRow>,
    pub reported: Option<Vec<f64>>,
}

impl DegradationTable {
    pub fn from_csv_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_csv_str(&text).map_err(|e| match e {
            Error::Parse { line, message, .. } => Error::Parse {
                path: path.to_path_buf(),
                line,
                message,
            },
            other => other,
        })
    }

    pub fn from_csv_str(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            path: "<table>".into(),
            line,
            message,
        };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
        if header.len() < 3 || &header[0] != "model" || &header[1] != "params_b" {
            return Err(parse_err(1, "header must be model,params_b,<column...>".into()));
        }
        let columns: Vec<String> = header.iter().skip(2).map(str::to_owned).collect();
        let mut rows = Vec::new();
        let mut reported = None;
        for (i, record) in reader.records().enumerate() {
            let line = i + 2;
            let record = record.map_err(|e| parse_err(line, e.to_string()))?;
            let number = |s: &str| s.parse::<f64>().map_err(|_| parse_err(line, format!("not a number: {s:?}")));
            let values = record.iter().skip(2).map(number).collect::<Result<Vec<f64>>>()?;
            if record[1].trim() == "-" {
                reported = Some(values);
                continue;
            }
            let params_b = number(&record[1])?;
            if !(params_b > 0.0) {
                return Err(parse_err(line, "params_b must be positive".into()));
            }
            if values.iter().any(|v| !(0.0..=100.0).contains(v)) {
                return Err(parse_err(line, "degradation percentages must lie in [0, 100]".into()));
            }
            rows.push(DegradationRow {
                model: record[0].to_owned(),
                params_b,
                values,
            });
        }
        Ok(Self { columns, rows, reported })
    }

    pub fn column(&self, idx: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r.values[idx]).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub transform: SizeTransform,
    pub columns: Vec<(String, f64)>,
    /// Mean of the per-column correlations.
    pub overall: f64,
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub fn degradation_correlation(table: &DegradationTable, transform: SizeTransform) -> Result<CorrelationResult> {
    if table.rows.len() < 2 {
        return Err(Error::Invalid("correlation needs at least two models".into()));
    }
    let sizes: Vec<f64> = table.rows.iter().map(|r| transform.apply(r.params_b)).collect();
    let columns = table
        .columns
        .iter()
        .enumerate()
        .map(|(i, name)| pearson(&sizes, &table.column(i)).map(|r| (name.clone(), r)))
        .collect::<Result<Vec<_>>>()?;
    let rs: Vec<f64> = columns.iter().map(|c| c.1).collect();
    Ok(CorrelationResult {
        transform,
        overall: mean(&rs),
        columns,
    })
}
