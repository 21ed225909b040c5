use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Mean and, over more than one run, sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: Option<f64>,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (n > 1).then(|| {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        });
        Some(Self { mean, std, count: n })
    }

    /// A single reported value without spread.
    pub fn point(value: f64) -> Self {
        Self {
            mean: value,
            std: None,
            count: 1,
        }
    }
}

/// `0.816` or `0.816 (0.012)`.
pub fn format_cell(value: Option<&Summary>) -> String {
    match value {
        None => "n/a".into(),
        Some(Summary { mean, std: None, .. }) => format!("{mean:.3}"),
        Some(Summary { mean, std: Some(s), .. }) => format!("{mean:.3} ({s:.3})"),
    }
}

/// One table column, e.g. "ADV 20".
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableColumn {
    pub label: String,
    pub accuracy: Option<Summary>,
    pub sensitivity: Option<Summary>,
    pub specificity: Option<Summary>,
    pub probe: Option<Summary>,
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Comma-separated table with one row per metric and one column per
/// scenario. The probe row is present when any column carries a probe.
pub fn render_table(columns: &[TableColumn]) -> String {
    let mut out = String::from("metric");
    for c in columns {
        out.push(',');
        out.push_str(&csv_field(&c.label));
    }
    out.push('\n');
    let mut rows: Vec<(&str, fn(&TableColumn) -> Option<&Summary>)> = vec![
        ("Accuracy", |c| c.accuracy.as_ref()),
        ("Sensitivity", |c| c.sensitivity.as_ref()),
        ("Specificity", |c| c.specificity.as_ref()),
    ];
    if columns.iter().any(|c| c.probe.is_some()) {
        rows.push(("Patient probe accuracy", |c| c.probe.as_ref()));
    }
    for (name, get) in rows {
        out.push_str(name);
        for c in columns {
            out.push(',');
            out.push_str(&csv_field(&format_cell(get(c))));
        }
        out.push('\n');
    }
    out
}

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn config_digest<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_vec(value).map_err(|e| Error::Config(format!("cannot encode config: {e}")))?;
    Ok(Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect())
}
