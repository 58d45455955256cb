//! Binarized tabular data for CPT learning.

use std::collections::HashMap;

use rand::Rng;

use super::BayesianNetwork;
use crate::{Error, Result};

/// Binarization rules read from a sidecar schema file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CsvSchema {
    /// Column -> threshold; a numeric cell `>= threshold` becomes 1.
    pub thresholds: HashMap<String, f64>,
    pub target: Option<String>,
}

/// Parses `threshold <col> <value>` and `target <col>` lines.
pub fn parse_schema(text: &str) -> Result<CsvSchema> {
    let mut schema = CsvSchema::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let toks = super::bn::tokens(raw.split('#').next().unwrap_or(""));
        let err = |col: usize, msg: String| Error::Parse {
            what: "schema",
            line,
            col,
            msg,
        };
        match toks.as_slice() {
            [] => {}
            [(_, "threshold"), (_, col), (vc, v)] => {
                let t: f64 = v.parse().map_err(|_| err(*vc, format!("bad threshold `{v}`")))?;
                if schema.thresholds.insert(col.to_string(), t).is_some() {
                    return Err(err(1, format!("duplicate threshold for `{col}`")));
                }
            }
            [(_, "target"), (_, col)] => schema.target = Some(col.to_string()),
            [(c, kw), ..] => return Err(err(*c, format!("unrecognized schema line `{kw}`"))),
        }
    }
    Ok(schema)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    columns: Vec<String>,
    rows: Vec<Vec<u8>>,
    target: Option<String>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<u8>>, target: Option<String>) -> Result<Self> {
        if let Some(r) = rows.iter().position(|r| r.len() != columns.len() || r.iter().any(|&b| b > 1)) {
            return Err(Error::Invalid(format!("dataset row {r} malformed")));
        }
        if let Some(t) = &target {
            if !columns.contains(t) {
                return Err(Error::MissingColumn(t.clone()));
            }
        }
        Ok(Dataset { columns, rows, target })
    }

    pub fn columns(&self) -> &[String] {
        &self.columns
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    pub fn target(&self) -> Option<&str> {
        self.target.as_deref()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Parses a headed CSV, binarizing each cell with the schema. Cells in
/// columns without a threshold must already be `0` or `1`.
pub fn parse_csv(text: &str, schema: &CsvSchema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let csv_err = |e: csv::Error| {
        let line = e.position().map_or(0, |p| p.line() as usize);
        Error::Parse {
            what: "csv",
            line,
            col: 1,
            msg: e.to_string(),
        }
    };
    let columns: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    for c in schema.thresholds.keys() {
        if !columns.contains(c) {
            return Err(Error::MissingColumn(c.clone()));
        }
    }
    let thresholds: Vec<Option<f64>> = columns.iter().map(|c| schema.thresholds.get(c).copied()).collect();
    let mut rows = Vec::new();
    for (r, rec) in reader.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let mut row = Vec::with_capacity(columns.len());
        for (c, cell) in rec.iter().enumerate() {
            let value: Option<f64> = cell.parse().ok();
            let bit = match (thresholds[c], value) {
                (Some(t), Some(v)) => (v >= t) as u8,
                (None, Some(v)) if v == 0.0 || v == 1.0 => v as u8,
                _ => {
                    return Err(Error::NonBinaryCell {
                        column: columns[c].clone(),
                        row: r + 1,
                        value: cell.to_string(),
                    })
                }
            };
            row.push(bit);
        }
        rows.push(row);
    }
    Dataset::new(columns, rows, schema.target.clone())
}

/// Ancestral sampling of `n` rows from a network; columns are node names.
pub fn sample_dataset<R: Rng>(bn: &BayesianNetwork, n: usize, rng: &mut R) -> Dataset {
    let dag = bn.dag();
    let order = dag.topo_order().expect("validated network");
    let rows = (0..n)
        .map(|_| {
            let mut x = vec![0u8; dag.len()];
            for &i in &order {
                let row = dag.parents(i).iter().fold(0usize, |acc, &p| (acc << 1) | x[p] as usize);
                x[i] = rng.random_bool(bn.p_true(i, row)) as u8;
            }
            x
        })
        .collect();
    Dataset::new(dag.names().to_vec(), rows, None).expect("well-formed samples")
}
