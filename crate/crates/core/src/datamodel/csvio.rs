use std::collections::HashMap;
use std::path::Path;

use super::{Dataset, MatchRecord, Schema, SchemaConfig};
use crate::{Error, Result};

/// Suffix of the indicator column added for every numeric or categorical
/// column that has at least one empty cell.
pub const MISSING_SUFFIX: &str = "_missing";

enum Encoded {
    Numeric {
        name: String,
        values: Vec<Option<f64>>,
    },
    Categorical {
        name: String,
        categories: Vec<String>,
        values: Vec<Option<usize>>,
    },
}

impl Encoded {
    fn has_missing(&self) -> bool {
        match self {
            Encoded::Numeric { values, .. } => values.iter().any(Option::is_none),
            Encoded::Categorical { values, .. } => values.iter().any(Option::is_none),
        }
    }

    fn names(&self) -> Vec<String> {
        let mut out = match self {
            Encoded::Numeric { name, .. } => vec![name.clone()],
            Encoded::Categorical {
                name, categories, ..
            } => categories.iter().map(|c| format!("{name}={c}")).collect(),
        };
        if self.has_missing() {
            let base = match self {
                Encoded::Numeric { name, .. } | Encoded::Categorical { name, .. } => name,
            };
            out.push(format!("{base}{MISSING_SUFFIX}"));
        }
        out
    }

    /// Appends this column's encoded values for every row.
    fn extend_rows(&self, rows: &mut [Vec<f64>]) {
        let flag = self.has_missing();
        match self {
            Encoded::Numeric { values, .. } => {
                let observed: Vec<f64> = values.iter().flatten().copied().collect();
                let fill = if observed.is_empty() {
                    0.0
                } else {
                    observed.iter().sum::<f64>() / observed.len() as f64
                };
                for (row, v) in rows.iter_mut().zip(values) {
                    row.push(v.unwrap_or(fill));
                    if flag {
                        row.push(if v.is_none() { 1.0 } else { 0.0 });
                    }
                }
            }
            Encoded::Categorical {
                categories, values, ..
            } => {
                for (row, v) in rows.iter_mut().zip(values) {
                    row.extend((0..categories.len()).map(|c| if *v == Some(c) { 1.0 } else { 0.0 }));
                    if flag {
                        row.push(if v.is_none() { 1.0 } else { 0.0 });
                    }
                }
            }
        }
    }
}

/// Reads a header-led CSV file laid out as described by `config`.
///
/// Empty numeric cells are filled with the mean of the observed cells of that
/// column and flagged in a companion `<column>_missing` indicator column.
pub fn load_csv(path: &Path, config: &SchemaConfig) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header: HashMap<String, usize> = reader
        .headers()?
        .iter()
        .enumerate()
        .map(|(i, h)| (h.trim().to_string(), i))
        .collect();
    let column = |name: &str| {
        header.get(name).copied().ok_or_else(|| Error::Ingestion {
            row: 1,
            column: name.to_string(),
            message: "column not present in header".into(),
        })
    };
    for cat in config.categorical.keys() {
        if !config.recipient_columns.contains(cat) && !config.donor_columns.contains(cat) {
            return Err(Error::Config(format!(
                "categorical column `{cat}` is not a recipient or donor column"
            )));
        }
    }
    let recipient_idx: Vec<usize> = config
        .recipient_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;
    let donor_idx: Vec<usize> = config
        .donor_columns
        .iter()
        .map(|c| column(c))
        .collect::<Result<_>>()?;
    let outcome_idx = column(&config.outcome_column)?;

    let mut lines = Vec::new();
    let mut records = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        lines.push(rec.position().map_or(0, |p| p.line() as usize));
        records.push(rec);
    }

    let encode = |names: &[String], idx: &[usize]| -> Result<Vec<Encoded>> {
        names
            .iter()
            .zip(idx)
            .map(|(name, &ci)| {
                if let Some(categories) = config.categorical.get(name) {
                    let values = records
                        .iter()
                        .zip(&lines)
                        .map(|(r, &line)| {
                            let cell = r.get(ci).unwrap_or("").trim();
                            if cell.is_empty() {
                                return Ok(None);
                            }
                            categories
                                .iter()
                                .position(|c| c == cell)
                                .map(Some)
                                .ok_or_else(|| Error::Ingestion {
                                    row: line,
                                    column: name.clone(),
                                    message: format!("undeclared category `{cell}`"),
                                })
                        })
                        .collect::<Result<_>>()?;
                    Ok(Encoded::Categorical {
                        name: name.clone(),
                        categories: categories.clone(),
                        values,
                    })
                } else {
                    let values = records
                        .iter()
                        .zip(&lines)
                        .map(|(r, &line)| parse_cell(r.get(ci).unwrap_or(""), line, name))
                        .collect::<Result<_>>()?;
                    Ok(Encoded::Numeric {
                        name: name.clone(),
                        values,
                    })
                }
            })
            .collect()
    };
    let recipient_cols = encode(&config.recipient_columns, &recipient_idx)?;
    let donor_cols = encode(&config.donor_columns, &donor_idx)?;

    let n = records.len();
    let mut recipients = vec![Vec::new(); n];
    let mut donors = vec![Vec::new(); n];
    for c in &recipient_cols {
        c.extend_rows(&mut recipients);
    }
    for c in &donor_cols {
        c.extend_rows(&mut donors);
    }
    let mut out = Vec::with_capacity(n);
    for (i, (r, o)) in recipients.into_iter().zip(donors).enumerate() {
        let y = parse_cell(
            records[i].get(outcome_idx).unwrap_or(""),
            lines[i],
            &config.outcome_column,
        )?
        .ok_or_else(|| Error::Ingestion {
            row: lines[i],
            column: config.outcome_column.clone(),
            message: "outcome is missing".into(),
        })?;
        out.push(MatchRecord::new(r, o, y));
    }
    let schema = Schema {
        recipient_features: recipient_cols.iter().flat_map(Encoded::names).collect(),
        donor_features: donor_cols.iter().flat_map(Encoded::names).collect(),
        outcome: config.outcome_column.clone(),
    };
    Dataset::new(out, schema)
}

fn parse_cell(cell: &str, line: usize, column: &str) -> Result<Option<f64>> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Error::Ingestion {
            row: line,
            column: column.to_string(),
            message: format!("cannot parse `{cell}` as a finite number"),
        }),
    }
}

/// Writes the encoded features and outcome; [`Schema::to_config`] reads it back.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let s = &dataset.schema;
    w.write_record(
        s.recipient_features
            .iter()
            .chain(&s.donor_features)
            .chain(std::iter::once(&s.outcome)),
    )?;
    for r in &dataset.records {
        w.write_record(
            r.recipient
                .iter()
                .chain(&r.donor)
                .chain(std::iter::once(&r.outcome))
                .map(f64::to_string),
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Columns: record_id, recipient_type, donor_type, untreated_survival, y_1..y_K.
pub fn write_ground_truth_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let k = dataset
        .true_k()
        .ok_or_else(|| Error::Unsupported("dataset carries no ground truth".into()))?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["record_id", "recipient_type", "donor_type", "untreated_survival"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=k).map(|j| format!("y_{j}")));
    w.write_record(&header)?;
    let opt = |v: Option<String>| v.unwrap_or_default();
    for (i, r) in dataset.records.iter().enumerate() {
        let mut row = vec![
            i.to_string(),
            opt(r.true_recipient_type.map(|v| v.to_string())),
            opt(r.true_donor_type.map(|v| v.to_string())),
            opt(r.untreated_survival.map(|v| v.to_string())),
        ];
        row.extend(r.true_potentials.iter().flatten().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Attaches ground truth written by [`write_ground_truth_csv`].
pub fn read_ground_truth_csv(dataset: &mut Dataset, path: &Path) -> Result<()> {
    let mut reader = csv::Reader::from_path(path)?;
    let k = reader.headers()?.len().saturating_sub(4);
    let mut seen = 0;
    for rec in reader.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let id: usize = rec[0].trim().parse().map_err(|_| Error::Ingestion {
            row: line,
            column: "record_id".into(),
            message: "not an index".into(),
        })?;
        let r = dataset.records.get_mut(id).ok_or_else(|| Error::Ingestion {
            row: line,
            column: "record_id".into(),
            message: format!("no record {id} in the dataset"),
        })?;
        let label = |col: usize, name: &str| -> Result<Option<usize>> {
            let cell = rec[col].trim();
            if cell.is_empty() {
                return Ok(None);
            }
            cell.parse().map(Some).map_err(|_| Error::Ingestion {
                row: line,
                column: name.into(),
                message: format!("cannot parse `{cell}` as a type label"),
            })
        };
        r.true_recipient_type = label(1, "recipient_type")?;
        r.true_donor_type = label(2, "donor_type")?;
        r.untreated_survival = parse_cell(&rec[3], line, "untreated_survival")?;
        let ys = (0..k)
            .map(|j| {
                let name = format!("y_{}", j + 1);
                parse_cell(&rec[4 + j], line, &name)?.ok_or_else(|| Error::Ingestion {
                    row: line,
                    column: name,
                    message: "missing potential outcome".into(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        r.true_potentials = Some(ys);
        seen += 1;
    }
    if seen != dataset.len() {
        return Err(Error::Data(format!(
            "ground truth covers {seen} of {} records",
            dataset.len()
        )));
    }
    dataset.validate()
}
