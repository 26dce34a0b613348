//! Count responses with named covariate columns, and CSV ingestion.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Continuous,
    Dummy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    pub values: Vec<f64>,
    pub kind: ColumnKind,
}

impl Column {
    pub fn continuous(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            kind: ColumnKind::Continuous,
        }
    }

    pub fn dummy(name: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            values,
            kind: ColumnKind::Dummy,
        }
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn is_binary(values: &[f64]) -> bool {
    values.iter().all(|&v| v == 0.0 || v == 1.0)
}

/// Response counts plus covariate columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<u64>,
    columns: Vec<Column>,
}

impl Dataset {
    pub fn new(y: Vec<u64>, columns: Vec<Column>) -> Result<Self> {
        for col in &columns {
            if col.values.len() != y.len() {
                return Err(Error::DimensionMismatch {
                    expected: y.len(),
                    got: col.values.len(),
                });
            }
            if let Some(row) = col.values.iter().position(|v| !v.is_finite()) {
                return Err(Error::Data {
                    row,
                    column: col.name.clone(),
                    message: "non-finite value".into(),
                });
            }
            if col.kind == ColumnKind::Dummy {
                if let Some(row) = col.values.iter().position(|&v| v != 0.0 && v != 1.0) {
                    return Err(Error::Data {
                        row,
                        column: col.name.clone(),
                        message: format!("dummy column holds {}", col.values[row]),
                    });
                }
            }
        }
        Ok(Self { y, columns })
    }

    pub fn y(&self) -> &[u64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Result<&Column> {
        self.columns
            .iter()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    }

    /// Reorders (or subsets) rows.
    pub fn select_rows(&self, rows: &[usize]) -> Self {
        Self {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| Column {
                    name: c.name.clone(),
                    values: rows.iter().map(|&i| c.values[i]).collect(),
                    kind: c.kind,
                })
                .collect(),
        }
    }

    /// Reads a CSV with a header row. `response` names the count column; every
    /// other column becomes a covariate. Columns holding only 0/1 are tagged as
    /// dummies unless listed in `force_continuous`.
    pub fn from_csv_reader<R: Read>(
        reader: R,
        response: &str,
        force_continuous: &[String],
    ) -> Result<Self> {
        let (y, columns) = read_csv(reader, Some(response), force_continuous)?;
        Self::new(y.unwrap_or_default(), columns)
    }

    pub fn from_csv_path(
        path: impl AsRef<Path>,
        response: &str,
        force_continuous: &[String],
    ) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, response, force_continuous)
    }

    /// Writes the response (as `response`) followed by every covariate column.
    pub fn write_csv<W: Write>(&self, writer: W, response: &str) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        let mut header = vec![response.to_string()];
        header.extend(self.columns.iter().map(|c| c.name.clone()));
        wtr.write_record(&header)?;
        for i in 0..self.len() {
            let mut record = vec![self.y[i].to_string()];
            record.extend(self.columns.iter().map(|c| c.values[i].to_string()));
            wtr.write_record(&record)?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Reads covariate columns only, with the same parsing rules as
/// [`Dataset::from_csv_reader`]; every column of the file is a covariate.
pub fn covariates_from_csv_reader<R: Read>(reader: R, force_continuous: &[String]) -> Result<Vec<Column>> {
    Ok(read_csv(reader, None, force_continuous)?.1)
}

/// One `name -> value` map per row.
pub fn covariate_rows(columns: &[Column]) -> Vec<BTreeMap<String, f64>> {
    let n = columns.first().map_or(0, |c| c.values.len());
    (0..n)
        .map(|i| columns.iter().map(|c| (c.name.clone(), c.values[i])).collect())
        .collect()
}

fn read_csv<R: Read>(
    reader: R,
    response: Option<&str>,
    force_continuous: &[String],
) -> Result<(Option<Vec<u64>>, Vec<Column>)> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let y_idx = match response {
        Some(r) => Some(
            headers
                .iter()
                .position(|h| h == r)
                .ok_or_else(|| Error::MissingColumn(r.to_string()))?,
        ),
        None => None,
    };

    let mut y = Vec::new();
    let mut raw: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Data {
                row,
                column: String::new(),
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let bad = |message: String| Error::Data {
                row,
                column: headers[j].clone(),
                message,
            };
            if cell.is_empty() {
                return Err(bad("empty cell".into()));
            }
            let value: f64 = cell
                .parse()
                .map_err(|_| bad(format!("cannot parse `{cell}` as a number")))?;
            if !value.is_finite() {
                return Err(bad(format!("non-finite value `{cell}`")));
            }
            if Some(j) == y_idx {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(bad(format!("response `{cell}` is not a non-negative integer")));
                }
                y.push(value as u64);
            } else {
                raw[j].push(value);
            }
        }
    }

    let columns = headers
        .into_iter()
        .zip(raw)
        .enumerate()
        .filter(|(j, _)| Some(*j) != y_idx)
        .map(|(_, (name, values))| {
            let kind = if is_binary(&values) && !force_continuous.contains(&name) {
                ColumnKind::Dummy
            } else {
                ColumnKind::Continuous
            };
            Column { name, values, kind }
        })
        .collect();
    Ok((y_idx.map(|_| y), columns))
}
