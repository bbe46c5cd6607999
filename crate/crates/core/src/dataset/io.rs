use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DatasetError, Label, Result};

/// Which header column carries labels, and how to read it.
///
/// With `target: None` the column must hold `1`/`-1`. With `target: Some(v)`
/// any cell equal to `v` becomes [`Label::Target`] and every other value
/// [`Label::Outlier`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelColumn {
    pub name: String,
    pub target: Option<String>,
}

impl LabelColumn {
    pub fn signed(name: impl Into<String>) -> Self {
        LabelColumn {
            name: name.into(),
            target: None,
        }
    }

    pub fn with_target(name: impl Into<String>, target: impl Into<String>) -> Self {
        LabelColumn {
            name: name.into(),
            target: Some(target.into()),
        }
    }

    fn parse(&self, row: usize, cell: &str) -> Result<Label> {
        let cell = cell.trim();
        match &self.target {
            Some(t) => Ok(if cell == t { Label::Target } else { Label::Outlier }),
            None => cell
                .parse::<f64>()
                .ok()
                .and_then(Label::from_value)
                .ok_or_else(|| DatasetError::BadLabel {
                    row,
                    value: cell.to_string(),
                }),
        }
    }
}

pub fn load_csv(path: impl AsRef<Path>, label: Option<&LabelColumn>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, label)
}

/// Parses a headed CSV. Row numbers in errors count data rows from 1.
pub fn read_csv<R: Read>(reader: R, label: Option<&LabelColumn>) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = match label {
        Some(l) => Some(
            header
                .iter()
                .position(|h| *h == l.name)
                .ok_or_else(|| DatasetError::MissingLabelColumn(l.name.clone()))?,
        ),
        None => None,
    };
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|&(i, _)| Some(i) != label_idx)
        .map(|(_, h)| h.clone())
        .collect();
    if names.is_empty() {
        return Err(DatasetError::NoFeatures);
    }

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        if record.len() != header.len() {
            return Err(DatasetError::Ragged {
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (c, cell) in record.iter().enumerate() {
            if Some(c) == label_idx {
                labels.push(label.expect("label index implies label spec").parse(row, cell)?);
                continue;
            }
            let cell = cell.trim();
            let v: f64 = cell.parse().map_err(|_| DatasetError::Parse {
                row,
                column: header[c].clone(),
                value: cell.to_string(),
            })?;
            if !v.is_finite() {
                return Err(DatasetError::NonFinite {
                    row,
                    column: header[c].clone(),
                    value: cell.to_string(),
                });
            }
            values.push(v);
        }
    }
    let data = Dataset::new(values, names)?;
    if label_idx.is_some() {
        data.with_labels(labels)
    } else {
        Ok(data)
    }
}

/// Writes features (and a trailing `label` column when labels are present).
///
/// Floats use the shortest representation that parses back to the same bits.
pub fn write_csv_to<W: Write>(writer: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = data.feature_names().iter().map(String::as_str).collect();
    if data.labels().is_some() {
        header.push("label");
    }
    w.write_record(&header)?;
    let mut record = Vec::with_capacity(header.len());
    for (i, row) in data.rows().enumerate() {
        record.clear();
        record.extend(row.iter().map(|v| v.to_string()));
        if let Some(labels) = data.labels() {
            record.push(labels[i].to_string());
        }
        w.write_record(&record)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "<csv writer>".into(),
        source,
    })?;
    Ok(())
}

pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv_to(std::io::BufWriter::new(file), data)
}
