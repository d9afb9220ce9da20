use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{MaskedDataset, RawTable, NEGATIVE_LABEL, POSITIVE_LABEL};
use crate::error::{GmcError, Result};
use crate::graph::SubjectMeta;
use crate::tensor::Tensor;

/// Column roles of an input CSV. Every column that is not the label, a
/// metadata column or explicitly ignored is read as a numeric feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub label_column: String,
    pub age_column: String,
    pub gender_column: String,
    /// Cell text treated as missing in addition to the empty string.
    pub missing_sentinel: Option<String>,
    pub ignore_columns: Vec<String>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            label_column: "label".into(),
            age_column: "age".into(),
            gender_column: "gender".into(),
            missing_sentinel: None,
            ignore_columns: Vec::new(),
        }
    }
}

impl CsvSchema {
    fn is_missing(&self, cell: &str) -> bool {
        cell.is_empty() || self.missing_sentinel.as_deref() == Some(cell)
    }
}

fn column_index(headers: &csv::StringRecord, name: &str) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| GmcError::Schema(format!("column `{name}` not found in header")))
}

fn parse_label(cell: &str, row: usize, column: &str) -> Result<u8> {
    match cell {
        POSITIVE_LABEL | "1" => Ok(1),
        NEGATIVE_LABEL | "0" => Ok(0),
        other => Err(GmcError::Parse {
            row,
            column: column.to_string(),
            detail: format!(
                "label `{other}` is not one of {POSITIVE_LABEL}, {NEGATIVE_LABEL}, 1, 0"
            ),
        }),
    }
}

/// Reads a subject table with a header row.
///
/// `row` in parse errors is 1-based over data rows (the header is row 0).
pub fn load_csv<P: AsRef<Path>>(path: P, schema: &CsvSchema) -> Result<RawTable> {
    read_table(File::open(path)?, schema)
}

pub fn read_table<R: Read>(input: R, schema: &CsvSchema) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let headers = reader.headers()?.clone();
    let label_idx = column_index(&headers, &schema.label_column)?;
    let age_idx = column_index(&headers, &schema.age_column)?;
    let gender_idx = column_index(&headers, &schema.gender_column)?;
    let mut ignored: HashSet<usize> = HashSet::new();
    for name in &schema.ignore_columns {
        ignored.insert(column_index(&headers, name)?);
    }
    let feature_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != label_idx && c != age_idx && c != gender_idx && !ignored.contains(&c))
        .collect();
    if feature_cols.is_empty() {
        return Err(GmcError::Schema("no feature columns".into()));
    }

    let mut table = RawTable {
        feature_names: feature_cols
            .iter()
            .map(|&c| headers[c].trim().to_string())
            .collect(),
        values: Vec::new(),
        labels: Vec::new(),
        meta: Vec::new(),
        label_name: schema.label_column.clone(),
    };
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let cell = |c: usize| record.get(c).unwrap_or("").trim();

        let label = cell(label_idx);
        table.labels.push(if schema.is_missing(label) {
            None
        } else {
            Some(parse_label(label, row, &schema.label_column)?)
        });

        let age_text = cell(age_idx);
        let age = age_text
            .parse::<f64>()
            .ok()
            .filter(|a| a.is_finite())
            .ok_or_else(|| GmcError::Parse {
                row,
                column: schema.age_column.clone(),
                detail: format!("age `{age_text}` is not a finite number"),
            })?;
        table.meta.push(SubjectMeta {
            age,
            gender: cell(gender_idx).to_string(),
        });

        let mut values = Vec::with_capacity(feature_cols.len());
        for &c in &feature_cols {
            let text = cell(c);
            if schema.is_missing(text) {
                values.push(None);
                continue;
            }
            match text.parse::<f64>() {
                Ok(v) if v.is_finite() => values.push(Some(v)),
                _ => {
                    return Err(GmcError::Parse {
                        row,
                        column: headers[c].trim().to_string(),
                        detail: format!("`{text}` is not a finite number"),
                    })
                }
            }
        }
        table.values.push(values);
    }
    Ok(table)
}

/// Writes `table` in the layout [`read_table`] expects: feature columns,
/// then label, age and gender. Missing cells are left empty.
pub fn write_table<W: Write>(out: W, table: &RawTable, schema: &CsvSchema) -> Result<()> {
    let mut writer = csv::Writer::from_writer(out);
    let mut header = table.feature_names.clone();
    header.extend([
        schema.label_column.clone(),
        schema.age_column.clone(),
        schema.gender_column.clone(),
    ]);
    writer.write_record(&header)?;
    let missing = schema.missing_sentinel.clone().unwrap_or_default();
    for i in 0..table.row_count() {
        let mut record: Vec<String> = table.values[i]
            .iter()
            .map(|v| v.map_or_else(|| missing.clone(), |x| x.to_string()))
            .collect();
        record.push(match table.labels[i] {
            Some(1) => POSITIVE_LABEL.to_string(),
            Some(_) => NEGATIVE_LABEL.to_string(),
            None => missing.clone(),
        });
        record.push(table.meta[i].age.to_string());
        record.push(table.meta[i].gender.clone());
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Writes `values.csv` (normalised `Z`), `mask.csv` (`Ω_a | Ω_b` side by
/// side) and `metadata.json` into `dir`.
pub fn write_snapshot<P: AsRef<Path>>(dir: P, ds: &MaskedDataset) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let header: Vec<String> = ds.columns.iter().map(|c| c.name.clone()).collect();
    write_matrix_csv(File::create(dir.join("values.csv"))?, &header, &ds.z)?;
    let mask = ds.feature_mask_full().add(&ds.label_mask_full())?;
    write_matrix_csv(File::create(dir.join("mask.csv"))?, &header, &mask)?;
    let mut meta = serde_json::to_string_pretty(&ds.metadata())?;
    meta.push('\n');
    std::fs::write(dir.join("metadata.json"), meta)?;
    Ok(())
}

/// Writes a dense matrix as CSV with the given header.
pub fn write_matrix_csv<W: Write>(out: W, header: &[String], m: &Tensor) -> Result<()> {
    if header.len() != m.cols() {
        return Err(GmcError::dim(
            "data::write_matrix_csv",
            format!("{} header names for {} columns", header.len(), m.cols()),
        ));
    }
    let mut writer = csv::Writer::from_writer(out);
    writer.write_record(header)?;
    for i in 0..m.rows() {
        writer.write_record(m.row(i).iter().map(|v| v.to_string()))?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads a matrix written by [`write_matrix_csv`], returning header and values.
pub fn read_matrix_csv<R: Read>(input: R) -> Result<(Vec<String>, Tensor)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(header.len());
        for (c, text) in record.iter().enumerate() {
            let v = text.trim().parse::<f64>().map_err(|_| GmcError::Parse {
                row: r + 1,
                column: header.get(c).cloned().unwrap_or_default(),
                detail: format!("`{text}` is not a number"),
            })?;
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Ok((header.clone(), Tensor::zeros(0, header.len())));
    }
    Ok((header, Tensor::from_rows(&rows)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "id,age,gender,a,b,label\n\
                          s1,71.5,F,1.0,2.0,cMCI\n\
                          s2,68,M,,3.5,sMCI\n\
                          s3,74,F,-1.25,NA,\n";

    fn schema() -> CsvSchema {
        CsvSchema {
            missing_sentinel: Some("NA".into()),
            ignore_columns: vec!["id".into()],
            ..CsvSchema::default()
        }
    }

    #[test]
    fn parses_missing_cells_and_labels() {
        let t = read_table(SAMPLE.as_bytes(), &schema()).unwrap();
        assert_eq!(t.feature_names, vec!["a", "b"]);
        assert_eq!(t.labels, vec![Some(1), Some(0), None]);
        assert_eq!(t.values[1][0], None);
        assert_eq!(t.values[2][1], None);
        assert_eq!(t.values[2][0], Some(-1.25));
        assert_eq!(t.meta[0].gender, "F");
        assert_eq!(t.observed_count(), 4);
    }

    #[test]
    fn bad_cell_reports_row_and_column() {
        let text = "age,gender,a,label\n70,F,1,cMCI\n71,M,oops,sMCI\n";
        match read_table(text.as_bytes(), &CsvSchema::default()) {
            Err(GmcError::Parse { row, column, .. }) => {
                assert_eq!(row, 2);
                assert_eq!(column, "a");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn absent_column_is_schema_error() {
        let text = "age,a,label\n70,1,cMCI\n";
        assert!(matches!(
            read_table(text.as_bytes(), &CsvSchema::default()),
            Err(GmcError::Schema(_))
        ));
    }

    #[test]
    fn matrix_csv_roundtrip_is_exact() {
        let m = Tensor::from_fn(3, 2, |i, j| (i as f64 + 0.1) / (j as f64 + 3.0));
        let mut buf = Vec::new();
        write_matrix_csv(&mut buf, &["x".into(), "y".into()], &m).unwrap();
        let (header, back) = read_matrix_csv(buf.as_slice()).unwrap();
        assert_eq!(header, vec!["x", "y"]);
        assert_eq!(back, m);
    }
}
