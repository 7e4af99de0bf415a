//! delimited-text ingestion and export for spell files.
//!
//! files are utf-8 with a header row; the delimiter defaults to a comma.
//! a json schema maps the logical fields onto column names; columns not
//! claimed by the schema are covariates, taken in header order. missing
//! values are empty fields. structural problems (unknown columns,
//! unparseable numbers) abort the load; record-level invariant violations
//! are collected into a rejection report and the offending rows skipped.

use crate::error::{Result, SurvError};
use crate::spells::{Dataset, SpellRecord};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

/// column mapping for spell files. `covariates: None` claims every column
/// not otherwise named, in header order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpellSchema {
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_regime")]
    pub regime: String,
    #[serde(default = "default_treat")]
    pub treat_time: String,
    #[serde(default = "default_exit")]
    pub exit_time: String,
    #[serde(default = "default_censor")]
    pub censor_time: String,
    #[serde(default)]
    pub covariates: Option<Vec<String>>,
}

fn default_delimiter() -> char {
    ','
}
fn default_id() -> String {
    "id".into()
}
fn default_regime() -> String {
    "regime".into()
}
fn default_treat() -> String {
    "treat_time".into()
}
fn default_exit() -> String {
    "exit_time".into()
}
fn default_censor() -> String {
    "censor_time".into()
}

impl Default for SpellSchema {
    fn default() -> Self {
        SpellSchema {
            delimiter: default_delimiter(),
            id: default_id(),
            regime: default_regime(),
            treat_time: default_treat(),
            exit_time: default_exit(),
            censor_time: default_censor(),
            covariates: None,
        }
    }
}

impl SpellSchema {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let schema: SpellSchema = serde_json::from_str(&text)?;
        schema.delimiter_byte()?;
        Ok(schema)
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter).map_err(|_| {
            SurvError::Schema(format!(
                "delimiter `{}` is not a single-byte character",
                self.delimiter
            ))
        })
    }
}

/// one skipped row and why.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based data row index (header excluded)
    pub row: usize,
    pub id: String,
    pub reason: String,
}

/// load outcome: how many rows were seen, how many made it in, and the
/// rows that were rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LoadReport {
    pub rows_read: usize,
    pub loaded: usize,
    pub rejections: Vec<Rejection>,
}

struct ColumnMap {
    id: usize,
    regime: usize,
    treat: usize,
    exit: usize,
    censor: usize,
    covariates: Vec<(usize, String)>,
}

fn resolve_columns(header: &csv::StringRecord, schema: &SpellSchema) -> Result<ColumnMap> {
    let position = |name: &str| -> Result<usize> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| SurvError::Schema(format!("column `{name}` not found in header")))
    };
    let id = position(&schema.id)?;
    let regime = position(&schema.regime)?;
    let treat = position(&schema.treat_time)?;
    let exit = position(&schema.exit_time)?;
    let censor = position(&schema.censor_time)?;
    let covariates = match &schema.covariates {
        Some(names) => names
            .iter()
            .map(|n| Ok((position(n)?, n.clone())))
            .collect::<Result<Vec<_>>>()?,
        None => header
            .iter()
            .enumerate()
            .filter(|(i, _)| ![id, regime, treat, exit, censor].contains(i))
            .map(|(i, n)| (i, n.to_string()))
            .collect(),
    };
    Ok(ColumnMap {
        id,
        regime,
        treat,
        exit,
        censor,
        covariates,
    })
}

fn parse_opt_f64(raw: &str, row: usize, field: &str) -> Result<Option<f64>> {
    let trimmed = raw.trim();
    if trimmed.is_empty() {
        return Ok(None);
    }
    trimmed
        .parse::<f64>()
        .map(Some)
        .map_err(|e| SurvError::MalformedRow {
            row,
            field: field.into(),
            detail: e.to_string(),
        })
}

/// reads a spell file. returns the validated dataset and a report listing
/// rejected rows; parse-level failures abort with the row index.
pub fn load_spells(path: &Path, schema: &SpellSchema) -> Result<(Dataset, LoadReport)> {
    let file = std::fs::File::open(path)?;
    load_spells_reader(file, schema)
}

/// same as [`load_spells`] over any reader.
pub fn load_spells_reader<R: Read>(
    reader: R,
    schema: &SpellSchema,
) -> Result<(Dataset, LoadReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .flexible(false)
        .from_reader(reader);
    let header = rdr.headers()?.clone();
    let map = resolve_columns(&header, schema)?;
    let covariate_names: Vec<String> = map.covariates.iter().map(|(_, n)| n.clone()).collect();

    let mut records = Vec::new();
    let mut rejections = Vec::new();
    let mut rows_read = 0usize;
    for (i, row) in rdr.records().enumerate() {
        let row_ix = i + 1;
        rows_read += 1;
        let row = row?;
        let get = |col: usize| row.get(col).unwrap_or("");
        let id = get(map.id).trim().to_string();
        if id.is_empty() {
            return Err(SurvError::MalformedRow {
                row: row_ix,
                field: schema.id.clone(),
                detail: "empty id".into(),
            });
        }
        let regime_raw = get(map.regime).trim();
        let regime = regime_raw
            .parse::<u8>()
            .map_err(|e| SurvError::MalformedRow {
                row: row_ix,
                field: schema.regime.clone(),
                detail: e.to_string(),
            })?;
        let treat_time = parse_opt_f64(get(map.treat), row_ix, &schema.treat_time)?;
        let exit_time = parse_opt_f64(get(map.exit), row_ix, &schema.exit_time)?;
        let censor_time = parse_opt_f64(get(map.censor), row_ix, &schema.censor_time)?;
        let covariates = map
            .covariates
            .iter()
            .map(|(col, name)| {
                parse_opt_f64(get(*col), row_ix, name)?.ok_or_else(|| SurvError::MalformedRow {
                    row: row_ix,
                    field: name.clone(),
                    detail: "covariate value missing".into(),
                })
            })
            .collect::<Result<Vec<f64>>>()?;

        let record = SpellRecord {
            id,
            regime,
            treat_time,
            exit_time,
            censor_time,
            covariates,
        };
        match record.violation(covariate_names.len()) {
            Some(reason) => rejections.push(Rejection {
                row: row_ix,
                id: record.id,
                reason,
            }),
            None => records.push(record),
        }
    }

    let loaded = records.len();
    let dataset = Dataset::new(records, covariate_names)?;
    Ok((
        dataset,
        LoadReport {
            rows_read,
            loaded,
            rejections,
        },
    ))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

/// writes a dataset back to delimited text using the schema's column
/// names. loading the output with the same schema reproduces the dataset.
pub fn write_spells(dataset: &Dataset, path: &Path, schema: &SpellSchema) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_spells_writer(dataset, file, schema)
}

/// same as [`write_spells`] over any writer.
pub fn write_spells_writer<W: Write>(
    dataset: &Dataset,
    writer: W,
    schema: &SpellSchema,
) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new()
        .delimiter(schema.delimiter_byte()?)
        .from_writer(writer);
    let covariate_names: Vec<String> = match &schema.covariates {
        Some(names) => {
            if names.len() != dataset.covariate_names().len() {
                return Err(SurvError::Schema(format!(
                    "schema lists {} covariate columns, dataset has {}",
                    names.len(),
                    dataset.covariate_names().len()
                )));
            }
            names.clone()
        }
        None => dataset.covariate_names().to_vec(),
    };
    let mut header = vec![
        schema.id.clone(),
        schema.regime.clone(),
        schema.treat_time.clone(),
        schema.exit_time.clone(),
        schema.censor_time.clone(),
    ];
    header.extend(covariate_names);
    wtr.write_record(&header)?;
    for r in dataset.records() {
        let mut row = vec![
            r.id.clone(),
            r.regime.to_string(),
            fmt_opt(r.treat_time),
            fmt_opt(r.exit_time),
            fmt_opt(r.censor_time),
        ];
        row.extend(r.covariates.iter().map(|v| format!("{v}")));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "\
id,regime,treat_time,exit_time,censor_time,x1
a,0,,3,,1
b,1,2,5,,0
c,0,4,,6,1
d,1,7,5,,0
";

    #[test]
    fn loads_and_reports_rejections() {
        let (ds, report) = load_spells_reader(SAMPLE.as_bytes(), &SpellSchema::default()).unwrap();
        assert_eq!(report.rows_read, 4);
        assert_eq!(report.loaded, 3);
        assert_eq!(report.rejections.len(), 1);
        assert_eq!(report.rejections[0].id, "d");
        assert_eq!(report.rejections[0].reason, "treatment after terminal event");
        assert_eq!(ds.covariate_names(), ["x1"]);
        assert_eq!(ds.records()[1].treat_time, Some(2.0));
    }

    #[test]
    fn malformed_number_aborts_with_row_index() {
        let text = "id,regime,treat_time,exit_time,censor_time\na,0,,oops,\n";
        let err = load_spells_reader(text.as_bytes(), &SpellSchema::default()).unwrap_err();
        match err {
            SurvError::MalformedRow { row, field, .. } => {
                assert_eq!(row, 1);
                assert_eq!(field, "exit_time");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_column_is_a_schema_error() {
        let text = "id,regime,exit_time\na,0,3\n";
        let err = load_spells_reader(text.as_bytes(), &SpellSchema::default()).unwrap_err();
        assert!(matches!(err, SurvError::Schema(_)));
    }

    #[test]
    fn roundtrip_preserves_records() {
        let (ds, _) = load_spells_reader(SAMPLE.as_bytes(), &SpellSchema::default()).unwrap();
        let mut buf = Vec::new();
        write_spells_writer(&ds, &mut buf, &SpellSchema::default()).unwrap();
        let (ds2, report2) = load_spells_reader(buf.as_slice(), &SpellSchema::default()).unwrap();
        assert_eq!(report2.rejections.len(), 0);
        assert_eq!(ds, ds2);
    }

    #[test]
    fn custom_delimiter_and_columns() {
        let schema = SpellSchema {
            delimiter: ';',
            id: "subject".into(),
            regime: "z".into(),
            treat_time: "s".into(),
            exit_time: "t".into(),
            censor_time: "c".into(),
            covariates: Some(vec!["a2".into()]),
        };
        let text = "subject;z;s;t;c;a2;junk\nu1;1;2;4;;1;zzz\n";
        let (ds, _) = load_spells_reader(text.as_bytes(), &schema).unwrap();
        assert_eq!(ds.len(), 1);
        assert_eq!(ds.covariate_names(), ["a2"]);
        assert_eq!(ds.records()[0].covariates, vec![1.0]);
    }
}
