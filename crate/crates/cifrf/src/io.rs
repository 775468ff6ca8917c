//! CSV and JSON file formats.
//!
//! Data files carry a header row. Rows are numbered from 1, counting data
//! rows only. Floats are written in shortest round-trip form.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use cifrf_core::{Dataset, Error, Matrix, ObservedRecord};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{CliError, CliResult};

/// Column mapping for an observed-data file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Schema {
    pub time: String,
    pub status: String,
    /// Covariate columns in order; `None` takes every other column except
    /// `id`.
    pub covariates: Option<Vec<String>>,
    /// Number of causes `K`; `None` uses the largest status present.
    pub causes: Option<u32>,
}

impl Default for Schema {
    fn default() -> Self {
        Schema { time: "time".into(), status: "status".into(), covariates: None, causes: None }
    }
}

fn open(path: &Path) -> CliResult<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::read(path, e))
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    File::create(path).map(BufWriter::new).map_err(|e| CliError::write(path, e))
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader)
}

fn csv_error(path: &Path, row: usize, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::read(path, io),
        other => CliError::Parse { path: path.to_path_buf(), row, message: format!("{other:?}") },
    }
}

fn headers<R: Read>(path: &Path, rdr: &mut csv::Reader<R>) -> CliResult<Vec<String>> {
    let h = rdr.headers().map_err(|e| csv_error(path, 0, e))?;
    Ok(h.iter().map(str::to_owned).collect())
}

fn column(path: &Path, headers: &[String], name: &str) -> CliResult<usize> {
    headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::schema(path, format!("missing column '{name}'")))
}

fn parse_f64(path: &Path, row: usize, name: &str, field: &str) -> CliResult<f64> {
    field.parse::<f64>().map_err(|_| CliError::Parse {
        path: path.to_path_buf(),
        row,
        message: format!("column '{name}': '{field}' is not a number"),
    })
}

/// Formats a float so that parsing it back yields the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

fn relabel(path: &Path, e: Error) -> CliError {
    match e {
        Error::Validation { row: Some(i), message } => CliError::Validation { path: path.to_path_buf(), row: i + 1, message },
        other => CliError::Core(other),
    }
}

pub fn load_csv(path: &Path, schema: &Schema) -> CliResult<Dataset> {
    read_dataset(open(path)?, path, schema)
}

/// Parses an observed-data file. `path` only labels errors.
pub fn read_dataset<R: Read>(reader: R, path: &Path, schema: &Schema) -> CliResult<Dataset> {
    let mut rdr = csv_reader(reader);
    let headers = headers(path, &mut rdr)?;
    let ti = column(path, &headers, &schema.time)?;
    let si = column(path, &headers, &schema.status)?;
    let names: Vec<String> = match &schema.covariates {
        Some(names) => names.clone(),
        None => headers
            .iter()
            .enumerate()
            .filter(|&(j, h)| j != ti && j != si && h != "id")
            .map(|(_, h)| h.clone())
            .collect(),
    };
    if names.is_empty() {
        return Err(CliError::schema(path, "no covariate columns"));
    }
    let cols = names.iter().map(|n| column(path, &headers, n)).collect::<CliResult<Vec<_>>>()?;

    let mut records = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_error(path, row, e))?;
        let field = |j: usize| rec.get(j).unwrap_or("");
        let time = parse_f64(path, row, &schema.time, field(ti))?;
        let status_text = field(si);
        let status: u32 = status_text.parse().map_err(|_| CliError::Parse {
            path: path.to_path_buf(),
            row,
            message: format!("status '{status_text}' is not a non-negative integer"),
        })?;
        let w = cols
            .iter()
            .zip(&names)
            .map(|(&j, n)| parse_f64(path, row, n, field(j)))
            .collect::<CliResult<Vec<_>>>()?;
        let record = ObservedRecord::new(time, status, w).map_err(|e| match e {
            Error::Validation { message, .. } => CliError::Validation { path: path.to_path_buf(), row, message },
            other => CliError::Core(other),
        })?;
        records.push(record);
    }
    let k = match schema.causes {
        Some(k) => k,
        None => records.iter().map(ObservedRecord::cause).max().unwrap_or(0).max(1),
    };
    Dataset::new(records, k, Some(names)).map_err(|e| relabel(path, e))
}

/// Covariate names of a dataset, `W1..Wp` when it carries none.
pub fn covariate_names(data: &Dataset) -> Vec<String> {
    match data.covariate_names() {
        Some(n) => n.to_vec(),
        None => (1..=data.p()).map(|j| format!("W{j}")).collect(),
    }
}

pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    let mut header = vec!["time".to_string(), "status".to_string()];
    header.extend(covariate_names(data));
    let rows = data.records().iter().map(|r| {
        let mut row = vec![fmt_f64(r.time()), r.cause().to_string()];
        row.extend(r.covariates().iter().map(|&x| fmt_f64(x)));
        row
    });
    write_csv(path, &header, rows)
}

/// Reads the named columns of a file into a matrix, one row per data row.
pub fn read_covariates(path: &Path, names: &[String]) -> CliResult<Matrix> {
    let mut rdr = csv_reader(open(path)?);
    let headers = headers(path, &mut rdr)?;
    let cols = names.iter().map(|n| column(path, &headers, n)).collect::<CliResult<Vec<_>>>()?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 1;
        let rec = rec.map_err(|e| csv_error(path, row, e))?;
        let w = cols
            .iter()
            .zip(names)
            .map(|(&j, n)| parse_f64(path, row, n, rec.get(j).unwrap_or("")))
            .collect::<CliResult<Vec<_>>>()?;
        rows.push(w);
    }
    if rows.is_empty() {
        return Err(CliError::format(path, "no data rows"));
    }
    Ok(Matrix::from_rows(&rows)?)
}

/// Reads every row of a headed CSV file as strings keyed by the header.
pub fn read_table(path: &Path) -> CliResult<(Vec<String>, Vec<Vec<String>>)> {
    let mut rdr = csv_reader(open(path)?);
    let headers = headers(path, &mut rdr)?;
    let mut rows = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_error(path, k + 1, e))?;
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok((headers, rows))
}

pub fn write_csv<I, S>(path: &Path, header: &[S], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = Vec<String>>,
    S: AsRef<str>,
{
    let mut w = csv::Writer::from_writer(create(path)?);
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => CliError::write(path, io),
        other => CliError::write(path, std::io::Error::other(format!("{other:?}"))),
    };
    w.write_record(header.iter().map(AsRef::as_ref)).map_err(io)?;
    for row in rows {
        w.write_record(&row).map_err(io)?;
    }
    w.flush().map_err(|e| CliError::write(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| CliError::write(path, e.into()))?;
    out.write_all(b"\n").and_then(|_| out.flush()).map_err(|e| CliError::write(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    serde_json::from_reader(open(path)?).map_err(|e| CliError::format(path, e))
}
