//! Observation matrices and their CSV representation.
//!
//! CSV files carry a header row. Observations use `x1..xm` and an optional
//! trailing `y` column, factors use `f1..fd`. Numbers are written with the
//! shortest representation that round-trips exactly.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// An n×m matrix of real observations, n ≥ 2, m ≥ 1, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    values: DMatrix<f64>,
    column_means: DVector<f64>,
}

impl DataMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (n, m) = values.shape();
        if n < 2 {
            return Err(Error::input(format!("need at least 2 observations, got {n}")));
        }
        if m < 1 {
            return Err(Error::input("need at least one column"));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!(
                "non-finite value at row {}, column {}",
                pos % n,
                pos / n
            )));
        }
        let column_means = linalg::column_means(&values);
        Ok(Self { values, column_means })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::input("ragged rows"));
        }
        Self::new(DMatrix::from_fn(rows.len(), m, |i, j| rows[i][j]))
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn column_means(&self) -> &DVector<f64> {
        &self.column_means
    }

    pub fn centered(&self) -> DMatrix<f64> {
        linalg::center_columns(&self.values)
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }
}

/// Observations paired with a real label per row.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub x: DataMatrix,
    pub y: DVector<f64>,
}

impl LabeledDataset {
    pub fn new(x: DataMatrix, y: DVector<f64>) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::input(format!(
                "{} observations but {} labels",
                x.nrows(),
                y.len()
            )));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("non-finite label"));
        }
        Ok(Self { x, y })
    }
}

/// Default header names `prefix1..prefixk`.
pub fn numbered_headers(prefix: &str, k: usize) -> Vec<String> {
    (1..=k).map(|i| format!("{prefix}{i}")).collect()
}

/// Reads a headed numeric CSV file.
pub fn read_csv(path: impl AsRef<Path>) -> Result<(Vec<String>, DMatrix<f64>)> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::input(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_owned).collect();
    let mut data = Vec::new();
    let mut rows = 0;
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != headers.len() {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, header has {}",
                path.display(),
                r + 1,
                record.len(),
                headers.len()
            )));
        }
        for field in record.iter() {
            let v: f64 = field.parse().map_err(|_| {
                Error::Format(format!(
                    "{}: row {}: cannot parse {field:?} as a number",
                    path.display(),
                    r + 1
                ))
            })?;
            data.push(v);
        }
        rows += 1;
    }
    Ok((headers.clone(), DMatrix::from_row_slice(rows, headers.len(), &data)))
}

/// Writes a headed numeric CSV file.
pub fn write_csv(path: impl AsRef<Path>, headers: &[String], values: &DMatrix<f64>) -> Result<()> {
    if headers.len() != values.ncols() {
        return Err(Error::input("header count does not match column count"));
    }
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(headers)?;
    let mut row = Vec::with_capacity(values.ncols());
    for i in 0..values.nrows() {
        row.clear();
        row.extend((0..values.ncols()).map(|j| format!("{}", values[(i, j)])));
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads an observation file. A column named `y` is split off as labels.
pub fn read_observations(path: impl AsRef<Path>) -> Result<(DataMatrix, Option<DVector<f64>>)> {
    let (headers, values) = read_csv(path)?;
    match headers.iter().position(|h| h == "y") {
        Some(yi) => {
            let y = values.column(yi).into_owned();
            let x = values.remove_column(yi);
            Ok((DataMatrix::new(x)?, Some(y)))
        }
        None => Ok((DataMatrix::new(values)?, None)),
    }
}

/// Reads a single-column label file.
pub fn read_labels(path: impl AsRef<Path>) -> Result<DVector<f64>> {
    let (_, values) = read_csv(path)?;
    if values.ncols() != 1 {
        return Err(Error::Format(format!(
            "label file must have one column, found {}",
            values.ncols()
        )));
    }
    Ok(values.column(0).into_owned())
}

/// Writes `x1..xm` and, when present, a trailing `y` column.
pub fn write_observations(path: impl AsRef<Path>, x: &DMatrix<f64>, y: Option<&DVector<f64>>) -> Result<()> {
    let mut headers = numbered_headers("x", x.ncols());
    match y {
        Some(y) => {
            headers.push("y".into());
            let full = linalg::hstack(x, &DMatrix::from_column_slice(y.len(), 1, y.as_slice()));
            write_csv(path, &headers, &full)
        }
        None => write_csv(path, &headers, x),
    }
}
