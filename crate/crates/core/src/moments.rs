//! Data ingestion and the empirical moment matrices.
//!
//! The estimator only ever sees the data through two `p x p` matrices:
//!
//! * `S = n^-1 sum_i x_i x_i^T`, the second moment of the centered design;
//! * `Q = n^-1 sum_i (y_i - ybar) x_i x_i^T`, the response-weighted moment.
//!
//! Both are symmetrized explicitly after accumulation.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// How the response column is located in a CSV header.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ResponseColumn {
    Name(String),
    /// 0-based column index.
    Index(usize),
}

impl Default for ResponseColumn {
    fn default() -> Self {
        ResponseColumn::Name("y".to_string())
    }
}

/// Response vector plus design matrix (rows are observations).
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    y: DVector<f64>,
    x: DMatrix<f64>,
    names: Vec<String>,
}

impl DataSet {
    /// Builds a data set with default column names `x1..xp`.
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        let names = (1..=x.ncols()).map(|j| format!("x{j}")).collect();
        Self::with_names(y, x, names)
    }

    pub fn with_names(y: DVector<f64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        let (n, p) = x.shape();
        if y.len() != n {
            return Err(Error::InvalidData(format!(
                "response has {} entries but design has {n} rows",
                y.len()
            )));
        }
        if n < 2 {
            return Err(Error::InvalidData(format!("need n >= 2 observations, got {n}")));
        }
        if p < 1 {
            return Err(Error::InvalidData("need at least one predictor column".into()));
        }
        if names.len() != p {
            return Err(Error::InvalidData(format!(
                "{} column names for {p} columns",
                names.len()
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidData(format!("non-finite response at row {}", i + 1)));
        }
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            // column-major storage
            return Err(Error::InvalidData(format!(
                "non-finite design entry at row {}, column {}",
                k % n + 1,
                k / n + 1
            )));
        }
        Ok(Self { y, x, names })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    /// Restricts the design to the given columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> DataSet {
        let x = self.x.select_columns(cols);
        let names = cols.iter().map(|&j| self.names[j].clone()).collect();
        DataSet {
            y: self.y.clone(),
            x,
            names,
        }
    }

    /// Restricts to the given observations, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> DataSet {
        DataSet {
            y: DVector::from_iterator(rows.len(), rows.iter().map(|&i| self.y[i])),
            x: self.x.select_rows(rows),
            names: self.names.clone(),
        }
    }

    pub fn column_means(&self) -> DVector<f64> {
        let n = self.n() as f64;
        DVector::from_iterator(self.p(), self.x.column_iter().map(|c| c.sum() / n))
    }

    pub fn response_mean(&self) -> f64 {
        self.y.mean()
    }
}

/// Reads a CSV file with one header row.
///
/// `y` is taken from the response column; every other column becomes a
/// predictor, in header order.
pub fn load_csv(path: impl AsRef<Path>, response: &ResponseColumn) -> Result<DataSet> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let parse_err = |row: usize, column: &str, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column: column.to_string(),
        message,
    };

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| parse_err(0, "-", e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(parse_err(
            0,
            "-",
            format!("need a response and at least one predictor, header has {} columns", header.len()),
        ));
    }
    let response_idx = match response {
        ResponseColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(0, name, "response column not found in header".into()))?,
        ResponseColumn::Index(i) if *i < header.len() => *i,
        ResponseColumn::Index(i) => {
            return Err(parse_err(
                0,
                &i.to_string(),
                format!("response index out of range for {} columns", header.len()),
            ))
        }
    };

    let mut y = Vec::new();
    let mut rows: Vec<f64> = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| parse_err(row, "-", e.to_string()))?;
        if record.len() != header.len() {
            return Err(parse_err(
                row,
                "-",
                format!("ragged row: expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for (j, cell) in record.iter().enumerate() {
            if cell.is_empty() {
                return Err(parse_err(row, &header[j], "empty cell".into()));
            }
            let v: f64 = cell
                .parse()
                .map_err(|_| parse_err(row, &header[j], format!("non-numeric value {cell:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(row, &header[j], format!("non-finite value {cell:?}")));
            }
            if j == response_idx {
                y.push(v);
            } else {
                rows.push(v);
            }
        }
    }

    let n = y.len();
    if n < 2 {
        return Err(Error::InsufficientRows {
            path: path.to_path_buf(),
            found: n,
        });
    }
    let p = header.len() - 1;
    let names = header
        .into_iter()
        .enumerate()
        .filter(|&(j, _)| j != response_idx)
        .map(|(_, h)| h)
        .collect();
    DataSet::with_names(DVector::from_vec(y), DMatrix::from_row_slice(n, p, &rows), names)
}

/// Subtracts each column's sample mean from the design. The response is left alone.
pub fn center(data: &DataSet) -> DataSet {
    let means = data.column_means();
    center_with(data, &means)
}

/// Subtracts the supplied column means (e.g. training-fold means applied to a validation fold).
pub fn center_with(data: &DataSet, means: &DVector<f64>) -> DataSet {
    let mut x = data.x.clone();
    for (mut col, m) in x.column_iter_mut().zip(means.iter()) {
        col.add_scalar_mut(-m);
    }
    DataSet {
        y: data.y.clone(),
        x,
        names: data.names.clone(),
    }
}

/// Centers and scales every column to unit (population) variance.
/// Constant columns are only centered.
pub fn standardize(data: &DataSet) -> DataSet {
    let mut out = center(data);
    let n = out.n() as f64;
    for mut col in out.x.column_iter_mut() {
        let sd = (col.norm_squared() / n).sqrt();
        if sd > 0.0 {
            col /= sd;
        }
    }
    out
}

/// The solver's view of the data.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub s: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub n: usize,
    pub p: usize,
}

impl MomentPair {
    /// Wraps externally supplied moments, checking shape, finiteness and symmetry.
    pub fn new(s: DMatrix<f64>, q: DMatrix<f64>, n: usize) -> Result<Self> {
        let p = s.nrows();
        if !s.is_square() || q.shape() != s.shape() {
            return Err(Error::InvalidData(format!(
                "moment shapes {:?} and {:?} must be equal and square",
                s.shape(),
                q.shape()
            )));
        }
        if s.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite moment entry".into()));
        }
        Ok(Self {
            s: symmetrize(&s),
            q: symmetrize(&q),
            n,
            p,
        })
    }
}

/// Builds `S` and `Q` after centering the design on its own column means.
pub fn compute_moments(data: &DataSet) -> Result<MomentPair> {
    moments_with(data, &data.column_means(), data.response_mean())
}

/// Builds `S` and `Q` with externally supplied centering constants.
pub fn moments_with(data: &DataSet, x_means: &DVector<f64>, y_mean: f64) -> Result<MomentPair> {
    if data.y.iter().chain(data.x.iter()).any(|v| !v.is_finite()) || !y_mean.is_finite() {
        return Err(Error::InvalidData("non-finite input to moment computation".into()));
    }
    let (n, p) = data.x.shape();
    let xc = center_with(data, x_means).x;
    let nf = n as f64;

    let s = xc.tr_mul(&xc) / nf;

    let mut weighted = xc.clone();
    for (i, mut row) in weighted.row_iter_mut().enumerate() {
        row *= data.y[i] - y_mean;
    }
    let q = weighted.tr_mul(&xc) / nf;

    Ok(MomentPair {
        s: symmetrize(&s),
        q: symmetrize(&q),
        n,
        p,
    })
}

/// `(A + A^T) / 2`.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}
