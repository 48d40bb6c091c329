use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// An `n x p` panel of observations on the grid `t_i = i / n`, `i = 1..=n`.
///
/// Rows are stored contiguously so that a single observation `X_i` is a slice.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesPanel {
    n: usize,
    p: usize,
    data: Vec<f64>,
}

impl TimeSeriesPanel {
    /// Builds a panel from row-major data.
    pub fn from_rows(n: usize, p: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 || p < 2 {
            return Err(Error::InvalidArgument(format!(
                "panel needs n >= 2 and p >= 2, got {n} x {p}"
            )));
        }
        if data.len() != n * p {
            return Err(Error::InvalidArgument(format!(
                "expected {} values for a {n} x {p} panel, got {}",
                n * p,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite value at row {}, column {}",
                pos / p + 1,
                pos % p + 1
            )));
        }
        Ok(Self { n, p, data })
    }

    pub fn from_matrix(m: &DMatrix<f64>) -> Result<Self> {
        let (n, p) = m.shape();
        let mut data = Vec::with_capacity(n * p);
        for r in 0..n {
            data.extend(m.row(r).iter());
        }
        Self::from_rows(n, p, data)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Observation `X_i` for the 1-based index `i`.
    pub fn obs(&self, i: usize) -> &[f64] {
        debug_assert!(i >= 1 && i <= self.n);
        &self.data[(i - 1) * self.p..i * self.p]
    }

    /// Row by 0-based position.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.p..(r + 1) * self.p]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Time point `t_i = i / n`.
    pub fn time(&self, i: usize) -> f64 {
        i as f64 / self.n as f64
    }

    pub fn to_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.n, self.p, &self.data)
    }

    /// Reads a headerless comma-separated panel, one observation per line.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut data = Vec::new();
        let mut p = None;
        let mut n = 0;
        for (line, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
            match p {
                None => p = Some(rec.len()),
                Some(w) if w != rec.len() => {
                    return Err(Error::Parse(format!(
                        "line {}: expected {w} fields, found {}",
                        line + 1,
                        rec.len()
                    )))
                }
                _ => {}
            }
            for field in rec.iter() {
                let v: f64 = field.parse().map_err(|_| {
                    Error::Parse(format!("line {}: cannot parse {field:?}", line + 1))
                })?;
                data.push(v);
            }
            n += 1;
        }
        Self::from_rows(n, p.unwrap_or(0), data)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for r in 0..self.n {
            write_csv_row(&mut w, self.row(r))?;
        }
        Ok(())
    }
}

pub(crate) fn write_csv_row<W: Write>(w: &mut W, row: &[f64]) -> Result<()> {
    let mut first = true;
    for v in row {
        if !first {
            w.write_all(b",")?;
        }
        first = false;
        write!(w, "{v}")?;
    }
    w.write_all(b"\n")?;
    Ok(())
}

/// Writes a dense matrix as headerless CSV.
pub fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, mut w: W) -> Result<()> {
    let mut buf = vec![0.0; m.ncols()];
    for r in 0..m.nrows() {
        for (c, b) in buf.iter_mut().enumerate() {
            *b = m[(r, c)];
        }
        write_csv_row(&mut w, &buf)?;
    }
    Ok(())
}
