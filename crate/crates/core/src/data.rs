use crate::error::{Error, Result};

/// An n-by-d matrix of real-valued observations, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n: usize,
    d: usize,
    values: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter("dataset needs n >= 1".into()));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidParameter("dataset needs d >= 1".into()));
        }
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "row {i} has {} columns, expected {d}",
                    row.len()
                )));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::InvalidParameter(format!(
                        "non-finite value {v} at row {i}, column {j}"
                    )));
                }
                values.push(v);
            }
        }
        Ok(Self {
            n: rows.len(),
            d,
            values,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.d)
    }

    /// Per-column mean.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.d];
        for row in self.rows() {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.n as f64;
        }
        mean
    }

    /// Per-column sample variance (1.0 for a single row), floored at a
    /// small positive value so it can seed a positive-definite scale.
    pub fn variance_diagonal(&self) -> Vec<f64> {
        const FLOOR: f64 = 1e-9;
        if self.n < 2 {
            return vec![1.0; self.d];
        }
        let mean = self.mean();
        let mut var = vec![0.0; self.d];
        for row in self.rows() {
            for ((v, &x), &m) in var.iter_mut().zip(row).zip(&mean) {
                let delta = x - m;
                *v += delta * delta;
            }
        }
        for v in &mut var {
            *v = (*v / (self.n as f64 - 1.0)).max(FLOOR);
        }
        var
    }
}
