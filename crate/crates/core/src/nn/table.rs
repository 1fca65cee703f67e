use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::NnError;

/// One free parameter row per state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableNet {
    rows: usize,
    width: usize,
    params: Vec<f64>,
}

impl TableNet {
    pub fn zeros(rows: usize, width: usize) -> TableNet {
        TableNet {
            rows,
            width,
            params: vec![0.0; rows * width],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.params[r * self.width..(r + 1) * self.width]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.params[r * self.width..(r + 1) * self.width]
    }

    pub fn forward(&self, rows: &[usize]) -> Result<Array2<f64>, NnError> {
        let mut out = Array2::zeros((rows.len(), self.width));
        for (i, &r) in rows.iter().enumerate() {
            if r >= self.rows {
                return Err(NnError::ShapeMismatch {
                    expected: self.rows,
                    got: r,
                });
            }
            for (o, p) in out.row_mut(i).iter_mut().zip(self.row(r)) {
                *o = *p;
            }
        }
        Ok(out)
    }

    /// Scatter-adds `d_out` rows into a gradient of the flat parameters.
    pub fn backward(&self, rows: &[usize], d_out: &Array2<f64>) -> Result<Vec<f64>, NnError> {
        if d_out.dim() != (rows.len(), self.width) {
            return Err(NnError::ShapeMismatch {
                expected: rows.len() * self.width,
                got: d_out.len(),
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        for (i, &r) in rows.iter().enumerate() {
            let dst = &mut grad[r * self.width..(r + 1) * self.width];
            for (g, d) in dst.iter_mut().zip(d_out.row(i)) {
                *g += d;
            }
        }
        Ok(grad)
    }
}
