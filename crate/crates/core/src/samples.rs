use std::io::Write;

use crate::error::Result;
use crate::graph::WeightedWindow;

/// Row-major `count x dim` matrix of per-sample vertex values.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl SampleMatrix {
    pub fn from_rows(dim: usize, rows: impl IntoIterator<Item = Vec<f64>>) -> Self {
        let mut values = Vec::new();
        for row in rows {
            assert_eq!(row.len(), dim, "row length must match dimension");
            values.extend(row);
        }
        SampleMatrix { dim, values }
    }

    pub fn zeros(count: usize, dim: usize) -> Self {
        SampleMatrix {
            dim,
            values: vec![0.0; count * dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.values.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.dim.max(1))
    }

    pub fn column(&self, x: usize) -> Vec<f64> {
        self.rows().map(|r| r[x]).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> SampleMatrix {
        SampleMatrix {
            dim: self.dim,
            values: self.values.iter().map(|&x| f(x)).collect(),
        }
    }

    /// Entrywise combination of two matrices of the same shape.
    pub fn zip_with(&self, other: &SampleMatrix, f: impl Fn(f64, f64) -> f64) -> SampleMatrix {
        assert_eq!(self.dim, other.dim);
        assert_eq!(self.values.len(), other.values.len());
        SampleMatrix {
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        }
    }

    /// `sample,vertex,value` rows; vertices printed by id.
    pub fn write_csv<W: Write>(&self, window: &WeightedWindow, mut out: W) -> Result<()> {
        writeln!(out, "sample,vertex,value")?;
        for (i, row) in self.rows().enumerate() {
            for (x, v) in row.iter().enumerate() {
                writeln!(out, "{i},\"{}\",{v}", window.vertex(x))?;
            }
        }
        Ok(())
    }
}
