use super::subset::{SubsetOperator, SubsetScheme};
use crate::error::{check_len, Error, Result};

/// Dense row-major matrix with a row partition, for small verification
/// instances where constants are computed by brute force.
#[derive(Clone, Debug)]
pub struct DenseSubsetOperator {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
    scheme: SubsetScheme,
    image_shape: (usize, usize),
}

impl DenseSubsetOperator {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>, scheme: SubsetScheme) -> Result<Self> {
        check_len("dense operator", n_rows * n_cols, data.len())?;
        if scheme.n_units() != n_rows {
            return Err(Error::Config(format!(
                "row partition covers {} rows, matrix has {n_rows}",
                scheme.n_units()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
            scheme,
            image_shape: (1, n_cols),
        })
    }

    /// Reinterpret the image vector with a 2D shape (for convolutional slots).
    pub fn with_image_shape(mut self, rows: usize, cols: usize) -> Result<Self> {
        check_len("dense image shape", self.n_cols, rows * cols)?;
        self.image_shape = (rows, cols);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn scheme(&self) -> &SubsetScheme {
        &self.scheme
    }

    #[inline]
    fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }
}

impl SubsetOperator for DenseSubsetOperator {
    fn image_shape(&self) -> (usize, usize) {
        self.image_shape
    }

    fn measurement_len(&self) -> usize {
        self.n_rows
    }

    fn n_subsets(&self) -> usize {
        self.scheme.m()
    }

    fn subset_shape(&self) -> (usize, usize) {
        (1, self.scheme.q_units())
    }

    fn subset_forward(&self, i: usize, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "dense forward input length");
        self.scheme
            .subset(i)
            .iter()
            .map(|&r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn subset_adjoint(&self, i: usize, y: &[f64]) -> Vec<f64> {
        let rows = self.scheme.subset(i);
        assert_eq!(y.len(), rows.len(), "dense adjoint input length");
        let mut out = vec![0.0; self.n_cols];
        for (&r, &v) in rows.iter().zip(y) {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * v;
            }
        }
        out
    }

    fn restrict(&self, i: usize, full: &[f64]) -> Vec<f64> {
        self.scheme.subset(i).iter().map(|&r| full[r]).collect()
    }

    fn embed_add(&self, i: usize, part: &[f64], full: &mut [f64]) {
        for (&r, &v) in self.scheme.subset(i).iter().zip(part) {
            full[r] += v;
        }
    }
}
