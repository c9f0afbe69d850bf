use nalgebra::{DMatrix, DVector};
use sprs::{CsMat, TriMat};

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix(CsMat<f64>);

impl CsrMatrix {
    /// Duplicate entries are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if let Some(&(r, c, _)) = entries.iter().find(|(r, c, _)| *r >= nrows || *c >= ncols) {
            return Err(Error::Dimension(format!(
                "entry ({r}, {c}) outside a {nrows}x{ncols} matrix"
            )));
        }
        let mut tri = TriMat::with_capacity((nrows, ncols), entries.len());
        for (r, c, v) in entries {
            tri.add_triplet(r, c, v);
        }
        Ok(Self(tri.to_csr()))
    }

    pub fn nrows(&self) -> usize {
        self.0.rows()
    }

    pub fn ncols(&self) -> usize {
        self.0.cols()
    }

    pub fn nnz(&self) -> usize {
        self.0.nnz()
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.0
            .outer_view(r)
            .into_iter()
            .flat_map(|v| v.iter().map(|(c, x)| (c, *x)).collect::<Vec<_>>())
    }

    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.ncols(), "vector length");
        assert_eq!(out.len(), self.nrows(), "output length");
        for (o, row) in out.iter_mut().zip(self.0.outer_iterator()) {
            *o = row.iter().map(|(c, v)| v * x[c]).sum();
        }
    }

    pub fn mul(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.nrows());
        self.mul_into(x.as_slice(), out.as_mut_slice());
        out
    }

    pub fn transpose(&self) -> Self {
        Self(self.0.transpose_view().to_other_storage())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self(self.0.map(|v| v * factor))
    }

    /// `α·I + β·self` for a square matrix.
    pub fn shifted(&self, alpha: f64, beta: f64) -> Self {
        assert_eq!(self.nrows(), self.ncols(), "square matrix");
        let mut entries: Vec<_> = (0..self.nrows())
            .flat_map(|r| self.row(r).map(move |(c, v)| (r, c, beta * v)))
            .collect();
        entries.extend((0..self.nrows()).map(|i| (i, i, alpha)));
        Self::from_triplets(self.nrows(), self.ncols(), entries).expect("indices are in range")
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows(), self.ncols());
        for (r, row) in self.0.outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                m[(r, c)] += v;
            }
        }
        m
    }

    /// Column `c` as a dense vector.
    pub fn column(&self, c: usize) -> DVector<f64> {
        DVector::from_fn(self.nrows(), |r, _| self.row(r).filter(|(cc, _)| *cc == c).map(|(_, v)| v).sum())
    }
}

/// Conjugate gradients for a symmetric positive definite `a`, starting from `x`.
///
/// Stops when `‖r‖ ≤ tol·‖b‖`; returns the number of iterations.
pub fn conjugate_gradient(a: &CsrMatrix, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<usize> {
    let n = b.len();
    let mut ax = vec![0.0; n];
    a.mul_into(x, &mut ax);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, ax)| b - ax).collect();
    let b_norm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(0);
    }
    let target = tol * b_norm;
    let mut p = r.clone();
    let mut rr: f64 = r.iter().map(|v| v * v).sum();
    let mut ap = vec![0.0; n];
    for it in 0..max_iter {
        if rr.sqrt() <= target {
            return Ok(it);
        }
        a.mul_into(&p, &mut ap);
        let pap: f64 = p.iter().zip(&ap).map(|(p, q)| p * q).sum();
        if !(pap > 0.0) {
            return Err(Error::InvalidParameter("matrix is not positive definite".into()));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rr_new: f64 = r.iter().map(|v| v * v).sum();
        let beta = rr_new / rr;
        rr = rr_new;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
    }
    if rr.sqrt() <= target {
        Ok(max_iter)
    } else {
        Err(Error::InvalidParameter(format!(
            "conjugate gradients did not converge in {max_iter} iterations (residual {:e})",
            rr.sqrt() / b_norm
        )))
    }
}
