use nalgebra::DVector;

use super::Grid2D;
use crate::engine::gram_deviation;
use crate::error::{Error, Result};

/// Polynomials of total degree `≤ degree`, orthonormalized on the grid for
/// `⟨a, b⟩ = dx·dy·Σ a b`.
#[derive(Clone, Debug)]
pub struct PolyBasis {
    degree: usize,
    weight: f64,
    vectors: Vec<DVector<f64>>,
}

impl PolyBasis {
    /// Monomials `s1^a s2^b` in coordinates scaled to `[−1, 1]`, ordered by total
    /// degree, then by decreasing power of `s1`; modified Gram–Schmidt applied twice.
    pub fn new(grid: &Grid2D, degree: usize) -> Result<Self> {
        let weight = grid.state_weight();
        let count = (degree + 1) * (degree + 2) / 2;
        if count > grid.len() {
            return Err(Error::InvalidParameter(format!(
                "degree {degree} needs {count} nodes, grid has {}",
                grid.len()
            )));
        }
        let scaled = |idx: usize| {
            let (x, y) = grid.coords(idx);
            (2.0 * x / grid.l1 - 1.0, 2.0 * y / grid.l2 - 1.0)
        };
        let mut vectors: Vec<DVector<f64>> = Vec::with_capacity(count);
        for d in 0..=degree {
            for a in (0..=d).rev() {
                let b = d - a;
                let mut v = DVector::from_fn(grid.len(), |idx, _| {
                    let (s1, s2) = scaled(idx);
                    s1.powi(a as i32) * s2.powi(b as i32)
                });
                let raw = (weight * v.dot(&v)).sqrt();
                for _ in 0..2 {
                    for q in &vectors {
                        let c = weight * q.dot(&v);
                        v.axpy(-c, q, 1.0);
                    }
                }
                let norm = (weight * v.dot(&v)).sqrt();
                if !(norm > 1e-10 * raw) {
                    return Err(Error::InvalidParameter(format!(
                        "monomial s1^{a} s2^{b} is dependent on lower ones on this grid"
                    )));
                }
                vectors.push(v / norm);
            }
        }
        Ok(Self {
            degree,
            weight,
            vectors,
        })
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn vectors(&self) -> &[DVector<f64>] {
        &self.vectors
    }

    /// `max |G − I|` of the weighted Gram matrix.
    pub fn gram_deviation(&self) -> f64 {
        gram_deviation(&self.vectors, self.weight).expect("basis vectors share one length")
    }

    /// `⟨x, φ_j⟩` for every basis vector.
    pub fn coefficients(&self, x: &DVector<f64>) -> Vec<f64> {
        self.vectors.iter().map(|v| self.weight * v.dot(x)).collect()
    }

    pub fn combine(&self, coefficients: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.vectors[0].len());
        for (c, v) in coefficients.iter().zip(&self.vectors) {
            out.axpy(*c, v, 1.0);
        }
        out
    }

    /// Orthogonal projection onto the span.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.combine(&self.coefficients(x))
    }
}
