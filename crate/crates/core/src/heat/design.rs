//! Minimum-energy null controls of the Crank–Nicolson discretized adjoint,
//! computed in the sine eigenbasis of the five-point operator.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use super::{discrete_adjoint, HeatAdjoint, HeatSystem};
use crate::error::{Error, Result};
use crate::lti::horizon_steps;
use crate::pair::{ModulatingPair, Target};
use crate::signal::{trapezoid_weight, ImpulsiveSignal, SampledSignal};

/// Orthonormal sine transform of the grid: `x = Σ_{pq} x̂_{pq} v_{pq}` with
/// `v_{pq}(i, j) = S1[i, p]·S2[j, q]` and `A v_{pq} = λ_{pq} v_{pq}`.
#[derive(Clone, Debug)]
pub struct Spectral {
    nx: usize,
    ny: usize,
    s1: DMatrix<f64>,
    s2: DMatrix<f64>,
    lambda: Vec<f64>,
}

fn sine_matrix(m: usize) -> DMatrix<f64> {
    let scale = (2.0 / (m + 1) as f64).sqrt();
    DMatrix::from_fn(m, m, |i, j| {
        scale * (((i + 1) * (j + 1)) as f64 * std::f64::consts::PI / (m + 1) as f64).sin()
    })
}

fn laplace_eigenvalues(m: usize, h: f64) -> Vec<f64> {
    (1..=m)
        .map(|p| {
            let s = (p as f64 * std::f64::consts::PI / (2 * (m + 1)) as f64).sin();
            -4.0 / (h * h) * s * s
        })
        .collect()
}

impl Spectral {
    pub fn new(sys: &HeatSystem) -> Self {
        let g = &sys.grid;
        let l1 = laplace_eigenvalues(g.nx, g.dx);
        let l2 = laplace_eigenvalues(g.ny, g.dy);
        let lambda = l1
            .iter()
            .flat_map(|a| l2.iter().map(move |b| sys.k_diff * (a + b) + sys.c_react))
            .collect();
        Self {
            nx: g.nx,
            ny: g.ny,
            s1: sine_matrix(g.nx),
            s2: sine_matrix(g.ny),
            lambda,
        }
    }

    /// `λ_{pq}`, indexed like the nodes (`p·ny + q`).
    pub fn eigenvalues(&self) -> &[f64] {
        &self.lambda
    }

    pub fn to_modes(&self, x: &DVector<f64>) -> DVector<f64> {
        let grid = DMatrix::from_fn(self.nx, self.ny, |i, j| x[i * self.ny + j]);
        let m = self.s1.transpose() * grid * &self.s2;
        DVector::from_fn(self.nx * self.ny, |k, _| m[(k / self.ny, k % self.ny)])
    }

    pub fn from_modes(&self, xh: &DVector<f64>) -> DVector<f64> {
        let modes = DMatrix::from_fn(self.nx, self.ny, |p, q| xh[p * self.ny + q]);
        let m = &self.s1 * modes * self.s2.transpose();
        DVector::from_fn(self.nx * self.ny, |k, _| m[(k / self.ny, k % self.ny)])
    }

    /// Node value of eigenvector `a` at node `r`.
    fn eigenvector_entry(&self, r: usize, a: usize) -> f64 {
        self.s1[(r / self.ny, a / self.ny)] * self.s2[(r % self.ny, a % self.ny)]
    }
}

/// Tolerance and regularization sweep of the null-control design.
#[derive(Clone, Debug, PartialEq)]
pub struct NullControlOptions {
    /// Relative residual `‖φ(T)‖/‖φ0‖` above which a pair is flagged degraded.
    pub tol_null: f64,
    /// Tikhonov parameters, relative to the largest Gramian eigenvalue.
    pub eps_sweep: Vec<f64>,
}

impl Default for NullControlOptions {
    fn default() -> Self {
        Self {
            tol_null: 1e-3,
            eps_sweep: vec![1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2],
        }
    }
}

pub fn heat_null_controls(
    sys: &HeatSystem,
    targets: &[DVector<f64>],
    horizon: f64,
    dt: f64,
) -> Result<Vec<ModulatingPair>> {
    heat_null_controls_with(sys, targets, horizon, dt, &NullControlOptions::default())
}

/// `Σ_{i<m} r^i`.
fn geometric_sum(r: f64, m: usize) -> f64 {
    if m == 0 {
        0.0
    } else if r == 1.0 {
        m as f64
    } else if r > 0.0 {
        (m as f64 * r.ln()).exp_m1() / (r - 1.0)
    } else {
        (1.0 - r.powi(m as i32)) / (1.0 - r)
    }
}

fn largest_eigenvalue(g: &DMatrix<f64>) -> f64 {
    let n = g.nrows();
    let mut v = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    let mut lam = 0.0;
    for _ in 0..500 {
        let w = g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lam).abs() <= 1e-12 * next.abs() {
            return next;
        }
        lam = next;
    }
    lam
}

struct Design<'a> {
    spectral: Spectral,
    adjoint: HeatAdjoint,
    rho: Vec<f64>,
    fhat: DMatrix<f64>,
    b_modes: DMatrix<f64>,
    steps: usize,
    dt: f64,
    factors: Vec<Cholesky<f64, Dyn>>,
    options: &'a NullControlOptions,
}

impl Design<'_> {
    fn weight(&self, k: usize) -> f64 {
        trapezoid_weight(k, self.steps + 1) * self.dt
    }

    /// Per-mode factor of the `k`-th reachability block.
    fn block_scale(&self, k: usize) -> DVector<f64> {
        let n = self.steps;
        DVector::from_fn(self.rho.len(), |a, _| {
            let r = self.rho[a];
            match k {
                0 => r.powi(n as i32 - 1),
                k if k == n => 1.0,
                k => r.powi((n - 1 - k) as i32) * (1.0 + r),
            }
        })
    }

    /// Controls `η_k` (rows) for the multiplier `λ`.
    fn controls(&self, lam: &DVector<f64>) -> DMatrix<f64> {
        let m = self.fhat.ncols();
        let mut eta = DMatrix::zeros(self.steps + 1, m);
        for k in 0..=self.steps {
            let s = self.block_scale(k).component_mul(lam);
            let ek = -(self.fhat.transpose() * s) / self.weight(k);
            eta.row_mut(k).copy_from(&ek.transpose());
        }
        eta
    }

    /// Modal adjoint states `φ_0 … φ_N` driven by `eta`.
    fn propagate(&self, ph: &DVector<f64>, eta: &DMatrix<f64>, mut visit: impl FnMut(usize, &DVector<f64>)) -> DVector<f64> {
        let mut cur = ph.clone();
        visit(0, &cur);
        for k in 0..self.steps {
            let drive = (eta.row(k) + eta.row(k + 1)).transpose();
            cur = cur.component_mul(&DVector::from_column_slice(&self.rho)) + &self.fhat * drive;
            visit(k + 1, &cur);
        }
        cur
    }

    fn pair(&self, phi0: &DVector<f64>, horizon: f64) -> Result<ModulatingPair> {
        let m = self.fhat.ncols();
        let ph = self.spectral.to_modes(phi0);
        let target: DVector<f64> = DVector::from_fn(ph.len(), |a, _| self.rho[a].powi(self.steps as i32) * ph[a]);
        let mut best: Option<(f64, DMatrix<f64>)> = None;
        if ph.iter().all(|v| *v == 0.0) {
            best = Some((0.0, DMatrix::zeros(self.steps + 1, m)));
        } else {
            for chol in &self.factors {
                let eta = self.controls(&chol.solve(&target));
                let residual = self.propagate(&ph, &eta, |_, _| {}).norm();
                if best.as_ref().is_none_or(|(r, _)| residual < *r) {
                    best = Some((residual, eta));
                }
            }
        }
        let (residual, eta) = best.ok_or_else(|| Error::InvalidParameter("empty regularization sweep".into()))?;
        let bw = self.adjoint.boundary_weight;
        let d_star = self.adjoint.d_star;
        let mut mu = DMatrix::zeros(self.steps + 1, m);
        self.propagate(&ph, &eta, |k, cur| {
            let mk = &self.b_modes * cur + eta.row(k).transpose() * d_star;
            mu.row_mut(k).copy_from(&mk.transpose());
        });
        // kernels carry the boundary quadrature weight
        let to_signal = |rows: &DMatrix<f64>| {
            let data: Vec<f64> = (0..rows.nrows()).flat_map(|k| rows.row(k).iter().map(|v| v * bw).collect::<Vec<_>>()).collect();
            SampledSignal::new(0.0, self.dt, m, data)
        };
        let mut pair = ModulatingPair::new(
            ImpulsiveSignal::from_density(to_signal(&eta)?)?,
            ImpulsiveSignal::from_density(to_signal(&mu)?)?,
            horizon,
            Target::Vector(phi0.as_slice().to_vec()),
            residual,
        )?;
        pair.degraded = pair.relative_residual() > self.options.tol_null;
        Ok(pair)
    }
}

/// One modulating pair per target `φ0j`, designed on the discrete adjoint.
///
/// Pairs whose regularized control leaves `‖φ(T)‖ > tol_null·‖φ0j‖` are
/// returned with `degraded` set.
pub fn heat_null_controls_with(
    sys: &HeatSystem,
    targets: &[DVector<f64>],
    horizon: f64,
    dt: f64,
    options: &NullControlOptions,
) -> Result<Vec<ModulatingPair>> {
    let steps = horizon_steps(horizon, dt)?;
    if let Some(t) = targets.iter().find(|t| t.len() != sys.n()) {
        return Err(Error::Dimension(format!("target of length {} for n = {}", t.len(), sys.n())));
    }
    if options.eps_sweep.is_empty() || options.eps_sweep.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidParameter("regularization sweep must be non-empty and positive".into()));
    }
    let spectral = Spectral::new(sys);
    let adjoint = discrete_adjoint(sys);
    let n = sys.n();
    let m = sys.m();
    let half = 0.5 * dt;
    let rho: Vec<f64> = spectral.eigenvalues().iter().map(|l| (1.0 + half * l) / (1.0 - half * l)).collect();
    let fac: Vec<f64> = spectral.eigenvalues().iter().map(|l| half / (1.0 - half * l)).collect();

    let mut fhat = DMatrix::zeros(n, m);
    for j in 0..m {
        let col = spectral.to_modes(&adjoint.c_star.column(j));
        for a in 0..n {
            fhat[(a, j)] = fac[a] * col[a];
        }
    }
    let mut b_modes = DMatrix::zeros(m, n);
    for j in 0..m {
        for (r, v) in adjoint.b_star.row(j) {
            for a in 0..n {
                b_modes[(j, a)] += v * spectral.eigenvector_entry(r, a);
            }
        }
    }

    // G_ab = (F̂F̂ᵀ)_ab · Σ_k s_k(a) s_k(b) / w_k
    let w_end = trapezoid_weight(0, steps + 1) * dt;
    let h = &fhat * fhat.transpose();
    let gram = DMatrix::from_fn(n, n, |a, b| {
        let (ra, rb) = (rho[a], rho[b]);
        let first = (ra * rb).powi(steps as i32 - 1);
        let s = if steps == 1 {
            (first + 1.0) / w_end
        } else {
            first / w_end + 1.0 / w_end + (1.0 + ra) * (1.0 + rb) * geometric_sum(ra * rb, steps - 1) / dt
        };
        h[(a, b)] * s
    });
    let lambda_max = largest_eigenvalue(&gram);
    if !(lambda_max > 0.0) {
        return Err(Error::NotNullControllable {
            lambda_min: 0.0,
            lambda_max,
        });
    }
    let factors: Vec<Cholesky<f64, Dyn>> = options
        .eps_sweep
        .par_iter()
        .filter_map(|eps| {
            let mut g = gram.clone();
            for i in 0..n {
                g[(i, i)] += eps * lambda_max;
            }
            g.cholesky()
        })
        .collect();
    if factors.is_empty() {
        return Err(Error::NotNullControllable {
            lambda_min: f64::NAN,
            lambda_max,
        });
    }
    let design = Design {
        spectral,
        adjoint,
        rho,
        fhat,
        b_modes,
        steps,
        dt,
        factors,
        options,
    };
    targets.par_iter().map(|t| design.pair(t, horizon)).collect()
}
