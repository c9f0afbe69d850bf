//! Reaction–diffusion `ẋ = kΔx + cx` on a rectangle, with Dirichlet control on
//! the edge `Γ = {ξ1 = L1}` and the outward normal derivative on `Γ` as output.
//!
//! Interior nodes `(i, j)`, `0 ≤ i < nx`, `0 ≤ j < ny`, sit at
//! `((i+1)·dx, (j+1)·dy)` and are numbered `i·ny + j`. State inner products
//! carry the weight `dx·dy`, boundary ones the weight `dy`.

mod basis;
mod design;
mod sparse;

pub use basis::PolyBasis;
pub use design::{heat_null_controls, heat_null_controls_with, NullControlOptions, Spectral};
pub use sparse::{conjugate_gradient, CsrMatrix};

use nalgebra::DVector;

use crate::engine::Estimator;
use crate::error::{Error, Result};
use crate::lti::Trajectory;
use crate::pair::ModulatingPair;
use crate::signal::SampledSignal;

/// Problem parameters with their defaults.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HeatConfig {
    pub l1: f64,
    pub l2: f64,
    pub nx: usize,
    pub ny: usize,
    pub k_diff: f64,
    pub c_react: f64,
    pub horizon: f64,
    pub dt: f64,
    pub basis_degree: usize,
}

impl Default for HeatConfig {
    fn default() -> Self {
        Self {
            l1: 1.0,
            l2: 1.0,
            nx: 31,
            ny: 31,
            k_diff: 0.1,
            c_react: 1.0,
            horizon: 1.0,
            dt: 1e-3,
            basis_degree: 4,
        }
    }
}

impl HeatConfig {
    pub fn grid(&self) -> Result<Grid2D> {
        Grid2D::new(self.l1, self.l2, self.nx, self.ny)
    }

    pub fn system(&self) -> Result<HeatSystem> {
        assemble_heat(&self.grid()?, self.k_diff, self.c_react)
    }
}

/// Uniform grid of interior nodes.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid2D {
    pub l1: f64,
    pub l2: f64,
    pub nx: usize,
    pub ny: usize,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    /// `nx ≥ 3` is needed by the one-sided output stencil; `ny = 1` gives a
    /// single row of nodes (a one-dimensional analog).
    pub fn new(l1: f64, l2: f64, nx: usize, ny: usize) -> Result<Self> {
        if !(l1 > 0.0 && l2 > 0.0 && l1.is_finite() && l2.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid domain {l1} x {l2}")));
        }
        if nx < 3 || ny < 1 {
            return Err(Error::InvalidParameter(format!(
                "grid needs nx ≥ 3 and ny ≥ 1, got {nx} x {ny}"
            )));
        }
        Ok(Self {
            l1,
            l2,
            nx,
            ny,
            dx: l1 / (nx + 1) as f64,
            dy: l2 / (ny + 1) as f64,
        })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.ny + j
    }

    pub fn coords(&self, idx: usize) -> (f64, f64) {
        let (i, j) = (idx / self.ny, idx % self.ny);
        ((i + 1) as f64 * self.dx, (j + 1) as f64 * self.dy)
    }

    /// Nodes adjacent to `Γ`, one per boundary point.
    pub fn gamma_nodes(&self) -> Vec<usize> {
        (0..self.ny).map(|j| self.index(self.nx - 1, j)).collect()
    }

    /// Nodes adjacent to the homogeneous Dirichlet edges only.
    pub fn dirichlet_nodes(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&idx| {
                let (i, j) = (idx / self.ny, idx % self.ny);
                i != self.nx - 1 && (i == 0 || j == 0 || j + 1 == self.ny)
            })
            .collect()
    }

    pub fn state_weight(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn boundary_weight(&self) -> f64 {
        self.dy
    }

    /// `⟨a, b⟩ = dx·dy·Σ a b`.
    pub fn inner(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.state_weight() * a.dot(b)
    }

    pub fn norm(&self, a: &DVector<f64>) -> f64 {
        self.inner(a, a).sqrt()
    }

    pub fn sample(&self, f: impl Fn(f64, f64) -> f64) -> DVector<f64> {
        DVector::from_fn(self.len(), |idx, _| {
            let (x, y) = self.coords(idx);
            f(x, y)
        })
    }
}

/// Semi-discrete system `ẋ = A x + B u`, `y = C x + D u` with `D = d·I`.
#[derive(Clone, Debug)]
pub struct HeatSystem {
    pub grid: Grid2D,
    pub k_diff: f64,
    pub c_react: f64,
    pub a: CsrMatrix,
    pub b: CsrMatrix,
    pub c: CsrMatrix,
    pub d: f64,
}

/// Five-point `kΔ_h + cI`, Dirichlet lifting on `Γ`, one-sided second-order normal derivative.
pub fn assemble_heat(grid: &Grid2D, k_diff: f64, c_react: f64) -> Result<HeatSystem> {
    if !(k_diff > 0.0 && k_diff.is_finite()) || !c_react.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "need k_diff > 0 and finite c_react, got {k_diff}, {c_react}"
        )));
    }
    let (nx, ny) = (grid.nx, grid.ny);
    let (ax, ay) = (k_diff / (grid.dx * grid.dx), k_diff / (grid.dy * grid.dy));
    let mut a = Vec::with_capacity(5 * grid.len());
    for i in 0..nx {
        for j in 0..ny {
            let r = grid.index(i, j);
            a.push((r, r, -2.0 * ax - 2.0 * ay + c_react));
            if i > 0 {
                a.push((r, grid.index(i - 1, j), ax));
            }
            if i + 1 < nx {
                a.push((r, grid.index(i + 1, j), ax));
            }
            if j > 0 {
                a.push((r, grid.index(i, j - 1), ay));
            }
            if j + 1 < ny {
                a.push((r, grid.index(i, j + 1), ay));
            }
        }
    }
    let b = (0..ny).map(|j| (grid.index(nx - 1, j), j, ax)).collect();
    let h = 0.5 / grid.dx;
    let c = (0..ny)
        .flat_map(|j| [(j, grid.index(nx - 1, j), -4.0 * h), (j, grid.index(nx - 2, j), h)])
        .collect();
    Ok(HeatSystem {
        grid: *grid,
        k_diff,
        c_react,
        a: CsrMatrix::from_triplets(grid.len(), grid.len(), a)?,
        b: CsrMatrix::from_triplets(grid.len(), ny, b)?,
        c: CsrMatrix::from_triplets(ny, grid.len(), c)?,
        d: 3.0 * h,
    })
}

impl HeatSystem {
    pub fn n(&self) -> usize {
        self.grid.len()
    }

    /// Number of boundary points on `Γ` (input and output dimension).
    pub fn m(&self) -> usize {
        self.grid.ny
    }

    pub fn output(&self, x: &DVector<f64>, u: &[f64]) -> DVector<f64> {
        let mut y = self.c.mul(x);
        for (y, u) in y.iter_mut().zip(u) {
            *y += self.d * u;
        }
        y
    }
}

/// Adjoint operators with respect to the weighted inner products:
/// `A* = A`, `C* = Cᵀ/dx` (input), `B* = dx·Bᵀ` (output), `D* = D`.
#[derive(Clone, Debug)]
pub struct HeatAdjoint {
    pub a: CsrMatrix,
    pub c_star: CsrMatrix,
    pub b_star: CsrMatrix,
    pub d_star: f64,
    /// `dx·dy`, weight of the state inner product.
    pub state_weight: f64,
    /// `dy`, weight of the boundary inner product.
    pub boundary_weight: f64,
}

pub fn discrete_adjoint(sys: &HeatSystem) -> HeatAdjoint {
    let (sw, bw) = (sys.grid.state_weight(), sys.grid.boundary_weight());
    HeatAdjoint {
        a: sys.a.transpose(),
        c_star: sys.c.transpose().scaled(bw / sw),
        b_star: sys.b.transpose().scaled(sw / bw),
        d_star: sys.d,
        state_weight: sw,
        boundary_weight: bw,
    }
}

impl HeatAdjoint {
    pub fn output(&self, phi: &DVector<f64>, eta: &[f64]) -> DVector<f64> {
        let mut mu = self.b_star.mul(phi);
        for (m, e) in mu.iter_mut().zip(eta) {
            *m += self.d_star * e;
        }
        mu
    }
}

/// Crank–Nicolson stepper for `ẋ = A x + B u` with implicit solves by CG.
#[derive(Clone, Debug)]
pub struct CrankNicolson {
    a: CsrMatrix,
    input: CsrMatrix,
    lhs: CsrMatrix,
    dt: f64,
}

impl CrankNicolson {
    pub fn new(a: &CsrMatrix, input: &CsrMatrix, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if input.nrows() != a.nrows() {
            return Err(Error::Dimension("input map does not match the state".into()));
        }
        Ok(Self {
            lhs: a.shifted(1.0, -0.5 * dt),
            a: a.clone(),
            input: input.clone(),
            dt,
        })
    }

    /// `(I − hA/2) x⁺ = (I + hA/2) x + (h/2) B (u + u⁺)`.
    pub fn step(&self, x: &DVector<f64>, u: &[f64], u_next: &[f64]) -> Result<DVector<f64>> {
        let h = 0.5 * self.dt;
        let mut rhs = self.a.mul(x) * h + x;
        let sum: Vec<f64> = u.iter().zip(u_next).map(|(a, b)| h * (a + b)).collect();
        let mut bu = vec![0.0; rhs.len()];
        self.input.mul_into(&sum, &mut bu);
        for (r, v) in rhs.iter_mut().zip(&bu) {
            *r += v;
        }
        let mut next = x.clone();
        conjugate_gradient(&self.lhs, rhs.as_slice(), next.as_mut_slice(), 1e-14, 20 * x.len() + 100)?;
        Ok(next)
    }
}

/// Primal run on the grid of `u` (which must start at `t = 0`).
pub fn simulate_heat(sys: &HeatSystem, x0: &DVector<f64>, u: &SampledSignal) -> Result<Trajectory> {
    if x0.len() != sys.n() || u.dim() != sys.m() {
        return Err(Error::Dimension(format!(
            "system has n = {}, m = {}; got x0 of {} and u of dimension {}",
            sys.n(),
            sys.m(),
            x0.len(),
            u.dim()
        )));
    }
    let cn = CrankNicolson::new(&sys.a, &sys.b, u.dt())?;
    let mut states = SampledSignal::zeros(u.t0(), u.dt(), sys.n(), u.len())?;
    let mut outputs = SampledSignal::zeros(u.t0(), u.dt(), sys.m(), u.len())?;
    let mut x = x0.clone();
    for k in 0..u.len() {
        if k > 0 {
            x = cn.step(&x, u.sample(k - 1), u.sample(k))?;
        }
        states.sample_mut(k).copy_from_slice(x.as_slice());
        outputs.sample_mut(k).copy_from_slice(sys.output(&x, u.sample(k)).as_slice());
    }
    Ok(Trajectory {
        states,
        inputs: u.clone(),
        outputs,
    })
}

/// Adjoint run `φ̇ = A*φ + C*η` with output `μ = B*φ + D*η`.
pub fn simulate_adjoint(adj: &HeatAdjoint, phi0: &DVector<f64>, eta: &SampledSignal) -> Result<Trajectory> {
    if phi0.len() != adj.a.nrows() || eta.dim() != adj.c_star.ncols() {
        return Err(Error::Dimension("adjoint data do not match the system".into()));
    }
    let cn = CrankNicolson::new(&adj.a, &adj.c_star, eta.dt())?;
    let mut states = SampledSignal::zeros(eta.t0(), eta.dt(), phi0.len(), eta.len())?;
    let mut outputs = SampledSignal::zeros(eta.t0(), eta.dt(), eta.dim(), eta.len())?;
    let mut phi = phi0.clone();
    for k in 0..eta.len() {
        if k > 0 {
            phi = cn.step(&phi, eta.sample(k - 1), eta.sample(k))?;
        }
        states.sample_mut(k).copy_from_slice(phi.as_slice());
        outputs.sample_mut(k).copy_from_slice(adj.output(&phi, eta.sample(k)).as_slice());
    }
    Ok(Trajectory {
        states,
        inputs: eta.clone(),
        outputs,
    })
}

/// Field estimate at one time together with the coefficients it was built from.
#[derive(Clone, Debug)]
pub struct HeatEstimate {
    pub field: DVector<f64>,
    pub coefficients: Vec<f64>,
    /// Largest relative null-control residual among the pairs used.
    pub worst_residual: f64,
    /// Indices of pairs whose residual exceeded the design tolerance.
    pub degraded: Vec<usize>,
}

/// `x̂(t) = Σ_j c_j φ0j` from records of `u`, `y` starting at `t = 0`.
pub fn reconstruct_heat_state(
    sys: &HeatSystem,
    pairs: &[ModulatingPair],
    basis: &PolyBasis,
    u: &SampledSignal,
    y: &SampledSignal,
    t: f64,
) -> Result<HeatEstimate> {
    if pairs.len() != basis.len() {
        return Err(Error::Dimension(format!(
            "{} pairs for {} basis vectors",
            pairs.len(),
            basis.len()
        )));
    }
    if u.len() != y.len() || u.t0() != 0.0 || y.t0() != 0.0 {
        return Err(Error::InvalidParameter("records must start at t = 0 on a common grid".into()));
    }
    let last = u.index_of(t).ok_or_else(|| {
        Error::InvalidParameter(format!("t = {t} is not a sample time of the records"))
    })?;
    let mut est = Estimator::new(pairs.to_vec(), u.dt())?
        .with_basis(basis.vectors().to_vec(), sys.grid.state_weight())?;
    for k in 0..=last {
        est.push(u.sample(k), y.sample(k))?;
    }
    let rec = est.reconstruct_state(t)?;
    Ok(HeatEstimate {
        field: rec.state,
        coefficients: rec.coefficients,
        worst_residual: pairs.iter().map(ModulatingPair::relative_residual).fold(0.0, f64::max),
        degraded: pairs
            .iter()
            .enumerate()
            .filter(|(_, p)| p.degraded)
            .map(|(i, _)| i)
            .collect(),
    })
}
