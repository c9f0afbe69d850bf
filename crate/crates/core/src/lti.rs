//! Finite-dimensional LTI systems: exact sampled simulation, the observability
//! Gramian and minimum-energy null controls of the adjoint system.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen, LU};

use crate::error::{Error, Result};
use crate::pair::{ModulatingPair, Target};
use crate::signal::{trapezoid_weight, ImpulsiveSignal, SampledSignal};

/// Gramians with `λ_min < GRAMIAN_FLOOR · λ_max` are treated as singular.
pub const GRAMIAN_FLOOR: f64 = 1e-12;

/// `ẋ = Ax + Bu`, `y = Cx + Du`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiSystem {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    d: DMatrix<f64>,
}

impl LtiSystem {
    pub fn new(a: DMatrix<f64>, b: DMatrix<f64>, c: DMatrix<f64>, d: DMatrix<f64>) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::Dimension(format!(
                "A must be square and non-empty, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if b.nrows() != n {
            return Err(Error::Dimension(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::Dimension(format!("C has {} columns, expected {n}", c.ncols())));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        let finite = [&a, &b, &c, &d].iter().all(|m| m.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::InvalidParameter("system matrices must be finite".into()));
        }
        Ok(Self { a, b, c, d })
    }

    /// Builds a system from row-major nested vectors.
    pub fn from_rows(
        a: &[Vec<f64>],
        b: &[Vec<f64>],
        c: &[Vec<f64>],
        d: &[Vec<f64>],
    ) -> Result<Self> {
        Self::new(matrix_from_rows(a)?, matrix_from_rows(b)?, matrix_from_rows(c)?, matrix_from_rows(d)?)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn p(&self) -> usize {
        self.c.nrows()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn d(&self) -> &DMatrix<f64> {
        &self.d
    }

    /// `(Aᵀ, Cᵀ, Bᵀ, Dᵀ)`: input η of dimension p, output μ of dimension m.
    pub fn adjoint(&self) -> LtiSystem {
        LtiSystem {
            a: self.a.transpose(),
            b: self.c.transpose(),
            c: self.b.transpose(),
            d: self.d.transpose(),
        }
    }

    /// Appends the output `z = Kx + Lu` as a last row of `[C D]`.
    pub fn extend_with_functional(&self, k: &[f64], l: &[f64]) -> Result<LtiSystem> {
        if k.len() != self.n() || l.len() != self.m() {
            return Err(Error::Dimension(format!(
                "functional of shape ({}, {}) for a system with n = {}, m = {}",
                k.len(),
                l.len(),
                self.n(),
                self.m()
            )));
        }
        let p = self.p();
        let mut c = self.c.clone().insert_row(p, 0.0);
        let mut d = self.d.clone().insert_row(p, 0.0);
        c.row_mut(p).copy_from_slice(k);
        d.row_mut(p).copy_from_slice(l);
        LtiSystem::new(self.a.clone(), self.b.clone(), c, d)
    }

    pub fn propagator(&self, dt: f64) -> Propagator {
        Propagator::new(&self.a, &self.b, dt)
    }
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

/// One-step map for piecewise-linear input: `x⁺ = E x + F0 u + F1 u⁺`.
#[derive(Clone, Debug)]
pub struct Propagator {
    pub e: DMatrix<f64>,
    pub f0: DMatrix<f64>,
    pub f1: DMatrix<f64>,
    pub dt: f64,
}

impl Propagator {
    /// From one exponential of `[[A h, B h, 0], [0, 0, I], [0, 0, 0]]`.
    pub fn new(a: &DMatrix<f64>, b: &DMatrix<f64>, dt: f64) -> Self {
        let n = a.nrows();
        let m = b.ncols();
        let mut aug = DMatrix::zeros(n + 2 * m, n + 2 * m);
        aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
        aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
        aug.view_mut((n, n + m), (m, m)).fill_with_identity();
        let ex = aug.exp();
        let e = ex.view((0, 0), (n, n)).into_owned();
        let g1 = ex.view((0, n), (n, m)).into_owned();
        let g2 = ex.view((0, n + m), (n, m)).into_owned();
        Self {
            e,
            f0: &g1 - &g2,
            f1: g2,
            dt,
        }
    }

    pub fn step(&self, x: &DVector<f64>, u: &DVector<f64>, u_next: &DVector<f64>) -> DVector<f64> {
        &self.e * x + &self.f0 * u + &self.f1 * u_next
    }
}

/// States, inputs and outputs on a common grid.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub states: SampledSignal,
    pub inputs: SampledSignal,
    pub outputs: SampledSignal,
}

impl Trajectory {
    pub fn state(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(self.states.sample(k))
    }
}

/// Exact propagation for an input that is linear between samples.
pub fn simulate(sys: &LtiSystem, x0: &DVector<f64>, u: &SampledSignal) -> Result<Trajectory> {
    if x0.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "initial state of dimension {} for n = {}",
            x0.len(),
            sys.n()
        )));
    }
    if u.dim() != sys.m() {
        return Err(Error::Dimension(format!(
            "input of dimension {} for m = {}",
            u.dim(),
            sys.m()
        )));
    }
    if u.is_empty() {
        return Err(Error::InvalidParameter("input signal has no samples".into()));
    }
    let prop = sys.propagator(u.dt());
    let mut states = SampledSignal::zeros(u.t0(), u.dt(), sys.n(), u.len())?;
    let mut outputs = SampledSignal::zeros(u.t0(), u.dt(), sys.p(), u.len())?;
    let mut x = x0.clone();
    let mut uk = DVector::from_column_slice(u.sample(0));
    for k in 0..u.len() {
        if k > 0 {
            let un = DVector::from_column_slice(u.sample(k));
            x = prop.step(&x, &uk, &un);
            uk = un;
        }
        let y = sys.c() * &x + sys.d() * &uk;
        states.sample_mut(k).copy_from_slice(x.as_slice());
        outputs.sample_mut(k).copy_from_slice(y.as_slice());
    }
    Ok(Trajectory {
        states,
        inputs: u.clone(),
        outputs,
    })
}

/// `W(T) = ∫_0^T e^{Aᵀτ} CᵀC e^{Aτ} dτ` from one exponential of
/// `[[-Aᵀ, CᵀC], [0, A]]·T`.
pub fn observability_gramian(sys: &LtiSystem, horizon: f64) -> Result<DMatrix<f64>> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let n = sys.n();
    let mut aug = DMatrix::zeros(2 * n, 2 * n);
    aug.view_mut((0, 0), (n, n)).copy_from(&(-sys.a().transpose() * horizon));
    aug.view_mut((0, n), (n, n)).copy_from(&(sys.c().transpose() * sys.c() * horizon));
    aug.view_mut((n, n), (n, n)).copy_from(&(sys.a() * horizon));
    let ex = aug.exp();
    let f12 = ex.view((0, n), (n, n));
    let f22 = ex.view((n, n), (n, n));
    Ok(f22.transpose() * f12)
}

/// Extreme eigenvalues `(λ_min, λ_max)` of a symmetric matrix.
pub fn eigen_range(w: &DMatrix<f64>) -> (f64, f64) {
    let sym = (w + w.transpose()) * 0.5;
    let ev = SymmetricEigen::new(sym).eigenvalues;
    let min = ev.iter().copied().fold(f64::INFINITY, f64::min);
    let max = ev.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (min, max)
}

fn check_observable(sys: &LtiSystem, horizon: f64) -> Result<DMatrix<f64>> {
    let w = observability_gramian(sys, horizon)?;
    let (lambda_min, lambda_max) = eigen_range(&w);
    if !(lambda_max > 0.0) || lambda_min < GRAMIAN_FLOOR * lambda_max {
        return Err(Error::NotNullControllable {
            lambda_min,
            lambda_max,
        });
    }
    Ok(w)
}

/// Linear map from sampled adjoint inputs `η_0..η_N` to the terminal adjoint state.
///
/// `φ_N = E^N φ_0 + Σ_k Γ_k η_k` for the piecewise-linear propagation of the
/// adjoint system over `N` steps.
#[derive(Clone, Debug)]
pub struct AdjointReachability {
    pub blocks: Vec<DMatrix<f64>>,
    pub free: DMatrix<f64>,
    pub dt: f64,
}

impl AdjointReachability {
    pub fn new(prop: &Propagator, steps: usize) -> Self {
        let n = prop.e.nrows();
        let mut blocks = vec![DMatrix::zeros(n, prop.f0.ncols()); steps + 1];
        // Γ_j = E^{N-1-j} F0 + E^{N-j} F1
        let mut q = prop.f0.clone();
        let mut r = prop.f1.clone();
        let mut pow = DMatrix::identity(n, n);
        for j in 0..steps {
            blocks[steps - 1 - j] += &q;
            blocks[steps - j] += &r;
            q = &prop.e * q;
            r = &prop.e * r;
            pow = &prop.e * pow;
        }
        Self {
            blocks,
            free: pow,
            dt: prop.dt,
        }
    }

    pub fn steps(&self) -> usize {
        self.blocks.len() - 1
    }

    /// Trapezoidal quadrature weights of the sample grid.
    pub fn weight(&self, k: usize) -> f64 {
        trapezoid_weight(k, self.blocks.len()) * self.dt
    }

    pub fn terminal_state(&self, phi0: &DVector<f64>, eta: &SampledSignal) -> DVector<f64> {
        let mut out = &self.free * phi0;
        for (k, g) in self.blocks.iter().enumerate() {
            out += g * DVector::from_column_slice(eta.sample(k));
        }
        out
    }

    /// `Σ_k Γ_k Γ_kᵀ / w_k`, the Gramian of the weighted reachability map.
    pub fn gramian(&self) -> DMatrix<f64> {
        let n = self.free.nrows();
        let mut g = DMatrix::zeros(n, n);
        for (k, blk) in self.blocks.iter().enumerate() {
            g += blk * blk.transpose() / self.weight(k);
        }
        g
    }

    /// Samples minimising `Σ_k w_k |η_k|²` subject to `φ_N = 0`.
    ///
    /// Solved as a least-norm problem for `ξ_k = √w_k η_k` through a QR
    /// factorization of the stacked blocks rather than the normal equations,
    /// which would square the conditioning; one refinement pass follows.
    pub fn minimum_energy_control(&self, phi0: &DVector<f64>) -> Result<SampledSignal> {
        let n = self.free.nrows();
        let p = self.blocks[0].ncols();
        let cols = p * self.blocks.len();
        let mut rt = DMatrix::zeros(cols, n);
        for (k, blk) in self.blocks.iter().enumerate() {
            let s = self.weight(k).sqrt();
            rt.view_mut((k * p, 0), (p, n)).copy_from(&(blk.transpose() / s));
        }
        let qr = rt.clone().qr();
        let (q, r) = (qr.q(), qr.r());
        let diag = r.diagonal().abs();
        if diag.min() <= 1e-14 * diag.max() {
            let (lambda_min, lambda_max) = eigen_range(&self.gramian());
            return Err(Error::NotNullControllable {
                lambda_min,
                lambda_max,
            });
        }
        let solve = |rhs: &DVector<f64>| -> Result<DVector<f64>> {
            let z = r.tr_solve_upper_triangular(rhs).ok_or(Error::NotNullControllable {
                lambda_min: 0.0,
                lambda_max: 0.0,
            })?;
            Ok(&q * z)
        };
        let target = -(&self.free * phi0);
        let mut xi = solve(&target)?;
        let defect = &target - rt.transpose() * &xi;
        xi += solve(&defect)?;
        let mut eta = SampledSignal::zeros(0.0, self.dt, p, self.blocks.len())?;
        for k in 0..self.blocks.len() {
            let s = self.weight(k).sqrt();
            for (o, v) in eta.sample_mut(k).iter_mut().zip(xi.rows(k * p, p).iter()) {
                *o = v / s;
            }
        }
        Ok(eta)
    }
}

pub(crate) fn horizon_steps(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidParameter(format!("horizon must be positive, got {horizon}")));
    }
    let steps = (horizon / dt).round();
    if steps < 1.0 || (steps * dt - horizon).abs() > 1e-9 * horizon {
        return Err(Error::InvalidParameter(format!(
            "horizon {horizon} is not a whole number of steps of {dt}"
        )));
    }
    Ok(steps as usize)
}

/// Minimum-energy null control of `φ̇ = Aᵀφ + Cᵀη`, `φ(0) = φ0`, `φ(T) = 0`,
/// and its output `μ = Bᵀφ + Dᵀη`, both sampled on `[0, T]`.
///
/// The control is computed for the sampled adjoint (η linear between samples,
/// energy measured by the trapezoidal rule), so re-simulating the adjoint with
/// the returned samples reaches zero up to roundoff. As `dt → 0` it converges
/// to the continuous Gramian control `η(t) = −C e^{A(T−t)} W(T)⁻¹ e^{AᵀT} φ0`.
pub fn adjoint_null_control(
    sys: &LtiSystem,
    phi0: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<ModulatingPair> {
    if phi0.len() != sys.n() {
        return Err(Error::Dimension(format!(
            "target of dimension {} for n = {}",
            phi0.len(),
            sys.n()
        )));
    }
    let steps = horizon_steps(horizon, dt)?;
    check_observable(sys, horizon)?;
    let adjoint = sys.adjoint();
    let reach = AdjointReachability::new(&adjoint.propagator(dt), steps);
    let eta = reach.minimum_energy_control(phi0)?;
    let traj = simulate(&adjoint, phi0, &eta)?;
    let residual = DVector::from_column_slice(traj.states.sample(steps)).norm();
    ModulatingPair::new(
        ImpulsiveSignal::from_density(eta)?,
        ImpulsiveSignal::from_density(traj.outputs)?,
        horizon,
        Target::Vector(phi0.as_slice().to_vec()),
        residual,
    )
}

/// The continuous minimum-energy control `−C e^{A(T−t)} W(T)⁻¹ e^{AᵀT} φ0`
/// evaluated at the given times.
pub fn gramian_null_control(
    sys: &LtiSystem,
    phi0: &DVector<f64>,
    horizon: f64,
    times: &[f64],
) -> Result<Vec<DVector<f64>>> {
    let w = check_observable(sys, horizon)?;
    let rhs = (sys.a().transpose() * horizon).exp() * phi0;
    let v = Cholesky::new(w.clone())
        .map(|ch| ch.solve(&rhs))
        .or_else(|| LU::new(w).solve(&rhs))
        .ok_or(Error::NotNullControllable {
            lambda_min: 0.0,
            lambda_max: 0.0,
        })?;
    Ok(times
        .iter()
        .map(|&t| -(sys.c() * (sys.a() * (horizon - t)).exp() * &v))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn scalar(b: f64) -> LtiSystem {
        LtiSystem::new(dmatrix![0.0], dmatrix![b], dmatrix![1.0], dmatrix![0.0]).unwrap()
    }

    #[test]
    fn rejects_inconsistent_shapes() {
        let a = DMatrix::zeros(2, 2);
        assert!(LtiSystem::new(a.clone(), DMatrix::zeros(3, 1), DMatrix::zeros(1, 2), DMatrix::zeros(1, 1)).is_err());
        assert!(LtiSystem::new(a.clone(), DMatrix::zeros(2, 1), DMatrix::zeros(1, 3), DMatrix::zeros(1, 1)).is_err());
        assert!(LtiSystem::new(a.clone(), DMatrix::zeros(2, 1), DMatrix::zeros(1, 2), DMatrix::zeros(2, 1)).is_err());
        assert!(LtiSystem::new(DMatrix::zeros(2, 3), DMatrix::zeros(2, 1), DMatrix::zeros(1, 3), DMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn integrator_is_exact() {
        let sys = scalar(1.0);
        let u = SampledSignal::scalar(0.0, 0.1, vec![1.0; 101]).unwrap();
        let tr = simulate(&sys, &DVector::zeros(1), &u).unwrap();
        for k in 0..u.len() {
            assert!((tr.states.sample(k)[0] - u.time(k)).abs() < 1e-12);
        }
    }

    #[test]
    fn ramp_input_is_integrated_exactly() {
        // x' = u with u(t) = t gives t²/2, which needs the linear-in-time hold
        let sys = scalar(1.0);
        let u = SampledSignal::from_fn(0.0, 0.25, 1, 9, |t, o| o[0] = t).unwrap();
        let tr = simulate(&sys, &DVector::zeros(1), &u).unwrap();
        for k in 0..u.len() {
            let t = u.time(k);
            assert!((tr.states.sample(k)[0] - 0.5 * t * t).abs() < 1e-13);
        }
    }

    #[test]
    fn oscillator_matches_closed_form() {
        let sys = LtiSystem::new(
            dmatrix![0.0, 1.0; -1.0, 0.0],
            dmatrix![0.0; 1.0],
            dmatrix![1.0, 0.0],
            dmatrix![0.0],
        )
        .unwrap();
        let u = SampledSignal::zeros(0.0, 0.01, 1, 1001).unwrap();
        let tr = simulate(&sys, &DVector::from_vec(vec![1.0, 0.0]), &u).unwrap();
        let mut err: f64 = 0.0;
        for k in 0..u.len() {
            let t = u.time(k);
            let s = tr.states.sample(k);
            err = err.max((s[0] - t.cos()).abs()).max((s[1] + t.sin()).abs());
        }
        assert!(err <= 1e-10, "max error {err}");
    }

    #[test]
    fn gramian_of_unobserved_system_is_zero() {
        let sys = LtiSystem::new(dmatrix![-1.0, 2.0; 0.0, -3.0], dmatrix![1.0; 1.0], dmatrix![0.0, 0.0], dmatrix![0.0]).unwrap();
        let w = observability_gramian(&sys, 1.5).unwrap();
        assert!(w.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn scalar_gramian() {
        let w = observability_gramian(&scalar(1.0), 2.0).unwrap();
        assert!((w[(0, 0)] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn scalar_null_control() {
        let b = 0.7;
        let dt = 0.01;
        let pair = adjoint_null_control(&scalar(b), &DVector::from_vec(vec![1.0]), 1.0, dt).unwrap();
        let eta = pair.eta.density().unwrap();
        let mu = pair.mu.density().unwrap();
        assert_eq!(eta.len(), 101);
        for k in 0..eta.len() {
            let t = eta.time(k);
            assert!((eta.sample(k)[0] + 1.0).abs() < 1e-12);
            assert!((mu.sample(k)[0] - b * (1.0 - t)).abs() < 1e-12);
        }
        assert!(pair.residual < 1e-12);
    }

    #[test]
    fn zero_target_gives_zero_pair() {
        let sys = LtiSystem::new(dmatrix![0.0, 1.0; -2.0, -0.5], dmatrix![0.0; 1.0], dmatrix![1.0, 0.0], dmatrix![0.1]).unwrap();
        let pair = adjoint_null_control(&sys, &DVector::zeros(2), 1.0, 0.01).unwrap();
        assert!(pair.eta.density().unwrap().max_abs() == 0.0);
        assert!(pair.mu.density().unwrap().max_abs() == 0.0);
    }

    #[test]
    fn unobservable_system_is_rejected() {
        let sys = LtiSystem::new(dmatrix![-1.0, 0.0; 0.0, -2.0], dmatrix![1.0; 1.0], dmatrix![1.0, 0.0], dmatrix![0.0]).unwrap();
        let err = adjoint_null_control(&sys, &DVector::from_vec(vec![1.0, 1.0]), 1.0, 0.01).unwrap_err();
        assert!(matches!(err, Error::NotNullControllable { .. }));
        assert!(err.is_numerical());
    }

    #[test]
    fn horizon_must_be_whole_steps() {
        let err = adjoint_null_control(&scalar(1.0), &DVector::from_vec(vec![1.0]), 1.0, 0.3).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn extension_appends_output_row() {
        let sys = LtiSystem::new(dmatrix![0.0, 1.0; 0.0, 0.0], dmatrix![0.0; 1.0], dmatrix![1.0, 0.0], dmatrix![0.0]).unwrap();
        let ext = sys.extend_with_functional(&[0.0, 0.0], &[0.0]).unwrap();
        assert_eq!(ext.p(), 2);
        let u = SampledSignal::from_fn(0.0, 0.1, 1, 20, |t, o| o[0] = t.sin()).unwrap();
        let tr = simulate(&ext, &DVector::from_vec(vec![1.0, -1.0]), &u).unwrap();
        assert!(tr.outputs.channel(1).iter().all(|&z| z == 0.0));
        assert!(sys.extend_with_functional(&[1.0], &[0.0]).is_err());
        assert!(sys.extend_with_functional(&[1.0, 0.0], &[]).is_err());
    }

    #[test]
    fn extension_reads_first_state_of_integrator() {
        let sys = scalar(1.0);
        let ext = sys.extend_with_functional(&[1.0], &[0.0]).unwrap();
        let u = SampledSignal::from_fn(0.0, 0.05, 1, 40, |t, o| o[0] = 1.0 + t).unwrap();
        let tr = simulate(&ext, &DVector::from_vec(vec![0.5]), &u).unwrap();
        assert_eq!(tr.outputs.channel(1), tr.states.channel(0));
    }

    #[test]
    fn adjoint_swaps_roles() {
        let sys = LtiSystem::new(DMatrix::zeros(3, 3), DMatrix::zeros(3, 2), DMatrix::zeros(1, 3), DMatrix::zeros(1, 2)).unwrap();
        let adj = sys.adjoint();
        assert_eq!((adj.n(), adj.m(), adj.p()), (3, 1, 2));
    }
}
