//! Vibrating string on `[0, ℓ]` with unit wave speed: force input at `ξ = 0`,
//! clamped at `ξ = ℓ`, velocity measured at an interior node `ξ0`.
//!
//! The state is stored as strain `q = w′` and velocity `p = ẇ` on the nodes
//! `ξ_i = i·dx`. Stepping is done on the Riemann invariants `a = p + q`
//! (moving left) and `b = p − q` (moving right), which is exact when `dt = dx`.

use nalgebra::{DMatrix, DVector};

use crate::engine::{run_closed_loop, FeedbackRealizer, Plant};
use crate::error::{Error, Result};
use crate::pair::{ModulatingPair, Target};
use crate::signal::{trapezoid_weight, Impulse, ImpulsiveSignal, SampledSignal};

/// String geometry; `xi0` is snapped to the nearest node.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveConfig {
    pub length: f64,
    pub xi0: f64,
    pub nx: usize,
}

impl Default for WaveConfig {
    fn default() -> Self {
        Self {
            length: 1.0,
            xi0: 0.3,
            nx: 512,
        }
    }
}

impl WaveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(Error::InvalidParameter(format!("length must be positive, got {}", self.length)));
        }
        if self.nx < 2 {
            return Err(Error::InvalidParameter(format!("nx must be at least 2, got {}", self.nx)));
        }
        let i0 = self.xi0_index();
        if !(self.xi0 > 0.0 && self.xi0 < self.length) || i0 == 0 || i0 >= self.nx {
            return Err(Error::InvalidParameter(format!(
                "measurement point {} must be an interior node of [0, {}]",
                self.xi0, self.length
            )));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.nx as f64
    }

    pub fn xi0_index(&self) -> usize {
        (self.xi0 / self.dx()).round() as usize
    }

    /// Position of the node actually used for `ξ0`.
    pub fn xi0_on_grid(&self) -> f64 {
        self.xi0_index() as f64 * self.dx()
    }
}

/// Strain/velocity profile of the string.
#[derive(Clone, Debug, PartialEq)]
pub struct StringState {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub dx: f64,
    pub length: f64,
    pub xi0_index: usize,
}

impl StringState {
    pub fn zeros(cfg: &WaveConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            q: vec![0.0; cfg.nx + 1],
            p: vec![0.0; cfg.nx + 1],
            dx: cfg.dx(),
            length: cfg.length,
            xi0_index: cfg.xi0_index(),
        })
    }

    /// Both profiles sampled on the `nx + 1` nodes; the clamped end is forced to `p(ℓ) = 0`.
    pub fn from_profiles(cfg: &WaveConfig, q: Vec<f64>, mut p: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        if q.len() != cfg.nx + 1 || p.len() != cfg.nx + 1 {
            return Err(Error::Dimension(format!(
                "profiles need {} nodes, got {} and {}",
                cfg.nx + 1,
                q.len(),
                p.len()
            )));
        }
        p[cfg.nx] = 0.0;
        Ok(Self {
            q,
            p,
            dx: cfg.dx(),
            length: cfg.length,
            xi0_index: cfg.xi0_index(),
        })
    }

    /// Gaussian strain `exp(−((ξ − center)/width)²)` at rest.
    pub fn gaussian(cfg: &WaveConfig, center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")));
        }
        let mut s = Self::zeros(cfg)?;
        for (i, q) in s.q.iter_mut().enumerate() {
            let z = (i as f64 * s.dx - center) / width;
            *q = (-z * z).exp();
        }
        Ok(s)
    }

    /// Compactly supported `cos²` strain bump of half-width `width` at rest.
    pub fn pulse(cfg: &WaveConfig, center: f64, width: f64) -> Result<Self> {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!("width must be positive, got {width}")));
        }
        let mut s = Self::zeros(cfg)?;
        for (i, q) in s.q.iter_mut().enumerate() {
            let z = (i as f64 * s.dx - center) / width;
            if z.abs() < 1.0 {
                *q = (0.5 * std::f64::consts::PI * z).cos().powi(2);
            }
        }
        Ok(s)
    }

    pub fn nx(&self) -> usize {
        self.q.len() - 1
    }

    /// `½∫(q² + p²)dξ` by the trapezoidal rule.
    pub fn energy(&self) -> f64 {
        let n = self.q.len();
        let s: f64 = (0..n)
            .map(|i| trapezoid_weight(i, n) * (self.q[i] * self.q[i] + self.p[i] * self.p[i]))
            .sum();
        0.5 * s * self.dx
    }

    /// Measured output `y = p(ξ0)`.
    pub fn output(&self) -> f64 {
        self.p[self.xi0_index]
    }

    /// One step with boundary force `u` applied at the new time level; returns `p(ξ0)`.
    pub fn step(&mut self, u: f64, dt: f64) -> Result<f64> {
        let c = courant(dt, self.dx)?;
        let n = self.q.len();
        let mut a: Vec<f64> = (0..n).map(|i| self.p[i] + self.q[i]).collect();
        let mut b: Vec<f64> = (0..n).map(|i| self.p[i] - self.q[i]).collect();
        if c == 1.0 {
            a.copy_within(1.., 0);
            b.copy_within(..n - 1, 1);
        } else {
            for i in 0..n - 1 {
                a[i] += c * (a[i + 1] - a[i]);
            }
            for i in (1..n).rev() {
                b[i] += c * (b[i - 1] - b[i]);
            }
        }
        // p(ℓ) = 0 and q(0) = −u
        a[n - 1] = -b[n - 1];
        b[0] = a[0] + 2.0 * u;
        for i in 0..n {
            self.p[i] = 0.5 * (a[i] + b[i]);
            self.q[i] = 0.5 * (a[i] - b[i]);
        }
        Ok(self.output())
    }
}

/// `dt/dx`, snapped to exactly one when within roundoff.
fn courant(dt: f64, dx: f64) -> Result<f64> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
    }
    let c = dt / dx;
    if c > 1.0 + 1e-12 {
        return Err(Error::Cfl { dt, dx });
    }
    Ok(if (c - 1.0).abs() <= 1e-12 { 1.0 } else { c })
}

/// Functional form of [`StringState::step`].
pub fn step_string(s: &StringState, u: f64, dt: f64) -> Result<(StringState, f64)> {
    let mut next = s.clone();
    let y = next.step(u, dt)?;
    Ok((next, y))
}

/// The string as a sampled plant with input `u` and output `p(ξ0)`.
#[derive(Clone, Debug)]
pub struct WavePlant {
    state: StringState,
    dt: f64,
}

impl WavePlant {
    pub fn new(state: StringState, dt: f64) -> Result<Self> {
        courant(dt, state.dx)?;
        Ok(Self { state, dt })
    }

    pub fn string(&self) -> &StringState {
        &self.state
    }
}

impl Plant for WavePlant {
    fn input_dim(&self) -> usize {
        1
    }

    fn output_dim(&self) -> usize {
        1
    }

    fn dt(&self) -> f64 {
        self.dt
    }

    fn output(&self, _u: &[f64]) -> DVector<f64> {
        DVector::from_element(1, self.state.output())
    }

    fn predict_output(&self, _u_now: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let mut probe = self.state.clone();
        let free = probe.step(0.0, self.dt).expect("step size validated on construction");
        let feed = if self.state.xi0_index == 0 { 1.0 } else { 0.0 };
        (DVector::from_element(1, free), DMatrix::from_element(1, 1, feed))
    }

    fn advance(&mut self, _u_now: &[f64], u_next: &[f64]) {
        self.state
            .step(u_next[0], self.dt)
            .expect("step size validated on construction");
    }

    fn state(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(2 * self.state.q.len());
        v.extend_from_slice(&self.state.q);
        v.extend_from_slice(&self.state.p);
        DVector::from_vec(v)
    }
}

/// Closed-loop record of the string.
#[derive(Clone, Debug)]
pub struct WaveRun {
    pub inputs: SampledSignal,
    pub outputs: SampledSignal,
    /// Velocity at the controlled end, `p(t, 0)`.
    pub boundary_velocity: SampledSignal,
    /// Strain at the measurement point, `q(t, ξ0)`.
    pub measured_strain: SampledSignal,
    pub energy: SampledSignal,
    pub final_state: StringState,
}

impl WaveRun {
    /// `z(t) = u(t) + y(t − ξ0)` for `t ≥ ξ0`.
    pub fn z_signal(&self, xi0: f64) -> Result<SampledSignal> {
        let dt = self.inputs.dt();
        let lag = (xi0 / dt).round() as usize;
        if lag >= self.inputs.len() {
            return Err(Error::HorizonNotFilled {
                t: self.inputs.end_time(),
                horizon: xi0,
            });
        }
        let z = (lag..self.inputs.len())
            .map(|k| self.inputs.sample(k)[0] + self.outputs.sample(k - lag)[0])
            .collect();
        SampledSignal::scalar(self.inputs.time(lag), dt, z)
    }

    /// `sup |z(t) − p(t, 0)|` over `t ∈ [ξ0, t_max]`.
    pub fn z_identity_error(&self, xi0: f64, t_max: f64) -> Result<f64> {
        let z = self.z_signal(xi0)?;
        let lag = (xi0 / z.dt()).round() as usize;
        let mut err: f64 = 0.0;
        for k in 0..z.len() {
            if z.time(k) > t_max + 1e-9 * z.dt() {
                break;
            }
            err = err.max((z.sample(k)[0] - self.boundary_velocity.sample(k + lag)[0]).abs());
        }
        Ok(err)
    }
}

/// `η = −δ_{ξ0}`, `μ = δ`: the distributional pair for the boundary velocity.
pub fn delay_pair(xi0: f64) -> Result<ModulatingPair> {
    ModulatingPair::new(
        ImpulsiveSignal::dirac(xi0, vec![-1.0])?,
        ImpulsiveSignal::dirac(0.0, vec![1.0])?,
        xi0,
        Target::Functional("p(t,0)".into()),
        0.0,
    )
}

/// Impulse-train pair for `p(t, 0)` that accounts for every reflection
/// between the measurement point and both ends.
///
/// Requires `3ℓ/ξ0` to be an integer `J`; the horizon is `6ℓ`.
pub fn boundary_velocity_pair(length: f64, xi0: f64) -> Result<ModulatingPair> {
    let ratio = 3.0 * length / xi0;
    let j_count = ratio.round();
    if !(xi0 > 0.0 && xi0 < length) || (ratio - j_count).abs() > 1e-9 * ratio {
        return Err(Error::InvalidParameter(format!(
            "3ℓ/ξ0 must be an integer, got {ratio}"
        )));
    }
    let j_count = j_count as usize;
    let sign = |j: usize| if j.is_multiple_of(2) { 1.0 } else { -1.0 };
    let mut mu: Vec<(f64, f64)> = vec![(0.0, 1.0)];
    for j in 0..j_count {
        mu.push((2.0 * xi0 * (j + 1) as f64, -sign(j)));
    }
    mu.extend([(2.0 * length, -1.0), (4.0 * length, 1.0), (6.0 * length, -1.0)]);
    let eta: Vec<(f64, f64)> = (0..j_count)
        .map(|j| (xi0 * (2 * j + 1) as f64, -sign(j)))
        .collect();
    let horizon = 6.0 * length;
    ModulatingPair::new(
        impulse_train(eta, length)?,
        impulse_train(mu, length)?,
        horizon,
        Target::Functional("p(t,0)".into()),
        0.0,
    )
}

/// Merges coincident times (relative to `scale`) and drops cancelled weights.
fn impulse_train(mut items: Vec<(f64, f64)>, scale: f64) -> Result<ImpulsiveSignal> {
    items.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for (t, w) in items {
        match merged.last_mut() {
            Some(last) if (last.0 - t).abs() <= 1e-12 * scale => last.1 += w,
            _ => merged.push((t, w)),
        }
    }
    let impulses = merged
        .into_iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|(time, w)| Impulse {
            time,
            weight: vec![w],
        })
        .collect();
    ImpulsiveSignal::new(1, impulses, None)
}

/// Open-loop run driven by the boundary force `u` (starting at `t = 0`, step `dt`).
pub fn simulate_wave(s0: &StringState, u: &SampledSignal) -> Result<WaveRun> {
    if u.dim() != 1 || u.t0() != 0.0 {
        return Err(Error::InvalidParameter("wave input must be scalar and start at t = 0".into()));
    }
    let dt = u.dt();
    courant(dt, s0.dx)?;
    let len = u.len();
    let mut s = s0.clone();
    let mut y = Vec::with_capacity(len);
    let mut p0 = Vec::with_capacity(len);
    let mut q_xi0 = Vec::with_capacity(len);
    let mut energy = Vec::with_capacity(len);
    for k in 0..len {
        if k > 0 {
            s.step(u.sample(k)[0], dt)?;
        }
        y.push(s.output());
        p0.push(s.p[0]);
        q_xi0.push(s.q[s.xi0_index]);
        energy.push(s.energy());
    }
    Ok(WaveRun {
        inputs: u.clone(),
        outputs: SampledSignal::scalar(0.0, dt, y)?,
        boundary_velocity: SampledSignal::scalar(0.0, dt, p0)?,
        measured_strain: SampledSignal::scalar(0.0, dt, q_xi0)?,
        energy: SampledSignal::scalar(0.0, dt, energy)?,
        final_state: s,
    })
}

/// Closed loop `u = −k·z` with `z` realized by `pair`; zero input during the warm-up `[0, horizon)`.
pub fn run_wave_feedback(
    s0: &StringState,
    pair: ModulatingPair,
    k: f64,
    t_end: f64,
    dt: f64,
) -> Result<WaveRun> {
    if !(k >= 0.0 && k.is_finite()) {
        return Err(Error::InvalidParameter(format!("gain must be non-negative, got {k}")));
    }
    let warmup = pair.horizon;
    let fb = FeedbackRealizer::new(vec![pair], warmup)?.with_gain(DMatrix::from_element(1, 1, -k))?;
    let mut plant = WavePlant::new(s0.clone(), dt)?;
    let warm_len = (warmup / dt).ceil() as usize + 1;
    let zeros = SampledSignal::zeros(0.0, dt, 1, warm_len)?;
    let tr = run_closed_loop(&mut plant, &fb, &zeros, t_end)?;
    let n = s0.q.len();
    let len = tr.states.len();
    let mut energy = Vec::with_capacity(len);
    let mut p0 = Vec::with_capacity(len);
    let mut q_xi0 = Vec::with_capacity(len);
    let mut probe = s0.clone();
    for k in 0..len {
        let x = tr.states.sample(k);
        probe.q.copy_from_slice(&x[..n]);
        probe.p.copy_from_slice(&x[n..]);
        energy.push(probe.energy());
        p0.push(probe.p[0]);
        q_xi0.push(probe.q[s0.xi0_index]);
    }
    Ok(WaveRun {
        inputs: tr.inputs,
        outputs: tr.outputs,
        boundary_velocity: SampledSignal::scalar(0.0, dt, p0)?,
        measured_strain: SampledSignal::scalar(0.0, dt, q_xi0)?,
        energy: SampledSignal::scalar(0.0, dt, energy)?,
        final_state: plant.state,
    })
}

/// Delayed-output feedback `u(t) = −k/(1+k)·y(t − ξ0)` built from the pair `(−δ_{ξ0}, δ)`.
pub fn wave_stabilize(s0: &StringState, k: f64, t_end: f64, dt: f64) -> Result<WaveRun> {
    let xi0 = s0.xi0_index as f64 * s0.dx;
    run_wave_feedback(s0, delay_pair(xi0)?, k, t_end, dt)
}

/// Adjoint string driven by `α` at the left end and by the strain jump `η` at `ξ0`.
#[derive(Clone, Debug)]
pub struct WaveNullControl {
    pub eta: ImpulsiveSignal,
    pub mu: ImpulsiveSignal,
    /// `p(t, 0)` of the simulated adjoint, to compare with `μ`.
    pub simulated_mu: SampledSignal,
    /// `‖φ(t, ·)‖_{L²}` of the simulated adjoint.
    pub norm: SampledSignal,
    /// `sup_{t ≥ ξ0 + supp α} ‖φ(t, ·)‖`.
    pub residual: f64,
}

/// `η(t) = −α(t − ξ0)`, `μ = α`, and the adjoint string they drive.
///
/// `alpha` starts at `t = 0` with step `dx` and must vanish outside `(0, ξ0)`.
/// The adjoint is simulated on `[0, t_end]`.
pub fn wave_null_control(cfg: &WaveConfig, alpha: &SampledSignal, t_end: f64) -> Result<WaveNullControl> {
    cfg.validate()?;
    let dx = cfg.dx();
    if alpha.dim() != 1 || alpha.t0() != 0.0 || (alpha.dt() - dx).abs() > 1e-12 * dx {
        return Err(Error::InvalidParameter(
            "α must be scalar, start at t = 0 and be sampled with step dx".into(),
        ));
    }
    let i0 = cfg.xi0_index();
    let xi0 = cfg.xi0_on_grid();
    let tol = 1e-14 * alpha.max_abs().max(1.0);
    for k in 0..alpha.len() {
        let t = alpha.time(k);
        if (t <= 0.0 || t >= xi0 - 0.5 * dx) && alpha.sample(k)[0].abs() > tol {
            return Err(Error::Support(format!("α({t}) ≠ 0 outside (0, ξ0)")));
        }
    }
    let alpha_at = |k: usize| if k < alpha.len() { alpha.sample(k)[0] } else { 0.0 };
    let steps = (t_end / dx).round() as usize;
    let n = cfg.nx + 1;

    // Characteristics a = P + Q, b = P − Q. At ξ0 the node stores the outgoing
    // values (a on the left side, b on the right side).
    let mut a = vec![0.0; n];
    let mut b = vec![0.0; n];
    let norm_of = |a: &[f64], b: &[f64], a_plus: f64, b_minus: f64| -> f64 {
        // ‖(Q, P)‖² = ½∫(a² + b²)
        let s: f64 = (0..n)
            .map(|i| {
                let sq = if i == i0 {
                    0.5 * (a[i] * a[i] + b_minus * b_minus + a_plus * a_plus + b[i] * b[i])
                } else {
                    a[i] * a[i] + b[i] * b[i]
                };
                trapezoid_weight(i, n) * sq
            })
            .sum();
        (0.5 * s * dx).sqrt()
    };
    let mut norms = Vec::with_capacity(steps + 1);
    let mut mu_sim = Vec::with_capacity(steps + 1);
    norms.push(0.0);
    mu_sim.push(0.0);
    for k in 1..=steps {
        let eta = if k >= i0 { -alpha_at(k - i0) } else { 0.0 };
        let a_plus = a[i0 + 1];
        let b_minus = b[i0 - 1];
        a.copy_within(1.., 0);
        b.copy_within(..n - 1, 1);
        // strain jump Q(ξ0−) − Q(ξ0+) = η, velocity continuous
        let p = 0.5 * (a_plus + b_minus + eta);
        let q_right = 0.5 * (a_plus - b_minus - eta);
        let q_left = 0.5 * (a_plus - b_minus + eta);
        a[i0] = p + q_left;
        b[i0] = p - q_right;
        // P(ℓ) = 0 and Q(0) = −α
        a[n - 1] = -b[n - 1];
        b[0] = a[0] + 2.0 * alpha_at(k);
        norms.push(norm_of(&a, &b, a_plus, b_minus));
        mu_sim.push(0.5 * (a[0] + b[0]));
    }

    let eta_density = SampledSignal::from_fn(0.0, dx, 1, alpha.len() + i0, |t, o| {
        let k = (t / dx).round() as usize;
        o[0] = if k >= i0 { -alpha_at(k - i0) } else { 0.0 };
    })?;
    let support = alpha_support_end(alpha);
    let settle = ((support + xi0) / dx).ceil() as usize;
    let residual = norms.iter().skip(settle).fold(0.0_f64, |m, v| m.max(*v));
    Ok(WaveNullControl {
        eta: ImpulsiveSignal::from_density(eta_density)?,
        mu: ImpulsiveSignal::from_density(alpha.clone())?,
        simulated_mu: SampledSignal::scalar(0.0, dx, mu_sim)?,
        norm: SampledSignal::scalar(0.0, dx, norms)?,
        residual,
    })
}

fn alpha_support_end(alpha: &SampledSignal) -> f64 {
    (0..alpha.len())
        .rev()
        .find(|&k| alpha.sample(k)[0] != 0.0)
        .map_or(0.0, |k| alpha.time(k))
}
