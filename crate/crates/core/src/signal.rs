//! Sampled and impulsive signals, the trapezoidal convolution calculus and the
//! moving-horizon ring buffer.
//!
//! All signals live on a uniform grid `t0 + k·dt`. Distributions are restricted
//! to a Dirac comb plus an optional sampled density; that class contains the
//! point evaluations and delays needed by the testbeds.

use crate::error::{Error, Result};

/// Relative tolerance used when comparing sample spacings.
const DT_RTOL: f64 = 1e-9;

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn same_step(a: f64, b: f64) -> bool {
    (a - b).abs() <= DT_RTOL * a.abs().max(b.abs())
}

fn check_step(a: f64, b: f64) -> Result<()> {
    if same_step(a, b) {
        Ok(())
    } else {
        Err(Error::StepMismatch { left: a, right: b })
    }
}

/// Trapezoidal weight (in units of `dt`) of node `j` on a grid with `len` nodes.
#[inline]
pub fn trapezoid_weight(j: usize, len: usize) -> f64 {
    if len < 2 {
        0.0
    } else if j == 0 || j + 1 == len {
        0.5
    } else {
        1.0
    }
}

/// A vector-valued signal sampled at `t0 + k·dt`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSignal {
    t0: f64,
    dt: f64,
    dim: usize,
    data: Vec<f64>,
}

impl SampledSignal {
    /// Builds a signal from row-major sample data (`data.len()` must be a multiple of `dim`).
    pub fn new(t0: f64, dt: f64, dim: usize, data: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        if dim == 0 {
            return Err(Error::InvalidParameter("signal dimension must be at least 1".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} values do not split into samples of dimension {dim}",
                data.len()
            )));
        }
        Ok(Self { t0, dt, dim, data })
    }

    pub fn from_samples(t0: f64, dt: f64, samples: &[Vec<f64>]) -> Result<Self> {
        let dim = samples.first().map(Vec::len).unwrap_or(1);
        if let Some(bad) = samples.iter().find(|s| s.len() != dim) {
            return Err(Error::Dimension(format!(
                "sample of dimension {} in a signal of dimension {dim}",
                bad.len()
            )));
        }
        Self::new(t0, dt, dim, samples.concat())
    }

    pub fn scalar(t0: f64, dt: f64, values: Vec<f64>) -> Result<Self> {
        Self::new(t0, dt, 1, values)
    }

    pub fn zeros(t0: f64, dt: f64, dim: usize, len: usize) -> Result<Self> {
        Self::new(t0, dt, dim, vec![0.0; dim * len])
    }

    /// Samples `f(t, out)` at `len` grid points.
    pub fn from_fn(
        t0: f64,
        dt: f64,
        dim: usize,
        len: usize,
        mut f: impl FnMut(f64, &mut [f64]),
    ) -> Result<Self> {
        let mut s = Self::zeros(t0, dt, dim, len)?;
        for k in 0..len {
            let t = s.time(k);
            f(t, s.sample_mut(k));
        }
        Ok(s)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.dt
    }

    /// Time of the last sample.
    pub fn end_time(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn sample(&self, k: usize) -> &[f64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn sample_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn samples(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Component `c` of every sample.
    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.samples().map(|s| s[c]).collect()
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim {
            return Err(Error::Dimension(format!(
                "sample of dimension {} pushed to a signal of dimension {}",
                sample.len(),
                self.dim
            )));
        }
        self.data.extend_from_slice(sample);
        Ok(())
    }

    /// Nearest sample index for time `t`, if `t` lies on the sampled range (up to half a step).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let k = ((t - self.t0) / self.dt).round();
        if k < 0.0 || k as usize >= self.len() {
            None
        } else {
            Some(k as usize)
        }
    }

    /// Same grid and dimension, every value multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            data: self.data.iter().map(|v| v * factor).collect(),
            ..self.clone()
        }
    }

    /// Trapezoidal approximation of `∫ |v(t)|² dt` over the sampled range, square-rooted.
    pub fn l2_norm(&self) -> f64 {
        let len = self.len();
        let sum: f64 = self
            .samples()
            .enumerate()
            .map(|(k, s)| trapezoid_weight(k, len) * dot(s, s))
            .sum();
        (sum * self.dt).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// `(v∗w)(t_k) = ∫_0^{t_k} ⟨v(τ), w(t_k − τ)⟩ dτ` by the trapezoidal rule.
///
/// Both signals are taken to start at their own `t0`; the result starts at
/// `v.t0 + w.t0`, is scalar, and has `min(len_v, len_w)` samples.
pub fn convolve_sampled(v: &SampledSignal, w: &SampledSignal) -> Result<SampledSignal> {
    check_step(v.dt, w.dt)?;
    if v.dim != w.dim {
        return Err(Error::Dimension(format!(
            "convolution of signals of dimension {} and {}",
            v.dim, w.dim
        )));
    }
    let len = v.len().min(w.len());
    let mut out = Vec::with_capacity(len);
    for k in 0..len {
        let acc: f64 = (0..=k)
            .map(|j| trapezoid_weight(j, k + 1) * dot(v.sample(j), w.sample(k - j)))
            .sum();
        out.push(acc * v.dt);
    }
    SampledSignal::scalar(v.t0 + w.t0, v.dt, out)
}

/// One Dirac impulse `weight · δ(t − time)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Impulse {
    pub time: f64,
    pub weight: Vec<f64>,
}

/// Dirac comb plus an optional sampled density starting at `t = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImpulsiveSignal {
    dim: usize,
    impulses: Vec<Impulse>,
    density: Option<SampledSignal>,
}

impl ImpulsiveSignal {
    pub fn new(dim: usize, impulses: Vec<Impulse>, density: Option<SampledSignal>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("signal dimension must be at least 1".into()));
        }
        let mut last = f64::NEG_INFINITY;
        for imp in &impulses {
            if !(imp.time >= 0.0 && imp.time.is_finite()) {
                return Err(Error::Support(format!("impulse at negative time {}", imp.time)));
            }
            if imp.time <= last {
                return Err(Error::Support("impulse times must be strictly increasing".into()));
            }
            if imp.weight.len() != dim {
                return Err(Error::Dimension(format!(
                    "impulse weight of dimension {} in a signal of dimension {dim}",
                    imp.weight.len()
                )));
            }
            last = imp.time;
        }
        if let Some(d) = &density {
            if d.dim() != dim {
                return Err(Error::Dimension(format!(
                    "density of dimension {} in a signal of dimension {dim}",
                    d.dim()
                )));
            }
            if d.t0().abs() > DT_RTOL * d.dt() {
                return Err(Error::Support(format!("density must start at t = 0, got {}", d.t0())));
            }
        }
        Ok(Self {
            dim,
            impulses,
            density,
        })
    }

    /// The zero distribution.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            impulses: Vec::new(),
            density: None,
        }
    }

    /// `weight · δ_time`.
    pub fn dirac(time: f64, weight: Vec<f64>) -> Result<Self> {
        Self::new(weight.len(), vec![Impulse { time, weight }], None)
    }

    pub fn from_density(density: SampledSignal) -> Result<Self> {
        Self::new(density.dim(), Vec::new(), Some(density))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn impulses(&self) -> &[Impulse] {
        &self.impulses
    }

    pub fn density(&self) -> Option<&SampledSignal> {
        self.density.as_ref()
    }

    /// Right end of the support (0 for the zero distribution).
    pub fn support_end(&self) -> f64 {
        let imp = self.impulses.last().map_or(0.0, |i| i.time);
        let den = self.density.as_ref().map_or(0.0, SampledSignal::end_time);
        imp.max(den)
    }

    pub fn check_support(&self, horizon: f64) -> Result<()> {
        let end = self.support_end();
        let slack = self.density.as_ref().map_or(0.0, |d| DT_RTOL * d.dt()) + 1e-12 * horizon;
        if end > horizon + slack {
            return Err(Error::Support(format!(
                "support ends at {end}, beyond the horizon {horizon}"
            )));
        }
        Ok(())
    }
}

/// Result of a convolution with an impulsive signal.
#[derive(Clone, Debug)]
pub struct Convolved {
    pub signal: SampledSignal,
    /// Largest distance between an impulse time and the grid point it was snapped to.
    pub snap_error: f64,
}

/// `(m∗v)(t_k) = Σ ⟨weight_i, v(t_k − time_i)⟩ + ∫ ⟨density(τ), v(t_k − τ)⟩ dτ`.
///
/// Impulse times are snapped to the nearest grid point of `v`; `v` is taken as
/// zero before its first sample. The density is zero beyond its last sample, so
/// for `t_k` past the end of the density the integral covers its whole support.
/// The result shares the grid of `v`.
pub fn convolve_impulsive(m: &ImpulsiveSignal, v: &SampledSignal) -> Result<Convolved> {
    if m.dim != v.dim() {
        return Err(Error::Dimension(format!(
            "impulsive signal of dimension {} convolved with a signal of dimension {}",
            m.dim,
            v.dim()
        )));
    }
    let len = v.len();
    let dt = v.dt();
    let mut out = vec![0.0; len];
    let mut snap_error = 0.0_f64;
    for imp in &m.impulses {
        let shift = (imp.time / dt).round() as usize;
        snap_error = snap_error.max((imp.time - shift as f64 * dt).abs());
        for (k, o) in out.iter_mut().enumerate().skip(shift) {
            *o += dot(&imp.weight, v.sample(k - shift));
        }
    }
    if let Some(d) = &m.density {
        check_step(d.dt(), dt)?;
        let dl = d.len();
        for (k, o) in out.iter_mut().enumerate() {
            let last = k.min(dl.saturating_sub(1));
            let acc: f64 = (0..=last)
                .map(|j| trapezoid_weight(j, last + 1) * dot(d.sample(j), v.sample(k - j)))
                .sum();
            *o += acc * dt;
        }
    }
    Ok(Convolved {
        signal: SampledSignal::scalar(v.t0(), dt, out)?,
        snap_error,
    })
}

/// Fixed-capacity history of the most recent samples, newest first.
///
/// Slots that have not been written yet read as zero, which matches a signal
/// that vanishes before the start time.
#[derive(Clone, Debug)]
pub struct SignalBuffer {
    dim: usize,
    capacity: usize,
    dt: f64,
    start_time: f64,
    pushed: usize,
    head: usize,
    storage: Vec<f64>,
    zeros: Vec<f64>,
}

impl SignalBuffer {
    /// `start_time` is the time stamp of the first pushed sample.
    pub fn new(dim: usize, capacity: usize, dt: f64, start_time: f64) -> Result<Self> {
        if dim == 0 || capacity == 0 {
            return Err(Error::InvalidParameter(
                "buffer dimension and capacity must be positive".into(),
            ));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParameter(format!("dt must be positive, got {dt}")));
        }
        Ok(Self {
            dim,
            capacity,
            dt,
            start_time,
            pushed: 0,
            head: 0,
            storage: vec![0.0; dim * capacity],
            zeros: vec![0.0; dim],
        })
    }

    /// A buffer holding every sample of `[t − horizon, t]`.
    pub fn for_horizon(dim: usize, horizon: f64, dt: f64, start_time: f64) -> Result<Self> {
        let steps = (horizon / dt - 1e-9).ceil().max(0.0) as usize;
        Self::new(dim, steps + 1, dt, start_time)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of samples pushed so far.
    pub fn pushed(&self) -> usize {
        self.pushed
    }

    /// Time stamp of the newest sample.
    pub fn head_time(&self) -> Option<f64> {
        (self.pushed > 0).then(|| self.start_time + (self.pushed - 1) as f64 * self.dt)
    }

    pub fn push(&mut self, sample: &[f64]) -> Result<()> {
        if sample.len() != self.dim {
            return Err(Error::Dimension(format!(
                "sample of dimension {} pushed to a buffer of dimension {}",
                sample.len(),
                self.dim
            )));
        }
        self.head = (self.head + 1) % self.capacity;
        self.storage[self.head * self.dim..(self.head + 1) * self.dim].copy_from_slice(sample);
        self.pushed += 1;
        Ok(())
    }

    /// Sample `lag` steps before the newest one (`lag = 0` is the newest).
    ///
    /// # Panics
    /// If `lag >= capacity`.
    pub fn lag(&self, lag: usize) -> &[f64] {
        assert!(lag < self.capacity, "lag {lag} outside buffer of capacity {}", self.capacity);
        if lag >= self.pushed {
            return &self.zeros;
        }
        let slot = (self.head + self.capacity - lag) % self.capacity;
        &self.storage[slot * self.dim..(slot + 1) * self.dim]
    }

    pub(crate) fn check_kernel(&self, kernel: &SampledSignal) -> Result<()> {
        check_step(kernel.dt(), self.dt)?;
        if kernel.dim() != self.dim {
            return Err(Error::Dimension(format!(
                "kernel of dimension {} against a buffer of dimension {}",
                kernel.dim(),
                self.dim
            )));
        }
        if kernel.len() > self.capacity {
            return Err(Error::KernelTooLong {
                kernel: kernel.len(),
                capacity: self.capacity,
            });
        }
        Ok(())
    }

    /// `∫_0^{T_k} ⟨buf(t − τ), kernel(τ)⟩ dτ` at the head time, trapezoidal in τ.
    pub fn dot_kernel(&self, kernel: &SampledSignal) -> Result<f64> {
        self.check_kernel(kernel)?;
        let len = kernel.len();
        let acc: f64 = (0..len)
            .map(|j| trapezoid_weight(j, len) * dot(self.lag(j), kernel.sample(j)))
            .sum();
        Ok(acc * self.dt)
    }

    /// Pushes `sample`, then evaluates [`dot_kernel`](Self::dot_kernel).
    pub fn push_and_dot(&mut self, sample: &[f64], kernel: &SampledSignal) -> Result<f64> {
        self.check_kernel(kernel)?;
        self.push(sample)?;
        self.dot_kernel(kernel)
    }

    /// Snapshot of the whole history, oldest first, as a signal ending at the head time.
    pub fn to_signal(&self) -> Result<SampledSignal> {
        let n = self.pushed.min(self.capacity);
        let head = self.head_time().unwrap_or(self.start_time - self.dt);
        let mut data = Vec::with_capacity(n * self.dim);
        for lag in (0..n).rev() {
            data.extend_from_slice(self.lag(lag));
        }
        SampledSignal::new(head - (n.saturating_sub(1)) as f64 * self.dt, self.dt, self.dim, data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(dt: f64, len: usize) -> SampledSignal {
        SampledSignal::from_fn(0.0, dt, 1, len, |t, o| o[0] = t).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(SampledSignal::new(0.0, 0.0, 1, vec![]).is_err());
        assert!(SampledSignal::new(0.0, 0.1, 2, vec![1.0]).is_err());
        assert!(SampledSignal::from_samples(0.0, 0.1, &[vec![1.0], vec![1.0, 2.0]]).is_err());
        let d = SampledSignal::scalar(0.0, 0.1, vec![1.0]).unwrap();
        assert!(ImpulsiveSignal::new(2, vec![], Some(d)).is_err());
        let dup = vec![
            Impulse { time: 0.1, weight: vec![1.0] },
            Impulse { time: 0.1, weight: vec![1.0] },
        ];
        assert!(ImpulsiveSignal::new(1, dup, None).is_err());
        assert!(ImpulsiveSignal::dirac(-0.5, vec![1.0]).is_err());
    }

    #[test]
    fn zero_signal_convolves_to_zero() {
        let v = SampledSignal::zeros(0.0, 0.1, 2, 30).unwrap();
        let w = SampledSignal::from_fn(0.0, 0.1, 2, 30, |t, o| {
            o[0] = t.sin();
            o[1] = 1.0;
        })
        .unwrap();
        let c = convolve_sampled(&v, &w).unwrap();
        assert!(c.values().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn constant_convolution_is_time() {
        let dt = 0.1;
        let one = SampledSignal::scalar(0.0, dt, vec![1.0; 51]).unwrap();
        let c = convolve_sampled(&one, &one).unwrap();
        for k in 0..c.len() {
            assert!((c.sample(k)[0] - c.time(k)).abs() <= dt * dt);
        }
    }

    #[test]
    fn output_is_truncated_to_shorter_input() {
        let c = convolve_sampled(&ramp(0.1, 10), &ramp(0.1, 7)).unwrap();
        assert_eq!(c.len(), 7);
    }

    #[test]
    fn convolution_rejects_mismatches() {
        let a = ramp(0.1, 5);
        let b = ramp(0.2, 5);
        assert!(matches!(convolve_sampled(&a, &b), Err(Error::StepMismatch { .. })));
        let c = SampledSignal::zeros(0.0, 0.1, 2, 5).unwrap();
        assert!(matches!(convolve_sampled(&a, &c), Err(Error::Dimension(_))));
        let m = ImpulsiveSignal::dirac(0.0, vec![1.0, 1.0]).unwrap();
        assert!(matches!(convolve_impulsive(&m, &a), Err(Error::Dimension(_))));
    }

    #[test]
    fn delta_is_neutral() {
        let v = SampledSignal::from_fn(0.0, 0.01, 1, 200, |t, o| o[0] = (3.0 * t).cos()).unwrap();
        let delta = ImpulsiveSignal::dirac(0.0, vec![1.0]).unwrap();
        let c = convolve_impulsive(&delta, &v).unwrap();
        assert_eq!(c.signal.values(), v.values());
        assert_eq!(c.snap_error, 0.0);
    }

    #[test]
    fn shifted_delta_delays() {
        let dt = 0.1;
        let v = SampledSignal::from_fn(0.0, dt, 1, 40, |t, o| o[0] = 1.0 + t * t).unwrap();
        let delta = ImpulsiveSignal::dirac(0.5, vec![1.0]).unwrap();
        let c = convolve_impulsive(&delta, &v).unwrap();
        for k in 0..v.len() {
            let expected = if k >= 5 { v.sample(k - 5)[0] } else { 0.0 };
            assert_eq!(c.signal.sample(k)[0], expected);
        }
        assert!(c.snap_error < 1e-12);
    }

    #[test]
    fn off_grid_impulse_reports_snap_error() {
        let v = ramp(0.1, 10);
        let delta = ImpulsiveSignal::dirac(0.23, vec![1.0]).unwrap();
        let c = convolve_impulsive(&delta, &v).unwrap();
        assert!((c.snap_error - 0.03).abs() < 1e-12);
    }

    #[test]
    fn density_beyond_its_support_integrates_full_horizon() {
        let dt = 0.1;
        // density 1 on [0, 1], v ≡ 2: (m∗v)(t) = 2·min(t, 1)
        let d = SampledSignal::scalar(0.0, dt, vec![1.0; 11]).unwrap();
        let m = ImpulsiveSignal::from_density(d).unwrap();
        let v = SampledSignal::scalar(0.0, dt, vec![2.0; 31]).unwrap();
        let c = convolve_impulsive(&m, &v).unwrap();
        for k in 0..31 {
            let t = k as f64 * dt;
            assert!((c.signal.sample(k)[0] - 2.0 * t.min(1.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn support_check() {
        let d = SampledSignal::scalar(0.0, 0.1, vec![1.0; 11]).unwrap();
        let m = ImpulsiveSignal::from_density(d).unwrap();
        assert!(m.check_support(1.0).is_ok());
        assert!(m.check_support(0.9).is_err());
        let delta = ImpulsiveSignal::dirac(0.3, vec![1.0]).unwrap();
        assert!(delta.check_support(0.3).is_ok());
        assert!(delta.check_support(0.2).is_err());
    }

    #[test]
    fn buffer_reads_zero_before_fill_and_wraps() {
        let mut b = SignalBuffer::new(1, 3, 0.1, 0.0).unwrap();
        assert_eq!(b.head_time(), None);
        b.push(&[1.0]).unwrap();
        assert_eq!(b.lag(0), &[1.0]);
        assert_eq!(b.lag(2), &[0.0]);
        for v in [2.0, 3.0, 4.0] {
            b.push(&[v]).unwrap();
        }
        assert_eq!([b.lag(0)[0], b.lag(1)[0], b.lag(2)[0]], [4.0, 3.0, 2.0]);
        assert!((b.head_time().unwrap() - 0.3).abs() < 1e-15);
        let s = b.to_signal().unwrap();
        assert_eq!(s.values(), &[2.0, 3.0, 4.0]);
        assert!((s.t0() - 0.1).abs() < 1e-15);
    }

    #[test]
    fn push_and_dot_zero_kernel() {
        let mut b = SignalBuffer::new(2, 11, 0.1, 0.0).unwrap();
        let k = SampledSignal::zeros(0.0, 0.1, 2, 11).unwrap();
        for i in 0..20 {
            let v = b.push_and_dot(&[i as f64, 1.0], &k).unwrap();
            assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn push_and_dot_constant() {
        let dt = 0.01;
        let horizon = 1.0;
        let mut b = SignalBuffer::for_horizon(1, horizon, dt, 0.0).unwrap();
        let kernel = SampledSignal::scalar(0.0, dt, vec![1.0; b.capacity()]).unwrap();
        let mut last = 0.0;
        for _ in 0..150 {
            last = b.push_and_dot(&[3.0], &kernel).unwrap();
        }
        assert!((last - 3.0 * horizon).abs() <= dt * dt);
    }

    #[test]
    fn push_and_dot_rejects_long_kernel_without_pushing() {
        let mut b = SignalBuffer::new(1, 4, 0.1, 0.0).unwrap();
        let kernel = SampledSignal::scalar(0.0, 0.1, vec![1.0; 5]).unwrap();
        assert!(matches!(
            b.push_and_dot(&[1.0], &kernel),
            Err(Error::KernelTooLong { kernel: 5, capacity: 4 })
        ));
        assert_eq!(b.pushed(), 0);
    }
}
