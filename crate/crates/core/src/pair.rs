use crate::error::{Error, Result};
use crate::signal::ImpulsiveSignal;

/// Which functional of the state a modulating pair reproduces.
#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    /// `x ↦ ⟨x, φ0⟩` for a state-space vector `φ0`.
    Vector(Vec<f64>),
    /// A functional that is not an element of the state space (a point or
    /// boundary evaluation), described by name.
    Functional(String),
}

impl Target {
    pub fn as_vector(&self) -> Option<&[f64]> {
        match self {
            Target::Vector(v) => Some(v),
            Target::Functional(_) => None,
        }
    }
}

/// Null control `eta` of the adjoint system and the adjoint output `mu` it produces.
///
/// For every trajectory with input `u` and output `y`,
/// `(u∗mu − y∗eta)(t)` equals the target functional of `x(t)` once `t ≥ horizon`.
#[derive(Clone, Debug)]
pub struct ModulatingPair {
    pub eta: ImpulsiveSignal,
    pub mu: ImpulsiveSignal,
    pub horizon: f64,
    pub target: Target,
    /// Norm of the adjoint state left at `t = horizon`.
    pub residual: f64,
    /// Set when the residual stayed above the requested tolerance.
    pub degraded: bool,
}

impl ModulatingPair {
    pub fn new(
        eta: ImpulsiveSignal,
        mu: ImpulsiveSignal,
        horizon: f64,
        target: Target,
        residual: f64,
    ) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        eta.check_support(horizon)?;
        mu.check_support(horizon)?;
        Ok(Self {
            eta,
            mu,
            horizon,
            target,
            residual,
            degraded: false,
        })
    }

    /// Dimension of the plant output the pair is convolved with.
    pub fn output_dim(&self) -> usize {
        self.eta.dim()
    }

    /// Dimension of the plant input the pair is convolved with.
    pub fn input_dim(&self) -> usize {
        self.mu.dim()
    }

    /// Residual relative to the target norm (the absolute residual for functionals).
    pub fn relative_residual(&self) -> f64 {
        match &self.target {
            Target::Vector(v) => {
                let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if n > 0.0 {
                    self.residual / n
                } else {
                    self.residual
                }
            }
            Target::Functional(_) => self.residual,
        }
    }
}
