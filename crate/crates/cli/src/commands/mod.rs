use std::f64::consts::TAU;

use modfun_core::io::{read_pair_bundle, read_signal};
use modfun_core::{ModulatingPair, SampledSignal};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{BumpSpec, GenKind, Generated, Kind, RunConfig, SignalSpec};
use crate::output::{Outcome, Table};
use crate::{Command, Failure};

mod heat;
mod lti;
mod wave;

pub fn dispatch(cmd: Command, cfg: &RunConfig) -> Result<Outcome, Failure> {
    match (cmd, cfg.kind()) {
        (Command::DemoWave, _) => wave::demo(cfg),
        (Command::DemoHeat, _) => heat::demo(cfg),
        (Command::Nullcontrol, Kind::Lti) => lti::nullcontrol(cfg),
        (Command::Nullcontrol, Kind::Wave) => wave::nullcontrol(cfg),
        (Command::Nullcontrol, Kind::Heat) => heat::nullcontrol(cfg),
        (Command::Estimate, Kind::Lti) => lti::estimate(cfg),
        (Command::Estimate, Kind::Wave) => wave::estimate(cfg),
        (Command::Estimate, Kind::Heat) => heat::estimate(cfg),
        (Command::Feedback, Kind::Lti) => lti::feedback(cfg),
        (Command::Feedback, Kind::Wave) => wave::feedback(cfg),
        (Command::Feedback, Kind::Heat) => Err(Failure::Validation(
            "feedback is available for kind = \"lti\" and kind = \"wave\"".into(),
        )),
        (Command::Simulate, Kind::Lti) => lti::simulate(cfg),
        (Command::Simulate, Kind::Wave) => wave::simulate(cfg),
        (Command::Simulate, Kind::Heat) => heat::simulate(cfg),
    }
}

fn rng(cfg: &RunConfig) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(cfg.seed.unwrap_or(0))
}

/// Number of steps of size `dt` in `t`, rejecting a non-positive result.
fn steps(name: &str, t: f64, dt: f64) -> Result<usize, Failure> {
    let n = (t / dt).round();
    if !(n >= 1.0 && n.is_finite()) {
        return Err(Failure::Validation(format!("{name} = {t} spans no step of dt = {dt}")));
    }
    Ok(n as usize)
}

fn generate(g: &Generated, dim: usize, dt: f64, len: usize, rng: &mut ChaCha8Rng) -> Result<SampledSignal, Failure> {
    let s = match g.kind {
        GenKind::Zero => SampledSignal::zeros(0.0, dt, dim, len)?,
        GenKind::Sine => SampledSignal::from_fn(0.0, dt, dim, len, |t, out| {
            for (c, v) in out.iter_mut().enumerate() {
                *v = g.amplitude * (TAU * g.frequency * t + c as f64).sin();
            }
        })?,
        GenKind::Random => {
            let modes: Vec<Vec<(f64, f64, f64)>> = (0..dim)
                .map(|_| {
                    (0..4)
                        .map(|_| {
                            (
                                rng.gen_range(-0.5..0.5) * g.amplitude,
                                rng.gen_range(0.5..4.0) * g.frequency,
                                rng.gen_range(0.0..TAU),
                            )
                        })
                        .collect()
                })
                .collect();
            SampledSignal::from_fn(0.0, dt, dim, len, |t, out| {
                for (v, m) in out.iter_mut().zip(&modes) {
                    *v = m.iter().map(|(a, w, ph)| a * (w * t + ph).sin()).sum();
                }
            })?
        }
    };
    Ok(s)
}

/// The configured input on `len` samples from `t = 0`, or `fallback` when none is given.
fn input_signal(
    cfg: &RunConfig,
    fallback: &Generated,
    dim: usize,
    dt: f64,
    len: usize,
    rng: &mut ChaCha8Rng,
) -> Result<SampledSignal, Failure> {
    match &cfg.input {
        None => generate(fallback, dim, dt, len, rng),
        Some(SignalSpec::Generated(g)) => generate(g, dim, dt, len, rng),
        Some(SignalSpec::File(p)) => {
            let s = read_signal(&cfg.resolve(p))?;
            check_record(&s, dim, dt, "input")?;
            if s.len() < len {
                return Err(Failure::Validation(format!(
                    "input file has {} samples, {len} needed",
                    s.len()
                )));
            }
            Ok(SampledSignal::new(0.0, dt, dim, s.values()[..len * dim].to_vec())?)
        }
    }
}

fn check_record(s: &SampledSignal, dim: usize, dt: f64, name: &str) -> Result<(), Failure> {
    if s.dim() != dim {
        return Err(Failure::Validation(format!("{name} has {} channels, expected {dim}", s.dim())));
    }
    if (s.dt() - dt).abs() > 1e-9 * dt || s.t0().abs() > 1e-9 * dt {
        return Err(Failure::Validation(format!(
            "{name} must start at t = 0 with step {dt} (got t0 = {}, dt = {})",
            s.t0(),
            s.dt()
        )));
    }
    Ok(())
}

/// Loads `pairs` bundles, insisting on one shared horizon.
fn load_pairs(cfg: &RunConfig) -> Result<Option<Vec<ModulatingPair>>, Failure> {
    let Some(paths) = &cfg.pairs else {
        return Ok(None);
    };
    if paths.is_empty() {
        return Err(Failure::Validation("`pairs` lists no bundles".into()));
    }
    let pairs = paths
        .iter()
        .map(|p| read_pair_bundle(&cfg.resolve(p)))
        .collect::<Result<Vec<_>, _>>()?;
    let h = pairs[0].horizon;
    if let Some(p) = pairs.iter().find(|p| (p.horizon - h).abs() > 1e-12 * h) {
        return Err(Failure::Validation(format!(
            "horizon mismatch between bundles: {h} vs {}",
            p.horizon
        )));
    }
    Ok(Some(pairs))
}

/// `A·exp(1 − 1/(1 − s²))` on `|s| < 1`, zero elsewhere.
fn bump(b: &BumpSpec, t: f64) -> f64 {
    let s = (t - b.center) / b.width;
    if s.abs() < 1.0 {
        b.amplitude * (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

/// Index, absolute and relative residual, degraded flag.
fn residual_table(pairs: &[ModulatingPair]) -> Table {
    let mut t = Table::new(["pair", "residual", "relative", "degraded"]);
    for (j, p) in pairs.iter().enumerate() {
        t.push(vec![j as f64, p.residual, p.relative_residual(), f64::from(u8::from(p.degraded))]);
    }
    t
}
