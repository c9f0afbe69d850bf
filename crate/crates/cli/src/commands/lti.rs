use modfun_core::engine::gram_deviation;
use modfun_core::io::{read_lti, read_signal};
use modfun_core::lti;
use modfun_core::{
    adjoint_null_control, run_closed_loop, Estimator, FeedbackRealizer, LtiPlant, LtiSystem,
    ModulatingPair, SampledSignal,
};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{check_record, input_signal, load_pairs, residual_table, rng, steps};
use crate::config::{positive, GenKind, Generated, RunConfig, SignalSpec, TargetSpec};
use crate::output::{bundle_name, Outcome, Table};
use crate::Failure;

const DEFAULT_TOLERANCE: f64 = 1e-8;

fn system(cfg: &RunConfig) -> Result<LtiSystem, Failure> {
    let path = cfg
        .system
        .as_ref()
        .ok_or_else(|| Failure::Validation("`system` is required for kind = \"lti\"".into()))?;
    Ok(read_lti(&cfg.resolve(path))?)
}

fn horizon(cfg: &RunConfig) -> Result<f64, Failure> {
    positive("horizon", cfg.horizon.unwrap_or(1.0))
}

fn time_step(cfg: &RunConfig) -> Result<f64, Failure> {
    positive("dt", cfg.dt.unwrap_or(1e-3))
}

fn tolerance(cfg: &RunConfig) -> Result<f64, Failure> {
    positive("tolerance", cfg.tolerance.unwrap_or(DEFAULT_TOLERANCE))
}

fn unit(n: usize, i: usize) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = 1.0;
    e
}

/// A literal `target`, the unit vector `target_index`, or every unit vector.
fn targets(cfg: &RunConfig, n: usize) -> Result<Vec<DVector<f64>>, Failure> {
    match (&cfg.target, cfg.target_index) {
        (Some(_), Some(_)) => Err(Failure::Validation("give either `target` or `target_index`".into())),
        (Some(TargetSpec::Vector(v)), None) if v.len() == n => Ok(vec![DVector::from_column_slice(v)]),
        (Some(TargetSpec::Vector(v)), None) => Err(Failure::Validation(format!(
            "target has length {}, the system has n = {n}",
            v.len()
        ))),
        (Some(TargetSpec::Name(s)), None) => Err(Failure::Validation(format!(
            "named target `{s}` applies to kind = \"wave\"; give a vector"
        ))),
        (None, Some(i)) if i < n => Ok(vec![unit(n, i)]),
        (None, Some(i)) => Err(Failure::Validation(format!("target_index {i} out of range for n = {n}"))),
        (None, None) => Ok((0..n).map(|i| unit(n, i)).collect()),
    }
}

fn initial_state(cfg: &RunConfig, n: usize) -> Result<DVector<f64>, Failure> {
    match &cfg.x0 {
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Failure::Validation(format!("x0 has length {}, n = {n}", v.len()))),
        None => {
            let mut r = rng(cfg);
            Ok(DVector::from_fn(n, |_, _| r.gen_range(-1.0..1.0)))
        }
    }
}

/// Designs one pair per target and flags those above `tol` (relative residual).
fn design(
    sys: &LtiSystem,
    targets: &[DVector<f64>],
    horizon: f64,
    dt: f64,
    tol: f64,
    out: &mut Outcome,
) -> Result<Vec<ModulatingPair>, Failure> {
    let mut pairs = Vec::with_capacity(targets.len());
    for (j, phi0) in targets.iter().enumerate() {
        let mut pair = adjoint_null_control(sys, phi0, horizon, dt)?;
        let rel = pair.relative_residual();
        if rel > tol {
            pair.degraded = true;
            out.fail(format!("pair {j}: relative residual {rel:e} > {tol:e}"));
        }
        pairs.push(pair);
    }
    Ok(pairs)
}

pub fn nullcontrol(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sys = system(cfg)?;
    let (horizon, dt, tol) = (horizon(cfg)?, time_step(cfg)?, tolerance(cfg)?);
    steps("horizon", horizon, dt)?;
    let targets = targets(cfg, sys.n())?;
    let mut out = Outcome::default();
    let pairs = design(&sys, &targets, horizon, dt, tol, &mut out)?;
    let worst = pairs.iter().map(ModulatingPair::relative_residual).fold(0.0, f64::max);
    out.note(format!("{} pair(s), horizon {horizon}, worst relative residual {worst:e}", pairs.len()));
    out.table("residuals.csv", residual_table(&pairs));
    let count = pairs.len();
    for (j, p) in pairs.into_iter().enumerate() {
        out.bundle(bundle_name(j, count), p);
    }
    Ok(out)
}

/// Recorded `(u, y, truth)` or a simulation of the configured system.
struct Records {
    u: SampledSignal,
    y: SampledSignal,
    truth: Option<SampledSignal>,
}

fn records(cfg: &RunConfig, sys: Option<&LtiSystem>, dt: f64, horizon: f64) -> Result<Records, Failure> {
    if let Some(y_path) = &cfg.output {
        let y = read_signal(&cfg.resolve(y_path))?;
        let u = match &cfg.input {
            Some(SignalSpec::File(p)) => read_signal(&cfg.resolve(p))?,
            _ => return Err(Failure::Validation("a recorded `output` needs a recorded `input` file".into())),
        };
        check_record(&u, u.dim(), dt, "input")?;
        check_record(&y, y.dim(), dt, "output")?;
        if u.len() != y.len() {
            return Err(Failure::Validation("input and output records differ in length".into()));
        }
        let truth = cfg.truth.as_ref().map(|p| read_signal(&cfg.resolve(p))).transpose()?;
        if let Some(x) = &truth {
            check_record(x, x.dim(), dt, "truth")?;
        }
        return Ok(Records { u, y, truth });
    }
    let sys = sys.ok_or_else(|| Failure::Validation("need either `system` or recorded `output`".into()))?;
    let x0 = initial_state(cfg, sys.n())?;
    let len = steps("t_end", cfg.t_end.unwrap_or(3.0 * horizon), dt)? + 1;
    let random = Generated {
        kind: GenKind::Random,
        amplitude: 1.0,
        frequency: 1.0,
    };
    let u = input_signal(cfg, &random, sys.m(), dt, len, &mut rng(cfg))?;
    let tr = lti::simulate(sys, &x0, &u)?;
    Ok(Records {
        u,
        y: tr.outputs,
        truth: Some(tr.states),
    })
}

pub fn estimate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sys = cfg.system.as_ref().map(|_| system(cfg)).transpose()?;
    let dt = time_step(cfg)?;
    let tol = cfg.tolerance.map(|t| positive("tolerance", t)).transpose()?;
    let weight = positive("inner_weight", cfg.inner_weight.unwrap_or(1.0))?;
    let mut out = Outcome::default();
    let pairs = match load_pairs(cfg)? {
        Some(p) => p,
        None => {
            let sys = sys
                .as_ref()
                .ok_or_else(|| Failure::Validation("need `pairs` bundles or a `system` to design them".into()))?;
            let horizon = horizon(cfg)?;
            steps("horizon", horizon, dt)?;
            design(sys, &targets(cfg, sys.n())?, horizon, dt, DEFAULT_TOLERANCE, &mut out)?
        }
    };
    let horizon = pairs[0].horizon;
    let rec = records(cfg, sys.as_ref(), dt, horizon)?;
    let est = Estimator::new(pairs, dt)?;

    // Reconstruction needs the targets to form an orthonormal basis of the state space.
    let targets: Option<Vec<DVector<f64>>> = est
        .pairs()
        .iter()
        .map(|p| p.target.as_vector().map(DVector::from_column_slice))
        .collect();
    let full_basis = targets.as_ref().is_some_and(|b| {
        b.len() == b[0].len() && gram_deviation(b, weight).is_ok_and(|d| d <= 1e-10)
    });
    let mut est = if full_basis { est.with_target_basis(weight)? } else { est };
    if let Some(x) = &rec.truth {
        if full_basis && x.dim() != est.pairs().len() {
            return Err(Failure::Validation(format!(
                "truth has {} channels, the basis spans {}",
                x.dim(),
                est.pairs().len()
            )));
        }
    }

    let stride = cfg.stride.unwrap_or(1).max(1);
    let first = steps("horizon", horizon, dt)?;
    let count = est.pairs().len();
    let mut coeffs = Table::new(std::iter::once("t".to_string()).chain((0..count).map(|j| format!("c{j}"))));
    let mut recon = Table::new(std::iter::once("t".to_string()).chain((0..count).map(|j| format!("x{j}"))));
    let mut errors = Table::new(["t", "error", "norm"]);
    let mut worst: f64 = 0.0;
    for k in 0..rec.u.len() {
        est.push(rec.u.sample(k), rec.y.sample(k))?;
        if k < first || (k - first) % stride != 0 {
            continue;
        }
        let t = rec.u.time(k);
        let c = if full_basis {
            let r = est.reconstruct_state(t)?;
            recon.push(std::iter::once(t).chain(r.state.iter().copied()).collect());
            if let Some(x) = &rec.truth {
                let x = DVector::from_column_slice(x.sample(k));
                let e = (&x - &r.state).norm();
                worst = worst.max(e / (1.0 + x.norm()));
                errors.push(vec![t, e, x.norm()]);
            }
            r.coefficients
        } else {
            est.coefficients(t)?
        };
        coeffs.push(std::iter::once(t).chain(c).collect());
    }
    if coeffs.len() == 0 {
        return Err(Failure::Validation(format!("records end before the horizon {horizon}")));
    }
    out.note(format!("{} estimate(s) from t = {horizon}", coeffs.len()));
    out.table("coeffs.csv", coeffs);
    if full_basis {
        out.table("reconstruction.csv", recon);
    }
    if full_basis && rec.truth.is_some() {
        out.note(format!("max error / (1 + |x|) = {worst:e}"));
        if let Some(tol) = tol {
            if worst > tol {
                out.fail(format!("reconstruction error {worst:e} > {tol:e}"));
            }
        }
        out.table("error_l2.csv", errors);
    }
    Ok(out)
}

pub fn feedback(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sys = system(cfg)?;
    let dt = time_step(cfg)?;
    let mut out = Outcome::default();
    let gain_rows = cfg.feedback_gain.as_ref().map(|rows| {
        let cols = rows.first().map_or(0, Vec::len);
        (rows.len(), cols, rows.iter().flatten().copied().collect::<Vec<_>>(), rows.iter().all(|r| r.len() == cols))
    });
    let (pairs, gain) = match (load_pairs(cfg)?, gain_rows) {
        (Some(pairs), gain) => {
            let m = pairs.len();
            let gain = match gain {
                None => DMatrix::identity(m, m),
                Some((r, c, data, true)) if r == m && c == m => DMatrix::from_row_slice(m, m, &data),
                Some(_) => {
                    return Err(Failure::Validation(format!(
                        "with bundles, feedback_gain must be {m}x{m}"
                    )))
                }
            };
            (pairs, gain)
        }
        (None, Some((r, c, data, true))) if r == sys.m() && c == sys.n() => {
            let f = DMatrix::from_row_slice(r, c, &data);
            let horizon = horizon(cfg)?;
            steps("horizon", horizon, dt)?;
            let targets: Vec<_> = f.row_iter().map(|row| row.transpose()).collect();
            let pairs = design(&sys, &targets, horizon, dt, tolerance(cfg)?, &mut out)?;
            (pairs, DMatrix::identity(r, r))
        }
        (None, Some(_)) => {
            return Err(Failure::Validation(format!(
                "feedback_gain must be {}x{} (m x n)",
                sys.m(),
                sys.n()
            )))
        }
        (None, None) => return Err(Failure::Validation("need `feedback_gain` or `pairs`".into())),
    };
    let horizon = pairs[0].horizon;
    let warmup = positive("warmup", cfg.warmup.unwrap_or(horizon))?;
    let x0 = initial_state(cfg, sys.n())?;
    let t_end = positive("t_end", cfg.t_end.unwrap_or(5.0))?;
    steps("t_end", t_end, dt)?;
    let zero = Generated {
        kind: GenKind::Zero,
        amplitude: 1.0,
        frequency: 1.0,
    };
    let warm = input_signal(cfg, &zero, sys.m(), dt, steps("warmup", warmup, dt)? + 1, &mut rng(cfg))?;
    let fb = FeedbackRealizer::new(pairs, warmup)?.with_gain(gain)?;
    let mut plant = LtiPlant::new(sys, x0.clone(), dt)?;
    let tr = run_closed_loop(&mut plant, &fb, &warm, t_end)?;
    let last = DVector::from_column_slice(tr.states.sample(tr.states.len() - 1));
    out.note(format!("|x(0)| = {:e}, |x({t_end})| = {:e}", x0.norm(), last.norm()));
    out.table(
        "trajectory.csv",
        Table::from_signals(&[("x", &tr.states), ("u", &tr.inputs), ("y", &tr.outputs)]),
    );
    Ok(out)
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let sys = system(cfg)?;
    let dt = time_step(cfg)?;
    let x0 = initial_state(cfg, sys.n())?;
    let len = steps("t_end", cfg.t_end.unwrap_or(5.0), dt)? + 1;
    let random = Generated {
        kind: GenKind::Random,
        amplitude: 1.0,
        frequency: 1.0,
    };
    let u = input_signal(cfg, &random, sys.m(), dt, len, &mut rng(cfg))?;
    let tr = lti::simulate(&sys, &x0, &u)?;
    let mut out = Outcome::default();
    out.note(format!("{len} samples"));
    out.table(
        "trajectory.csv",
        Table::from_signals(&[("x", &tr.states), ("u", &tr.inputs), ("y", &tr.outputs)]),
    );
    Ok(out)
}
