use modfun_core::heat::{
    heat_null_controls_with, simulate_heat, Grid2D, HeatConfig, HeatSystem, NullControlOptions, PolyBasis,
};
use modfun_core::{Estimator, ModulatingPair, SampledSignal};
use nalgebra::DVector;

use super::{input_signal, load_pairs, residual_table, rng, steps};
use crate::config::{positive, InitKind, RunConfig, TargetSpec};
use crate::output::{bundle_name, Outcome, Table};
use crate::Failure;

fn heat_config(cfg: &RunConfig) -> Result<HeatConfig, Failure> {
    let d = HeatConfig::default();
    let hc = HeatConfig {
        l1: positive("L1", cfg.l1.unwrap_or(d.l1))?,
        l2: positive("L2", cfg.l2.unwrap_or(d.l2))?,
        nx: cfg.nx.unwrap_or(d.nx),
        ny: cfg.ny.unwrap_or(d.ny),
        k_diff: positive("k_diff", cfg.k_diff.unwrap_or(d.k_diff))?,
        c_react: cfg.c_react.unwrap_or(d.c_react),
        horizon: positive("horizon", cfg.horizon.unwrap_or(d.horizon))?,
        dt: positive("dt", cfg.dt.unwrap_or(d.dt))?,
        basis_degree: cfg.basis_degree.unwrap_or(d.basis_degree),
    };
    if !hc.c_react.is_finite() {
        return Err(Failure::Validation("c_react must be finite".into()));
    }
    steps("horizon", hc.horizon, hc.dt)?;
    Ok(hc)
}

fn options(cfg: &RunConfig) -> Result<NullControlOptions, Failure> {
    let d = NullControlOptions::default();
    Ok(NullControlOptions {
        tol_null: positive("tol_null", cfg.tol_null.unwrap_or(d.tol_null))?,
        ..d
    })
}

/// Basis vectors selected by `target_index`, a literal nodal `target`, or all of them.
fn targets(cfg: &RunConfig, basis: &PolyBasis, n: usize) -> Result<Vec<DVector<f64>>, Failure> {
    match (&cfg.target, cfg.target_index) {
        (Some(_), Some(_)) => Err(Failure::Validation("give either `target` or `target_index`".into())),
        (None, Some(i)) if i < basis.len() => Ok(vec![basis.vectors()[i].clone()]),
        (None, Some(i)) => Err(Failure::Validation(format!(
            "target_index {i} out of range for {} basis vectors",
            basis.len()
        ))),
        (Some(TargetSpec::Vector(v)), None) if v.len() == n => Ok(vec![DVector::from_column_slice(v)]),
        (Some(_), None) => Err(Failure::Validation(format!("target must be a nodal vector of length {n}"))),
        (None, None) => Ok(basis.vectors().to_vec()),
    }
}

/// Designs the pairs, recording degraded ones as failures.
fn design(
    cfg: &RunConfig,
    sys: &HeatSystem,
    hc: &HeatConfig,
    targets: &[DVector<f64>],
    out: &mut Outcome,
) -> Result<Vec<ModulatingPair>, Failure> {
    let opts = options(cfg)?;
    let pairs = heat_null_controls_with(sys, targets, hc.horizon, hc.dt, &opts)?;
    for (j, p) in pairs.iter().enumerate() {
        if p.degraded {
            out.fail(format!(
                "pair {j}: relative residual {:e} > tol_null {:e}",
                p.relative_residual(),
                opts.tol_null
            ));
        }
    }
    let worst = pairs.iter().map(ModulatingPair::relative_residual).fold(0.0, f64::max);
    out.note(format!("{} pair(s), horizon {}, worst relative residual {worst:e}", pairs.len(), hc.horizon));
    Ok(pairs)
}

fn initial(cfg: &RunConfig, grid: &Grid2D) -> Result<DVector<f64>, Failure> {
    use std::f64::consts::PI;
    let (l1, l2) = (grid.l1, grid.l2);
    let modes = || grid.sample(|x, y| (PI * x / l1).sin() * (PI * y / l2).sin() + (x / l1) * (y / l2) * (1.0 - y / l2));
    let Some(init) = &cfg.init else {
        return Ok(modes());
    };
    match init.kind {
        InitKind::Modes => Ok(modes()),
        InitKind::Gaussian | InitKind::Pulse => {
            let cx = init.center.unwrap_or(0.5 * l1);
            let w = positive("init.width", init.width.unwrap_or(0.2 * l1))?;
            let pulse = init.kind == InitKind::Pulse;
            Ok(grid.sample(|x, y| {
                let r = ((x - cx).powi(2) + (y - 0.5 * l2).powi(2)).sqrt() / w;
                match pulse {
                    false => (-r * r).exp(),
                    true if r < 1.0 => (0.5 * PI * r).cos().powi(2),
                    true => 0.0,
                }
            }))
        }
        InitKind::File => {
            let path = init
                .path
                .as_ref()
                .ok_or_else(|| Failure::Validation("init kind = \"file\" needs `path`".into()))?;
            read_field(&cfg.resolve(path), grid)
        }
    }
}

/// `x,y,value` rows in node order.
fn read_field(path: &std::path::Path, grid: &Grid2D) -> Result<DVector<f64>, Failure> {
    let bad = |m: String| Failure::Validation(format!("{}: {m}", path.display()));
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| bad(e.to_string()))?;
    let mut values = Vec::with_capacity(grid.len());
    for (idx, rec) in r.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| {
            rec.get(i)
                .ok_or_else(|| bad(format!("row {}: expected x,y,value", idx + 1)))?
                .parse::<f64>()
                .map_err(|e| bad(format!("row {}: {e}", idx + 1)))
        };
        let (x, y, v) = (num(0)?, num(1)?, num(2)?);
        if idx < grid.len() {
            let (gx, gy) = grid.coords(idx);
            if (gx - x).abs() > 1e-6 * grid.dx || (gy - y).abs() > 1e-6 * grid.dy {
                return Err(bad(format!("row {} is at ({x}, {y}), node is at ({gx}, {gy})", idx + 1)));
            }
        }
        values.push(v);
    }
    if values.len() != grid.len() {
        return Err(bad(format!("{} rows for {} nodes", values.len(), grid.len())));
    }
    Ok(DVector::from_vec(values))
}

/// Boundary data: the configured input, or a smooth profile `sin(πy/L2)·(0.3 sin 2t + 0.2 cos 3t)`.
fn input(cfg: &RunConfig, grid: &Grid2D, dt: f64, len: usize) -> Result<SampledSignal, Failure> {
    if cfg.input.is_some() {
        let unused = crate::config::Generated {
            kind: crate::config::GenKind::Zero,
            amplitude: 1.0,
            frequency: 1.0,
        };
        return input_signal(cfg, &unused, grid.ny, dt, len, &mut rng(cfg));
    }
    let dy = grid.dy;
    let l2 = grid.l2;
    Ok(SampledSignal::from_fn(0.0, dt, grid.ny, len, |t, o| {
        let a = 0.3 * (2.0 * t).sin() + 0.2 * (3.0 * t).cos();
        for (j, v) in o.iter_mut().enumerate() {
            *v = (std::f64::consts::PI * (j + 1) as f64 * dy / l2).sin() * a;
        }
    })?)
}

fn stride(cfg: &RunConfig, hc: &HeatConfig) -> usize {
    cfg.stride
        .unwrap_or_else(|| ((0.05 * hc.horizon / hc.dt).round() as usize).max(1))
        .max(1)
}

fn field_table(grid: &Grid2D, value: &DVector<f64>, truth: Option<&DVector<f64>>) -> Table {
    let mut t = match truth {
        Some(_) => Table::new(["x", "y", "value", "truth"]),
        None => Table::new(["x", "y", "value"]),
    };
    for idx in 0..grid.len() {
        let (x, y) = grid.coords(idx);
        let mut row = vec![x, y, value[idx]];
        if let Some(tr) = truth {
            row.push(tr[idx]);
        }
        t.push(row);
    }
    t
}

pub fn nullcontrol(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let hc = heat_config(cfg)?;
    let sys = hc.system()?;
    let basis = PolyBasis::new(&sys.grid, hc.basis_degree)?;
    let targets = targets(cfg, &basis, sys.n())?;
    let mut out = Outcome::default();
    let pairs = design(cfg, &sys, &hc, &targets, &mut out)?;
    out.table("residuals.csv", residual_table(&pairs));
    let count = pairs.len();
    for (j, p) in pairs.into_iter().enumerate() {
        out.bundle(bundle_name(j, count), p);
    }
    Ok(out)
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let hc = heat_config(cfg)?;
    let sys = hc.system()?;
    let grid = sys.grid;
    let x0 = initial(cfg, &grid)?;
    let last = steps("t_end", cfg.t_end.unwrap_or(2.0 * hc.horizon), hc.dt)?;
    let u = input(cfg, &grid, hc.dt, last + 1)?;
    let tr = simulate_heat(&sys, &x0, &u)?;
    let every = stride(cfg, &hc);
    let header = ["t".to_string(), "norm".to_string()]
        .into_iter()
        .chain((0..sys.m()).map(|j| format!("u{j}")))
        .chain((0..sys.m()).map(|j| format!("y{j}")));
    let mut traj = Table::new(header);
    let mut out = Outcome::default();
    for k in (0..=last).filter(|k| k % every == 0 || *k == last) {
        let x = DVector::from_column_slice(tr.states.sample(k));
        let mut row = vec![tr.states.time(k), grid.norm(&x)];
        row.extend_from_slice(u.sample(k));
        row.extend_from_slice(tr.outputs.sample(k));
        traj.push(row);
        if k == 0 || k == last {
            out.table(format!("field_t{k}.csv"), field_table(&grid, &x, None));
        }
    }
    out.note(format!("{} samples of a {}x{} grid", last + 1, grid.nx, grid.ny));
    out.table("trajectory.csv", traj);
    Ok(out)
}

/// Simulates the plate, streams its records through the estimator, and compares
/// against the simulated field.
pub fn estimate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    run_estimate(cfg, false)
}

pub fn demo(cfg: &RunConfig) -> Result<Outcome, Failure> {
    run_estimate(cfg, true)
}

fn run_estimate(cfg: &RunConfig, with_residuals: bool) -> Result<Outcome, Failure> {
    let hc = heat_config(cfg)?;
    let sys = hc.system()?;
    let grid = sys.grid;
    let basis = PolyBasis::new(&grid, hc.basis_degree)?;
    let x0 = initial(cfg, &grid)?;
    let last = steps("t_end", cfg.t_end.unwrap_or(2.0 * hc.horizon), hc.dt)?;
    let u = input(cfg, &grid, hc.dt, last + 1)?;
    let loaded = load_pairs(cfg)?;
    if let Some(p) = &loaded {
        if p.len() != basis.len() {
            return Err(Failure::Validation(format!(
                "{} bundles for a degree-{} basis of {} vectors",
                p.len(),
                hc.basis_degree,
                basis.len()
            )));
        }
    }

    let mut out = Outcome::default();
    let pairs = match loaded {
        Some(p) => p,
        None => design(cfg, &sys, &hc, basis.vectors(), &mut out)?,
    };
    let horizon = pairs[0].horizon;
    let first = steps("horizon", horizon, hc.dt)?;
    if first > last {
        return Err(Failure::Validation(format!("t_end is shorter than the horizon {horizon}")));
    }
    let tolerances: Vec<f64> = pairs.iter().map(|p| 1e-3_f64.max(10.0 * p.relative_residual())).collect();
    if with_residuals {
        out.table("residuals.csv", residual_table(&pairs));
    }
    let tr = simulate_heat(&sys, &x0, &u)?;
    let mut est = Estimator::new(pairs, hc.dt)?.with_basis(basis.vectors().to_vec(), grid.state_weight())?;

    let n = basis.len();
    let header = std::iter::once("t".to_string())
        .chain((0..n).map(|j| format!("c{j}")))
        .chain((0..n).map(|j| format!("true{j}")));
    let mut coeffs = Table::new(header);
    let mut errors = Table::new(["t", "error", "floor", "norm"]);
    let every = stride(cfg, &hc);
    let (mut worst_coeff, mut worst_excess) = (0.0_f64, f64::NEG_INFINITY);
    for k in 0..=last {
        est.push(u.sample(k), tr.outputs.sample(k))?;
        if !(k % every == 0 || k == first || k == last) {
            continue;
        }
        let t = tr.states.time(k);
        let x = DVector::from_column_slice(tr.states.sample(k));
        let truth = basis.coefficients(&x);
        let field = if k >= first {
            let rec = est.reconstruct_state(t)?;
            for (j, (c, want)) in rec.coefficients.iter().zip(&truth).enumerate() {
                worst_coeff = worst_coeff.max((c - want).abs() / tolerances[j]);
            }
            coeffs.push(std::iter::once(t).chain(rec.coefficients.iter().copied()).chain(truth).collect());
            rec.state
        } else {
            DVector::zeros(x.len())
        };
        let error = grid.norm(&(&x - &field));
        let floor = grid.norm(&(&x - basis.project(&x)));
        let norm = grid.norm(&x);
        if k >= first {
            worst_excess = worst_excess.max((error - floor) / norm.max(f64::MIN_POSITIVE));
        }
        errors.push(vec![t, error, floor, norm]);
        if k == first || k == last {
            out.table(format!("field_t{k}.csv"), field_table(&grid, &field, Some(&x)));
        }
    }
    out.note(format!(
        "coefficient error / tolerance <= {worst_coeff:.3}; (error - floor)/|x| <= {worst_excess:e}"
    ));
    if worst_coeff > 1.0 {
        out.fail(format!("coefficient error exceeds its tolerance by a factor {worst_coeff:.3}"));
    }
    if worst_excess > 1e-3 {
        out.fail(format!("reconstruction error exceeds the truncation floor by {worst_excess:e}·|x|"));
    }
    out.table("coeffs.csv", coeffs);
    out.table("error_l2.csv", errors);
    Ok(out)
}
