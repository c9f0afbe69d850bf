use std::fs;

use modfun_core::wave::{
    boundary_velocity_pair, delay_pair, run_wave_feedback, simulate_wave, wave_null_control, StringState,
    WaveConfig, WaveRun,
};
use modfun_core::{estimate_series, ModulatingPair, SampledSignal, Target};

use super::{bump, input_signal, load_pairs, rng, steps};
use crate::config::{positive, GenKind, Generated, InitKind, RunConfig, TargetSpec, WavePair};
use crate::output::{Outcome, Table};
use crate::Failure;

fn wave_config(cfg: &RunConfig) -> Result<WaveConfig, Failure> {
    let wc = WaveConfig {
        length: cfg.length.unwrap_or(1.0),
        xi0: cfg.xi0.unwrap_or(0.3),
        nx: cfg.nx.unwrap_or(512),
    };
    wc.validate()?;
    Ok(wc)
}

/// Defaults to `dt = dx`, where the scheme follows the characteristics exactly.
fn time_step(cfg: &RunConfig, wc: &WaveConfig) -> Result<f64, Failure> {
    positive("dt", cfg.dt.unwrap_or(wc.dx()))
}

fn initial(cfg: &RunConfig, wc: &WaveConfig) -> Result<StringState, Failure> {
    let Some(init) = &cfg.init else {
        return Ok(StringState::gaussian(wc, 0.5 * wc.length, 0.05 * wc.length)?);
    };
    let center = init.center.unwrap_or(0.5 * wc.length);
    match init.kind {
        InitKind::Gaussian => Ok(StringState::gaussian(wc, center, init.width.unwrap_or(0.05 * wc.length))?),
        InitKind::Pulse => Ok(StringState::pulse(wc, center, init.width.unwrap_or(0.1 * wc.length))?),
        InitKind::File => {
            let path = init
                .path
                .as_ref()
                .ok_or_else(|| Failure::Validation("init kind = \"file\" needs `path`".into()))?;
            let (q, p) = read_profiles(&cfg.resolve(path))?;
            Ok(StringState::from_profiles(wc, q, p)?)
        }
        InitKind::Modes => Err(Failure::Validation("init kind = \"modes\" applies to kind = \"heat\"".into())),
    }
}

/// CSV with `q` and `p` columns, one row per node.
fn read_profiles(path: &std::path::Path) -> Result<(Vec<f64>, Vec<f64>), Failure> {
    let bad = |m: String| Failure::Validation(format!("{}: {m}", path.display()));
    let text = fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| bad(format!("missing column `{name}`")))
    };
    let (iq, ip) = (col("q")?, col("p")?);
    let (mut q, mut p) = (Vec::new(), Vec::new());
    for rec in r.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(format!("`{}`: {e}", &rec[i])));
        q.push(num(iq)?);
        p.push(num(ip)?);
    }
    Ok((q, p))
}

/// The delay pair `(−δ_{ξ0}, δ)` or the reflection-aware impulse train.
fn pair(cfg: &RunConfig, wc: &WaveConfig) -> Result<ModulatingPair, Failure> {
    if let Some(mut pairs) = load_pairs(cfg)? {
        if pairs.len() != 1 {
            return Err(Failure::Validation("the string takes exactly one pair".into()));
        }
        return Ok(pairs.remove(0));
    }
    let choice = match &cfg.target {
        None => cfg.wave_pair.unwrap_or_default(),
        Some(TargetSpec::Name(s)) if s == "functional" => cfg.wave_pair.unwrap_or_default(),
        Some(TargetSpec::Name(s)) if s == "reflection" => WavePair::Reflection,
        Some(_) => {
            return Err(Failure::Validation(
                "wave targets are \"functional\" or \"reflection\"".into(),
            ))
        }
    };
    let xi0 = wc.xi0_on_grid();
    Ok(match choice {
        WavePair::Delay => delay_pair(xi0)?,
        WavePair::Reflection => boundary_velocity_pair(wc.length, xi0)?,
    })
}

pub fn nullcontrol(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let wc = wave_config(cfg)?;
    let mut out = Outcome::default();
    let Some(alpha_spec) = &cfg.alpha else {
        let p = pair(cfg, &wc)?;
        out.note(format!(
            "impulsive pair: {} output impulse(s), {} input impulse(s), horizon {}",
            p.eta.impulses().len(),
            p.mu.impulses().len(),
            p.horizon
        ));
        out.bundle("pair_00", p);
        return Ok(out);
    };
    let dx = wc.dx();
    let xi0 = wc.xi0_on_grid();
    let tol = positive("tolerance", cfg.tolerance.unwrap_or(5.0 * dx))?;
    let t_end = positive("t_end", cfg.t_end.unwrap_or(2.0 * wc.length))?;
    let alpha = SampledSignal::from_fn(0.0, dx, 1, wc.xi0_index() + 1, |t, o| o[0] = bump(alpha_spec, t))?;
    let nc = wave_null_control(&wc, &alpha, t_end)?;
    let mut p = ModulatingPair::new(
        nc.eta.clone(),
        nc.mu.clone(),
        2.0 * xi0,
        Target::Functional("(alpha * p(.,0))(t)".into()),
        nc.residual,
    )?;
    if nc.residual > tol {
        p.degraded = true;
        out.fail(format!("adjoint norm {:e} left after the control (> {tol:e})", nc.residual));
    }
    out.note(format!("residual {:e}, |alpha|_L2 = {:e}", nc.residual, alpha.l2_norm()));
    out.table("norm.csv", Table::from_signals(&[("norm", &nc.norm)]));
    out.table("mu_simulated.csv", Table::from_signals(&[("mu", &nc.simulated_mu)]));
    out.bundle("pair_00", p);
    Ok(out)
}

fn zero_input() -> Generated {
    Generated {
        kind: GenKind::Zero,
        amplitude: 1.0,
        frequency: 1.0,
    }
}

fn run_tables(run: &WaveRun, out: &mut Outcome) {
    out.table(
        "trajectory.csv",
        Table::from_signals(&[
            ("u", &run.inputs),
            ("y", &run.outputs),
            ("p0", &run.boundary_velocity),
        ]),
    );
    out.table("energy.csv", Table::from_signals(&[("energy", &run.energy)]));
}

pub fn simulate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let wc = wave_config(cfg)?;
    let dt = time_step(cfg, &wc)?;
    let s0 = initial(cfg, &wc)?;
    let len = steps("t_end", cfg.t_end.unwrap_or(2.0), dt)? + 1;
    let u = input_signal(cfg, &zero_input(), 1, dt, len, &mut rng(cfg))?;
    let run = simulate_wave(&s0, &u)?;
    let mut out = Outcome::default();
    out.note(format!(
        "E(0) = {:e}, E(end) = {:e}",
        run.energy.sample(0)[0],
        run.energy.sample(len - 1)[0]
    ));
    run_tables(&run, &mut out);
    Ok(out)
}

pub fn estimate(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let wc = wave_config(cfg)?;
    let dt = time_step(cfg, &wc)?;
    let s0 = initial(cfg, &wc)?;
    let p = pair(cfg, &wc)?;
    let len = steps("t_end", cfg.t_end.unwrap_or(5.0), dt)? + 1;
    let u = input_signal(cfg, &zero_input(), 1, dt, len, &mut rng(cfg))?;
    let run = simulate_wave(&s0, &u)?;
    let z = estimate_series(&p, &run.inputs, &run.outputs)?;
    let lag = run.inputs.index_of(z.t0()).expect("estimates start on the record grid");
    let mut coeffs = Table::new(["t", "z"]);
    let mut errors = Table::new(["t", "error", "p0"]);
    let mut worst: f64 = 0.0;
    for k in 0..z.len() {
        let (t, v) = (z.time(k), z.sample(k)[0]);
        let truth = run.boundary_velocity.sample(k + lag)[0];
        worst = worst.max((v - truth).abs());
        coeffs.push(vec![t, v]);
        errors.push(vec![t, (v - truth).abs(), truth]);
    }
    let mut out = Outcome::default();
    out.note(format!("sup |z - p(t,0)| = {worst:e} (dx = {:e})", wc.dx()));
    out.table("coeffs.csv", coeffs);
    out.table("error_l2.csv", errors);
    Ok(out)
}

/// Largest single-step energy increase relative to `E(0)`.
fn max_rise(energy: &SampledSignal) -> f64 {
    let e0 = energy.sample(0)[0];
    (1..energy.len())
        .map(|k| (energy.sample(k)[0] - energy.sample(k - 1)[0]) / e0)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn energy_at(energy: &SampledSignal, t: f64) -> Option<f64> {
    energy.index_of(t).map(|k| energy.sample(k)[0])
}

pub fn feedback(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let wc = wave_config(cfg)?;
    let dt = time_step(cfg, &wc)?;
    let s0 = initial(cfg, &wc)?;
    let p = pair(cfg, &wc)?;
    let k = cfg.gain_k.unwrap_or(1.0);
    let t_end = positive("t_end", cfg.t_end.unwrap_or(10.0))?;
    steps("t_end", t_end, dt)?;
    let run = run_wave_feedback(&s0, p, k, t_end, dt)?;
    let mut out = Outcome::default();
    let e0 = run.energy.sample(0)[0];
    out.note(format!(
        "k = {k}: E(end)/E(0) = {:e}, largest step rise {:e}·E(0)",
        run.energy.sample(run.energy.len() - 1)[0] / e0,
        max_rise(&run.energy)
    ));
    run_tables(&run, &mut out);
    Ok(out)
}

pub fn demo(cfg: &RunConfig) -> Result<Outcome, Failure> {
    let wc = wave_config(cfg)?;
    let dt = time_step(cfg, &wc)?;
    let s0 = initial(cfg, &wc)?;
    let p = pair(cfg, &wc)?;
    let k = cfg.gain_k.unwrap_or(1.0);
    let t_end = positive("t_end", cfg.t_end.unwrap_or(10.0))?;
    steps("t_end", t_end, dt)?;
    let xi0 = wc.xi0_on_grid();
    let damped = run_wave_feedback(&s0, p.clone(), k, t_end, dt)?;
    let open = run_wave_feedback(&s0, p, 0.0, t_end, dt)?;

    let mut out = Outcome::default();
    let e0 = damped.energy.sample(0)[0];
    if let Some(e4) = energy_at(&damped.energy, 4.0 * wc.length) {
        out.note(format!("k = {k}: E(4l)/E(0) = {:.6}", e4 / e0));
    }
    out.note(format!("k = {k}: largest step rise {:e}·E(0)", max_rise(&damped.energy)));
    let drift = (0..open.energy.len())
        .map(|j| (open.energy.sample(j)[0] - e0).abs() / e0)
        .fold(0.0, f64::max);
    out.note(format!("k = 0: max |E(t) - E(0)|/E(0) = {drift:e}"));
    let z_err = damped.z_identity_error(xi0, 5.0_f64.min(t_end))?;
    out.note(format!("sup |z - p(t,0)| on [xi0, 5] = {z_err:e} (dx = {:e})", wc.dx()));

    let z = damped.z_signal(xi0)?;
    let lag = damped.inputs.index_of(z.t0()).expect("z starts on the grid");
    let mut zt = Table::new(["t", "z", "p0", "strain_xi0"]);
    for j in 0..z.len() {
        zt.push(vec![
            z.time(j),
            z.sample(j)[0],
            damped.boundary_velocity.sample(j + lag)[0],
            damped.measured_strain.sample(j + lag)[0],
        ]);
    }
    out.table(
        "trajectory.csv",
        Table::from_signals(&[
            ("u", &damped.inputs),
            ("y", &damped.outputs),
            ("p0", &damped.boundary_velocity),
        ]),
    );
    out.table(
        "energy.csv",
        Table::from_signals(&[("energy_k", &damped.energy), ("energy_open", &open.energy)]),
    );
    out.table("z.csv", zt);
    Ok(out)
}
