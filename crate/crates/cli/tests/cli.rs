use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use modfun_core::io::read_pair_bundle;
use modfun_core::wave::{wave_null_control, WaveConfig};
use modfun_core::SampledSignal;
use tempfile::TempDir;

fn modfun(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_modfun"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// Rows of a numeric CSV (header dropped).
fn rows(path: &Path) -> Vec<Vec<f64>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

const SCALAR: &str = r#"{"A": [[0.0]], "B": [[1.0]], "C": [[1.0]], "D": [[0.0]]}"#;

const OSCILLATOR: &str = r#"{
  "A": [[0.0, 1.0], [-2.0, -0.3]],
  "B": [[0.0], [1.0]],
  "C": [[1.0, 0.0]],
  "D": [[0.0]]
}"#;

#[test]
fn scalar_integrator_null_control_is_constant() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "sys.json", SCALAR);
    let cfg = write(
        dir.path(),
        "run.toml",
        "kind = \"lti\"\nsystem = \"sys.json\"\ntarget = [1.0]\nhorizon = 1.0\ndt = 0.01\n",
    );
    let out = dir.path().join("out");
    let o = modfun(&["nullcontrol"], Some(&cfg), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pair = read_pair_bundle(&out.join("pair_00")).unwrap();
    let eta = pair.eta.density().unwrap();
    assert_eq!(eta.len(), 101);
    for v in eta.values() {
        assert!((v + 1.0).abs() < 1e-10, "η = {v}");
    }
    // μ = Bᵀφ with φ(t) = 1 − t
    let mu = pair.mu.density().unwrap();
    for k in 0..mu.len() {
        assert!((mu.sample(k)[0] - (1.0 - mu.time(k))).abs() < 1e-10);
    }
    assert_eq!(rows(&out.join("residuals.csv")).len(), 1);
}

/// Same bump as the CLI: `A·exp(1 − 1/(1 − s²))`.
fn bump(center: f64, width: f64, t: f64) -> f64 {
    let s = (t - center) / width;
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}

#[test]
fn wave_bundle_matches_the_library_and_reports_the_residual() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "wave.toml",
        "kind = \"wave\"\nnx = 100\nxi0 = 0.3\nalpha = { center = 0.15, width = 0.1 }\n",
    );
    let out = dir.path().join("out");
    let o = modfun(&["nullcontrol"], Some(&cfg), &out);
    // The delayed-α control leaves the adjoint with norm ‖α‖, far above the tolerance.
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    let pair = read_pair_bundle(&out.join("pair_00")).unwrap();
    assert!(pair.degraded);

    let wc = WaveConfig {
        length: 1.0,
        xi0: 0.3,
        nx: 100,
    };
    let dx = wc.dx();
    let alpha = SampledSignal::from_fn(0.0, dx, 1, 31, |t, o| o[0] = bump(0.15, 0.1, t)).unwrap();
    let lib = wave_null_control(&wc, &alpha, 2.0).unwrap();
    let (eta, want) = (pair.eta.density().unwrap(), lib.eta.density().unwrap());
    assert_eq!(eta.len(), want.len());
    for (a, b) in eta.values().iter().zip(want.values()) {
        assert!((a - b).abs() < 1e-12);
    }
    // η(t) = −α(t − ξ0)
    for k in 0..eta.len() {
        let t = eta.time(k);
        assert!((eta.sample(k)[0] + bump(0.15, 0.1, t - 0.3)).abs() < 1e-9, "t = {t}");
    }
    assert!((pair.residual - lib.residual).abs() <= 1e-12 * lib.residual);
}

#[test]
fn heat_degree_two_gives_six_reported_bundles() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "heat.toml",
        "kind = \"heat\"\nnx = 11\nny = 11\nbasis_degree = 2\nhorizon_T = 0.5\ndt = 0.005\n",
    );
    let out = dir.path().join("out");
    let o = modfun(&["nullcontrol"], Some(&cfg), &out);
    let bundles: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().join("meta.json").exists())
        .collect();
    assert_eq!(bundles.len(), 6);
    let res = rows(&out.join("residuals.csv"));
    assert_eq!(res.len(), 6);
    let degraded = res.iter().any(|r| r[3] != 0.0);
    assert_eq!(code(&o), if degraded { 3 } else { 0 });
}

fn lti_estimate_config(dir: &Path, extra: &str) -> PathBuf {
    write(dir, "osc.json", OSCILLATOR);
    write(
        dir,
        "est.toml",
        &format!("kind = \"lti\"\nsystem = \"osc.json\"\nhorizon = 1.0\ndt = 0.002\nt_end = 2.0\nstride = 25\n{extra}"),
    )
}

#[test]
fn full_basis_estimate_matches_the_simulated_state() {
    let dir = TempDir::new().unwrap();
    let cfg = lti_estimate_config(dir.path(), "tolerance = 1e-5\n");
    let out = dir.path().join("out");
    let o = modfun(&["estimate"], Some(&cfg), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(header(&out.join("coeffs.csv")), "t,c0,c1");
    assert_eq!(header(&out.join("reconstruction.csv")), "t,x0,x1");
    let err = rows(&out.join("error_l2.csv"));
    assert_eq!(err.len(), 21);
    assert!((err[0][0] - 1.0).abs() < 1e-12);
    for r in &err {
        assert!(r[1] <= 1e-5 * (1.0 + r[2]), "{r:?}");
    }
}

#[test]
fn identical_seed_gives_identical_files() {
    let dir = TempDir::new().unwrap();
    let cfg = lti_estimate_config(dir.path(), "");
    let run = |seed: &str, name: &str| {
        let out = dir.path().join(name);
        let o = modfun(&["estimate", "--seed", seed], Some(&cfg), &out);
        assert_eq!(code(&o), 0);
        out
    };
    let (a, b, c) = (run("5", "a"), run("5", "b"), run("6", "c"));
    for f in ["coeffs.csv", "reconstruction.csv", "error_l2.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("coeffs.csv")).unwrap(), fs::read(c.join("coeffs.csv")).unwrap());
}

#[test]
fn zero_data_estimate_zero() {
    let dir = TempDir::new().unwrap();
    let cfg = lti_estimate_config(dir.path(), "x0 = [0.0, 0.0]\ninput = { kind = \"zero\" }\n");
    let out = dir.path().join("out");
    assert_eq!(code(&modfun(&["estimate"], Some(&cfg), &out)), 0);
    for f in ["coeffs.csv", "reconstruction.csv"] {
        for r in rows(&out.join(f)) {
            assert!(r[1..].iter().all(|v| *v == 0.0), "{f}: {r:?}");
        }
    }
}

#[test]
fn recorded_data_and_bundles_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = lti_estimate_config(dir.path(), "");
    let sim = dir.path().join("sim");
    assert_eq!(code(&modfun(&["simulate"], Some(&cfg), &sim)), 0);
    let pairs = dir.path().join("pairs");
    assert_eq!(code(&modfun(&["nullcontrol", "--dt", "0.002"], Some(&cfg), &pairs)), 0);

    // Split the simulated trajectory into recorded input/output/state files.
    let traj = rows(&sim.join("trajectory.csv"));
    assert_eq!(header(&sim.join("trajectory.csv")), "t,x0,x1,u,y");
    let column_file = |name: &str, cols: &[usize]| {
        let mut text = String::from("t");
        for j in 0..cols.len() {
            text.push_str(&format!(",v{j}"));
        }
        text.push('\n');
        for r in &traj {
            text.push_str(&r[0].to_string());
            for &c in cols {
                text.push_str(&format!(",{}", r[c]));
            }
            text.push('\n');
        }
        write(dir.path(), name, &text);
    };
    column_file("x.csv", &[1, 2]);
    column_file("u.csv", &[3]);
    column_file("y.csv", &[4]);
    let rec = write(
        dir.path(),
        "rec.json",
        r#"{"kind": "lti", "dt": 0.002, "pairs": ["pairs/pair_00", "pairs/pair_01"],
            "input": "u.csv", "output": "y.csv", "truth": "x.csv", "stride": 50, "tolerance": 1e-5}"#,
    );
    let out = dir.path().join("out");
    let o = modfun(&["estimate"], Some(&rec), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(rows(&out.join("error_l2.csv")).len(), 11);
}

#[test]
fn bundles_with_different_horizons_are_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = lti_estimate_config(dir.path(), "");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(code(&modfun(&["nullcontrol"], Some(&cfg), &a)), 0);
    let cfg2 = write(
        dir.path(),
        "other.toml",
        "kind = \"lti\"\nsystem = \"osc.json\"\nhorizon = 0.5\ndt = 0.002\ntarget_index = 1\n",
    );
    assert_eq!(code(&modfun(&["nullcontrol"], Some(&cfg2), &b)), 0);
    let mixed = write(
        dir.path(),
        "mixed.toml",
        "kind = \"lti\"\nsystem = \"osc.json\"\ndt = 0.002\npairs = [\"a/pair_00\", \"b/pair_00\"]\n",
    );
    let out = dir.path().join("out");
    let o = modfun(&["estimate"], Some(&mixed), &out);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("horizon mismatch"));
    assert!(!out.exists());
}

#[test]
fn invalid_config_exits_two_without_output() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let bad = write(dir.path(), "bad.toml", "kind = \"lti\"\nbogus = 1\n");
    assert_eq!(code(&modfun(&["nullcontrol"], Some(&bad), &out)), 2);
    let no_system = write(dir.path(), "nosys.toml", "kind = \"lti\"\n");
    assert_eq!(code(&modfun(&["nullcontrol"], Some(&no_system), &out)), 2);
    let cfl = write(dir.path(), "cfl.toml", "kind = \"wave\"\nnx = 100\ndt = 0.02\nt_end = 1.0\n");
    assert_eq!(code(&modfun(&["simulate"], Some(&cfl), &out)), 2);
    assert_eq!(code(&modfun(&["simulate", "--dt", "-1"], None, &out)), 2);
    assert!(!out.exists());
}

#[test]
fn unobservable_system_is_a_numerical_failure() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "blind.json",
        r#"{"A": [[-1.0, 0.0], [0.0, -2.0]], "B": [[1.0], [1.0]], "C": [[1.0, 0.0]], "D": [[0.0]]}"#,
    );
    let cfg = write(dir.path(), "run.toml", "kind = \"lti\"\nsystem = \"blind.json\"\ndt = 0.01\n");
    let out = dir.path().join("out");
    let o = modfun(&["nullcontrol"], Some(&cfg), &out);
    assert_eq!(code(&o), 3);
    assert!(!out.exists());
}

#[test]
fn lti_feedback_realizes_a_stabilizing_gain() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "osc.json", OSCILLATOR);
    let cfg = write(
        dir.path(),
        "fb.toml",
        "kind = \"lti\"\nsystem = \"osc.json\"\nhorizon = 1.0\ndt = 0.002\nt_end = 10.0\n\
         x0 = [1.0, 0.0]\nfeedback_gain = [[-3.0, -2.0]]\n",
    );
    let out = dir.path().join("out");
    let o = modfun(&["feedback"], Some(&cfg), &out);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let traj = rows(&out.join("trajectory.csv"));
    let norm = |r: &Vec<f64>| (r[1] * r[1] + r[2] * r[2]).sqrt();
    assert_eq!(traj.len(), 5001);
    assert!(norm(&traj[5000]) < 1e-3 * norm(&traj[0]));
}

#[test]
fn wave_feedback_energy() {
    let dir = TempDir::new().unwrap();
    let open = write(dir.path(), "k0.toml", "kind = \"wave\"\ngain_k = 0.0\nt_end = 10.0\n");
    let out = dir.path().join("k0");
    assert_eq!(code(&modfun(&["feedback"], Some(&open), &out)), 0);
    let e = rows(&out.join("energy.csv"));
    for r in &e {
        assert!((r[1] - e[0][1]).abs() <= 1e-8 * e[0][1]);
    }

    // The reflection-aware pair on a grid where ξ0 is exact absorbs the wave monotonically.
    let refl = write(
        dir.path(),
        "refl.toml",
        "kind = \"wave\"\nnx = 510\nxi0 = 0.3\ngain_k = 1.0\nt_end = 10.0\nwave_pair = \"reflection\"\n",
    );
    let out = dir.path().join("refl");
    assert_eq!(code(&modfun(&["feedback"], Some(&refl), &out)), 0);
    let e = rows(&out.join("energy.csv"));
    for w in e.windows(2) {
        assert!(w[1][1] <= w[0][1] + 1e-10 * e[0][1]);
    }
    assert!(e.last().unwrap()[1] < 1e-12 * e[0][1]);
}

#[test]
fn demo_wave_writes_energy_and_z() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("out");
    let o = modfun(&["demo-wave"], None, &out);
    assert_eq!(code(&o), 0);
    assert_eq!(header(&out.join("energy.csv")), "t,energy_k,energy_open");
    assert_eq!(header(&out.join("z.csv")), "t,z,p0,strain_xi0");
    let e = rows(&out.join("energy.csv"));
    let at4 = e.iter().find(|r| (r[0] - 4.0).abs() < 1e-9).unwrap();
    assert!(at4[1] <= 0.5 * e[0][1]);
    assert!(String::from_utf8_lossy(&o.stdout).contains("E(4l)/E(0)"));
}

#[test]
fn demo_heat_error_drops_after_the_horizon() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "heat.toml",
        "nx = 15\nny = 15\nbasis_degree = 2\nhorizon_T = 1.0\ndt = 0.004\n",
    );
    let out = dir.path().join("out");
    let o = modfun(&["demo-heat"], Some(&cfg), &out);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    let err = rows(&out.join("error_l2.csv"));
    for r in &err {
        if r[0] < 1.0 - 1e-9 {
            assert!((r[1] - r[3]).abs() <= 1e-12 * r[3], "before T the estimate is zero");
        } else {
            assert!(r[1] <= r[2] + 1e-3 * r[3], "{r:?}");
            assert!(r[1] < 0.5 * r[3]);
        }
    }
    assert_eq!(rows(&out.join("residuals.csv")).len(), 6);
    assert!(out.join("field_t250.csv").exists() && out.join("field_t500.csv").exists());
    assert_eq!(header(&out.join("field_t250.csv")), "x,y,value,truth");
    assert_eq!(rows(&out.join("field_t500.csv")).len(), 225);
}

#[test]
fn heat_simulation_snapshots() {
    let dir = TempDir::new().unwrap();
    let cfg = write(
        dir.path(),
        "heat.toml",
        "kind = \"heat\"\nnx = 9\nny = 7\nt_end = 0.1\ndt = 0.01\ninit = { kind = \"gaussian\", width = 0.3 }\n",
    );
    let out = dir.path().join("out");
    assert_eq!(code(&modfun(&["simulate"], Some(&cfg), &out)), 0);
    assert_eq!(rows(&out.join("field_t0.csv")).len(), 63);
    assert_eq!(rows(&out.join("field_t10.csv")).len(), 63);
    let traj = rows(&out.join("trajectory.csv"));
    assert_eq!(traj[0].len(), 2 + 2 * 7);
}
