//! File formats: sampled signals as CSV, impulsive signals and systems as JSON,
//! modulating pairs as bundle directories. All writes are atomic.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lti::{matrix_from_rows, LtiSystem};
use crate::pair::{ModulatingPair, Target};
use crate::signal::{Impulse, ImpulsiveSignal, SampledSignal};

/// Writes `contents` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(&dir, e))?;
    tmp.write_all(contents).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// `t,v0,v1,…` header and one row per sample.
pub fn signal_to_csv(s: &SampledSignal) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain((0..s.dim()).map(|c| format!("v{c}")))
        .collect();
    w.write_record(&header).expect("writing to memory");
    for (k, sample) in s.samples().enumerate() {
        let row: Vec<String> = std::iter::once(s.time(k).to_string())
            .chain(sample.iter().map(f64::to_string))
            .collect();
        w.write_record(&row).expect("writing to memory");
    }
    String::from_utf8(w.into_inner().expect("writing to memory")).expect("ascii output")
}

/// Parses a uniformly sampled CSV; at least two rows are needed to fix the step.
pub fn signal_from_csv(text: &str) -> Result<SampledSignal> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(|e| Error::Parse(e.to_string()))?.clone();
    if header.get(0) != Some("t") || header.len() < 2 {
        let got: Vec<&str> = header.iter().collect();
        return Err(Error::Parse(format!("expected header `t,v0,…`, got `{}`", got.join(","))));
    }
    let dim = header.len() - 1;
    let mut times = Vec::new();
    let mut data = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("row {}: {e}", row + 1)))?;
        let parse = |f: &str| {
            f.parse::<f64>()
                .map_err(|e| Error::Parse(format!("row {}: `{f}`: {e}", row + 1)))
        };
        times.push(parse(&record[0])?);
        for f in record.iter().skip(1) {
            data.push(parse(f)?);
        }
    }
    if times.len() < 2 {
        return Err(Error::Parse("a sampled signal needs at least two rows".into()));
    }
    let t0 = times[0];
    let dt = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
    for (k, t) in times.iter().enumerate() {
        if (t - (t0 + k as f64 * dt)).abs() > 1e-6 * dt {
            return Err(Error::Parse(format!("non-uniform sampling at row {}", k + 1)));
        }
    }
    SampledSignal::new(t0, dt, dim, data)
}

pub fn read_signal(path: &Path) -> Result<SampledSignal> {
    signal_from_csv(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn write_signal(path: &Path, s: &SampledSignal) -> Result<()> {
    write_atomic(path, signal_to_csv(s).as_bytes())
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    }
}

#[derive(Serialize, Deserialize)]
struct ImpulseEntry {
    t: f64,
    w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ImpulsiveFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    impulses: Vec<ImpulseEntry>,
    density: Option<String>,
}

/// Reads the JSON form; a density path is taken relative to the file.
pub fn read_impulsive(path: &Path) -> Result<ImpulsiveSignal> {
    let file: ImpulsiveFile = serde_json::from_str(&read_text(path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    let density = match &file.density {
        Some(rel) => {
            let base = path.parent().unwrap_or_else(|| Path::new("."));
            Some(read_signal(&base.join(rel))?)
        }
        None => None,
    };
    let dim = file
        .dim
        .or_else(|| file.impulses.first().map(|i| i.w.len()))
        .or_else(|| density.as_ref().map(SampledSignal::dim))
        .ok_or_else(|| Error::Parse(format!("{}: cannot infer the signal dimension", path.display())))?;
    let impulses = file
        .impulses
        .into_iter()
        .map(|i| Impulse {
            time: i.t,
            weight: i.w,
        })
        .collect();
    ImpulsiveSignal::new(dim, impulses, density)
}

/// Writes the JSON form; a density goes to `<stem>_density.csv` beside it.
pub fn write_impulsive(path: &Path, s: &ImpulsiveSignal) -> Result<()> {
    let density = match s.density() {
        Some(d) => {
            let stem = path
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| Error::InvalidParameter(format!("bad file name {}", path.display())))?;
            let name = format!("{stem}_density.csv");
            write_signal(&path.with_file_name(&name), d)?;
            Some(name)
        }
        None => None,
    };
    let file = ImpulsiveFile {
        dim: Some(s.dim()),
        impulses: s
            .impulses()
            .iter()
            .map(|i| ImpulseEntry {
                t: i.time,
                w: i.weight.clone(),
            })
            .collect(),
        density,
    };
    write_json(path, &file)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

#[derive(Serialize, Deserialize)]
#[allow(non_snake_case)]
struct LtiFile {
    A: Vec<Vec<f64>>,
    B: Vec<Vec<f64>>,
    C: Vec<Vec<f64>>,
    D: Vec<Vec<f64>>,
}

fn rows_of(m: &nalgebra::DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn lti_from_json(text: &str) -> Result<LtiSystem> {
    let f: LtiFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    LtiSystem::new(
        matrix_from_rows(&f.A)?,
        matrix_from_rows(&f.B)?,
        matrix_from_rows(&f.C)?,
        matrix_from_rows(&f.D)?,
    )
}

pub fn read_lti(path: &Path) -> Result<LtiSystem> {
    lti_from_json(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn write_lti(path: &Path, sys: &LtiSystem) -> Result<()> {
    let f = LtiFile {
        A: rows_of(sys.a()),
        B: rows_of(sys.b()),
        C: rows_of(sys.c()),
        D: rows_of(sys.d()),
    };
    write_json(path, &f)
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum TargetEntry {
    Vector(Vec<f64>),
    Functional(String),
}

#[derive(Serialize, Deserialize)]
struct PairMeta {
    horizon: f64,
    target: TargetEntry,
    residual: f64,
    #[serde(default)]
    degraded: bool,
}

/// Writes `eta.json`, `mu.json` and `meta.json` (plus density CSVs) into `dir`.
pub fn write_pair_bundle(dir: &Path, pair: &ModulatingPair) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_impulsive(&dir.join("eta.json"), &pair.eta)?;
    write_impulsive(&dir.join("mu.json"), &pair.mu)?;
    let meta = PairMeta {
        horizon: pair.horizon,
        target: match &pair.target {
            Target::Vector(v) => TargetEntry::Vector(v.clone()),
            Target::Functional(s) => TargetEntry::Functional(s.clone()),
        },
        residual: pair.residual,
        degraded: pair.degraded,
    };
    write_json(&dir.join("meta.json"), &meta)
}

pub fn read_pair_bundle(dir: &Path) -> Result<ModulatingPair> {
    let meta_path = dir.join("meta.json");
    let meta: PairMeta = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| Error::Parse(format!("{}: {e}", meta_path.display())))?;
    let target = match meta.target {
        TargetEntry::Vector(v) => Target::Vector(v),
        TargetEntry::Functional(s) => Target::Functional(s),
    };
    let mut pair = ModulatingPair::new(
        read_impulsive(&dir.join("eta.json"))?,
        read_impulsive(&dir.join("mu.json"))?,
        meta.horizon,
        target,
        meta.residual,
    )?;
    pair.degraded = meta.degraded;
    Ok(pair)
}
