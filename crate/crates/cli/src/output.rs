use std::fs;
use std::path::Path;

use modfun_core::io::{write_atomic, write_pair_bundle};
use modfun_core::{ModulatingPair, SampledSignal};

use crate::Failure;

/// Numeric CSV held in memory until the run has finished.
#[derive(Clone, Debug)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// `t` followed by `<prefix>0, <prefix>1, …` for each listed signal
    /// (just `<prefix>` for a scalar one).
    pub fn from_signals(signals: &[(&str, &SampledSignal)]) -> Self {
        let mut header = vec!["t".to_string()];
        for (prefix, s) in signals {
            if s.dim() == 1 {
                header.push(prefix.to_string());
            } else {
                header.extend((0..s.dim()).map(|c| format!("{prefix}{c}")));
            }
        }
        let mut table = Self::new(header);
        let len = signals.iter().map(|(_, s)| s.len()).min().unwrap_or(0);
        for k in 0..len {
            let mut row = vec![signals[0].1.time(k)];
            for (_, s) in signals {
                row.extend_from_slice(s.sample(k));
            }
            table.push(row);
        }
        table
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for row in &self.rows {
            w.write_record(row.iter().map(f64::to_string)).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }
}

/// Everything a command produces; nothing touches the disk until [`Outcome::write`].
#[derive(Default)]
pub struct Outcome {
    tables: Vec<(String, Table)>,
    bundles: Vec<(String, ModulatingPair)>,
    pub summary: Vec<String>,
    /// Residual or conditioning failures; the outputs are still written.
    pub failures: Vec<String>,
}

impl Outcome {
    pub fn table(&mut self, name: impl Into<String>, table: Table) {
        self.tables.push((name.into(), table));
    }

    pub fn bundle(&mut self, name: impl Into<String>, pair: ModulatingPair) {
        self.bundles.push((name.into(), pair));
    }

    pub fn note(&mut self, line: impl Into<String>) {
        self.summary.push(line.into());
    }

    pub fn fail(&mut self, line: impl Into<String>) {
        self.failures.push(line.into());
    }

    pub fn write(&self, out: &Path) -> Result<(), Failure> {
        fs::create_dir_all(out).map_err(|e| Failure::Validation(format!("{}: {e}", out.display())))?;
        for (name, table) in &self.tables {
            write_atomic(&out.join(name), &table.to_bytes())?;
        }
        for (name, pair) in &self.bundles {
            write_pair_bundle(&out.join(name), pair)?;
        }
        Ok(())
    }
}

/// `pair_00`, `pair_01`, … so that directory listings sort numerically.
pub fn bundle_name(j: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len().max(2);
    format!("pair_{j:0width$}")
}
