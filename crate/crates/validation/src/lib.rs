//! Reporting helpers for the acceptance run: every criterion produces one
//! line, and the run fails if any criterion does.

use std::fmt;
use std::time::{Duration, Instant};

/// Outcome of one criterion, including its wall-clock budget.
#[derive(Clone, Debug)]
pub struct Check {
    pub id: u32,
    pub name: &'static str,
    pub measured_ok: bool,
    pub detail: String,
    pub elapsed: Duration,
    pub limit: Duration,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured_ok && self.elapsed <= self.limit
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{tag}] {}. {}: {} ({:.2} s, budget {} s)",
            self.id,
            self.name,
            self.detail,
            self.elapsed.as_secs_f64(),
            self.limit.as_secs()
        )
    }
}

/// Runs `body`, which returns whether the measurement met its tolerance and a
/// one-line description of what was measured.
pub fn run(id: u32, name: &'static str, limit_secs: u64, body: impl FnOnce() -> (bool, String)) -> Check {
    let start = Instant::now();
    let (measured_ok, detail) = body();
    let check = Check {
        id,
        name,
        measured_ok,
        detail,
        elapsed: start.elapsed(),
        limit: Duration::from_secs(limit_secs),
    };
    println!("{check}");
    check
}

/// Prints the tally and returns the process exit code.
pub fn summarize(checks: &[Check]) -> i32 {
    let failed: Vec<u32> = checks.iter().filter(|c| !c.passed()).map(|c| c.id).collect();
    println!(
        "acceptance: {} of {} criteria passed{}",
        checks.len() - failed.len(),
        checks.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!("; failed: {failed:?}")
        }
    );
    i32::from(!failed.is_empty())
}
