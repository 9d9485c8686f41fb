//! Command-line front end for `abelian-mops`: parameter parsing, verification
//! suites and report rendering.

pub mod args;
pub mod cplx;
pub mod report;
pub mod suites;

use std::collections::BTreeMap;

pub use args::{RunConfig, Task};
pub use report::{Emit, Report};
pub use suites::{execute, Failure};

/// Exit codes.
pub const EXIT_OK: u8 = 0;
pub const EXIT_NUMERIC: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;

/// Runs a task, applies tolerance overrides and renders the report.
///
/// Returns the exit code, the rendered report (if any) and diagnostics.
pub fn run(task: &Task, emit: Emit, overrides: &BTreeMap<String, f64>) -> (u8, Option<String>, Vec<String>) {
    let mut report = match execute(task) {
        Ok(r) => r,
        Err(Failure::Config(msg)) => return (EXIT_CONFIG, None, vec![format!("error: {msg}")]),
        Err(Failure::Numeric(msg)) => return (EXIT_NUMERIC, None, vec![format!("numerical failure: {msg}")]),
    };
    if let Err(msg) = report.apply_overrides(overrides) {
        return (EXIT_CONFIG, None, vec![format!("error: {msg}")]);
    }
    let out = report.render(emit);
    let failed: Vec<String> = report
        .failures()
        .map(|c| format!("check failed: {} = {:e} (tolerance {:e})", c.name, c.value, c.tolerance))
        .collect();
    let code = if failed.is_empty() { EXIT_OK } else { EXIT_NUMERIC };
    (code, Some(out), failed)
}
