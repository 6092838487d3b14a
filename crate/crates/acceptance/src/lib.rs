//! Reporting helpers for the acceptance run in `tests/acceptance.rs`.

use std::process::ExitCode;
use std::time::Instant;

/// Collects one pass/fail line per criterion.
#[derive(Debug, Default)]
pub struct Report {
    results: Vec<(u32, bool)>,
}

impl Report {
    pub fn new() -> Self {
        Report::default()
    }

    /// Runs `check`, which returns whether it passed and a one-line detail,
    /// and prints the outcome with its wall time.
    pub fn run(&mut self, id: u32, name: &str, check: impl FnOnce() -> (bool, String)) {
        let start = Instant::now();
        let (passed, detail) = check();
        let secs = start.elapsed().as_secs_f64();
        let status = if passed { "PASS" } else { "FAIL" };
        println!("acceptance {id:>2} {status} {name}: {detail} [{secs:.2}s]");
        self.results.push((id, passed));
    }

    pub fn failed(&self) -> Vec<u32> {
        self.results.iter().filter(|(_, ok)| !ok).map(|(id, _)| *id).collect()
    }

    pub fn finish(self) -> ExitCode {
        let failed = self.failed();
        println!(
            "acceptance summary: {} passed, {} failed {:?}",
            self.results.len() - failed.len(),
            failed.len(),
            failed
        );
        if failed.is_empty() {
            ExitCode::SUCCESS
        } else {
            ExitCode::FAILURE
        }
    }
}
