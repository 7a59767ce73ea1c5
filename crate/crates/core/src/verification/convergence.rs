//! Convergence tables with experimental orders of convergence.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::{solve_case, CaseRun, ErrorReport, ManufacturedCase};
use crate::error::{CutFemError, Result};
use crate::forms::StabilizationConfig;

/// `log(e₁/e₂) / log(h₁/h₂)`.
pub fn eoc(e1: f64, e2: f64, h1: f64, h2: f64) -> f64 {
    (e1 / e2).ln() / (h1 / h2).ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub unknowns: usize,
    pub residual: f64,
    pub errors: Option<ErrorReport>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// EOCs between row `i - 1` and row `i`, when both solved.
    pub fn eoc(&self, i: usize) -> Option<[f64; 6]> {
        if i == 0 || i >= self.rows.len() {
            return None;
        }
        let (a, b) = (self.rows[i - 1].errors?, self.rows[i].errors?);
        let (ea, eb) = (a.values(), b.values());
        Some(std::array::from_fn(|k| eoc(ea[k], eb[k], a.h, b.h)))
    }

    /// EOCs over the last refinement step.
    pub fn last_eoc(&self) -> Option<[f64; 6]> {
        self.eoc(self.rows.len().saturating_sub(1))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("N,h");
        for c in ErrorReport::COLUMNS {
            out.push_str(&format!(",{c}"));
        }
        for c in ErrorReport::COLUMNS {
            out.push_str(&format!(",eoc_{c}"));
        }
        out.push_str(",status\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&format!("{},{:.6e}", row.n, row.h));
            match &row.errors {
                Some(e) => e.values().iter().for_each(|v| out.push_str(&format!(",{v:.6e}"))),
                None => out.push_str(&",".repeat(6)),
            }
            match self.eoc(i) {
                Some(r) => r.iter().for_each(|v| out.push_str(&format!(",{v:.6e}"))),
                None => out.push_str(&",".repeat(6)),
            }
            let status = row
                .failure
                .as_deref()
                .map(|f| f.replace([',', '\n', '\r'], ";"))
                .unwrap_or_else(|| "ok".into());
            out.push_str(&format!(",{status}\n"));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// One solve per `N` (run in parallel); failures are recorded in their row.
pub fn run_convergence(
    case: &ManufacturedCase,
    order: usize,
    ns: &[usize],
    subdivision: usize,
    stab: &StabilizationConfig,
) -> Result<ConvergenceTable> {
    run_convergence_with(case, order, ns, subdivision, stab, |_| Ok(()))
}

/// As [`run_convergence`], passing every successful run to `inspect`; an
/// error from `inspect` is recorded as the failure of that row.
pub fn run_convergence_with(
    case: &ManufacturedCase,
    order: usize,
    ns: &[usize],
    subdivision: usize,
    stab: &StabilizationConfig,
    inspect: impl Fn(&CaseRun) -> Result<()> + Sync,
) -> Result<ConvergenceTable> {
    if ns.is_empty() || ns.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CutFemError::InvalidInput(format!("mesh sizes must be increasing, got {ns:?}")));
    }
    let rows = ns
        .par_iter()
        .map(|&n| match solve_case(case, n, order, subdivision, stab).and_then(|run| inspect(&run).map(|_| run)) {
            Ok(run) => ConvergenceRow {
                n,
                h: run.disc.h(),
                unknowns: run.disc.n_unknowns(),
                residual: run.solution.residual,
                errors: Some(run.errors),
                failure: None,
            },
            Err(e) => ConvergenceRow {
                n,
                h: 1.0 / n as f64,
                unknowns: 0,
                residual: f64::NAN,
                errors: None,
                failure: Some(e.to_string()),
            },
        })
        .collect();
    Ok(ConvergenceTable { rows })
}
