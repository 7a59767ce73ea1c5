//! Robustness of errors, conditioning and stability constants under shifts of the boundary.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use super::norms::{coercivity_ratios, energy_error, norm_extension_ratio, random_fields};
use super::{solve_case, ErrorReport, ManufacturedCase};
use crate::error::Result;
use crate::forms::StabilizationConfig;
use crate::solver::estimate_condition;

/// Centre shifts along `x` of `{0, h/3, h/7, 10⁻⁴h, 10⁻⁸h}`.
pub fn default_offsets(h: f64) -> Vec<f64> {
    vec![0.0, h / 3.0, h / 7.0, 1e-4 * h, 1e-8 * h]
}

const PROBE_FIELDS: usize = 100;
const PROBE_SEED: u64 = 2024;

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub offset: f64,
    pub errors: ErrorReport,
    /// `|||u − u_h|||_h`.
    pub energy_error: f64,
    pub condition: f64,
    /// Smallest `(A_h+S_h+G_h)(U,U)/|U|_h²` over the random probe fields.
    pub coercivity_min: f64,
    /// Largest norm-extension ratio over the random probe fields.
    pub extension_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub n: usize,
    pub rows: Vec<SweepRow>,
}

fn spread(values: impl Iterator<Item = f64>) -> f64 {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    hi / lo
}

impl SweepReport {
    pub fn energy_ratio(&self) -> f64 {
        spread(self.rows.iter().map(|r| r.energy_error))
    }

    pub fn condition_ratio(&self) -> f64 {
        spread(self.rows.iter().map(|r| r.condition))
    }

    pub fn coercivity_ratio(&self) -> f64 {
        spread(self.rows.iter().map(|r| r.coercivity_min))
    }

    pub fn extension_ratio(&self) -> f64 {
        spread(self.rows.iter().map(|r| r.extension_max))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("offset,u_L2,p_L2,energy_error,condition,coercivity_min,extension_max\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e},{:.6e}\n",
                r.offset,
                r.errors.velocity_l2,
                r.errors.pressure_l2,
                r.energy_error,
                r.condition,
                r.coercivity_min,
                r.extension_max
            ));
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::File::create(path)?.write_all(self.to_csv().as_bytes())?;
        Ok(())
    }
}

/// The case with its level set translated by `offset` along `x`.
pub fn shifted_case(case: &ManufacturedCase, offset: f64) -> ManufacturedCase {
    let ls = case.level_set.shifted([offset, 0.0]);
    case.clone().with_level_set(ls)
}

/// Solves, estimates the condition number and probes the stability constants per offset.
pub fn cut_sweep(
    case: &ManufacturedCase,
    order: usize,
    n: usize,
    offsets: &[f64],
    subdivision: usize,
    stab: &StabilizationConfig,
) -> Result<SweepReport> {
    let rows = offsets
        .par_iter()
        .map(|&offset| {
            let shifted = shifted_case(case, offset);
            let run = solve_case(&shifted, n, order, subdivision, stab)?;
            let parts = &run.system.parts;
            let energy = energy_error(&run.solution, &shifted, &run.disc, stab, parts)?;
            let condition = estimate_condition(&run.system.matrix);
            let fields = random_fields(&run.disc, PROBE_FIELDS, PROBE_SEED);
            let coercivity = coercivity_ratios(&run.disc, &shifted.coefficients(), stab, parts, &fields)?;
            let ns = run.disc.n_scalar();
            let extension = fields
                .iter()
                .map(|x| norm_extension_ratio(&run.disc, &x[2 * ns..3 * ns]))
                .fold(0.0, f64::max);
            Ok(SweepRow {
                offset,
                errors: run.errors,
                energy_error: energy.velocity_h,
                condition,
                coercivity_min: coercivity.into_iter().fold(f64::INFINITY, f64::min),
                extension_max: extension,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport { n, rows })
}

/// Condition estimate of the assembled system for one shifted configuration.
pub fn condition_at_offset(
    case: &ManufacturedCase,
    order: usize,
    n: usize,
    offset: f64,
    subdivision: usize,
    stab: &StabilizationConfig,
) -> Result<f64> {
    let shifted = shifted_case(case, offset);
    let disc = super::unit_square_discretization(n, shifted.level_set.clone(), order, subdivision)?;
    let system = crate::forms::assemble_system(&disc, &shifted.coefficients(), stab)?;
    Ok(estimate_condition(&system.matrix))
}
