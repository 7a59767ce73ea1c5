//! Configuration-driven runs of the cut finite element solver.

pub mod config;
pub mod error;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use serde_json::json;

use cutfem::navier_stokes::{cut_cavity_at, run_transient, TransientState};
use cutfem::solver::{estimate_condition, SolutionField};
use cutfem::verification::{
    cut_sweep, patch_case, run_convergence_with, taylor_case, unit_square_discretization, ErrorReport,
    ManufacturedCase,
};

pub use config::{parse_config, CaseKind, LoadedConfig, RunConfig};
pub use error::CliError;

/// Command-line overrides of a run.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out: Option<PathBuf>,
    pub quiet: bool,
}

/// Reads, validates and runs the configuration at `path`; returns the summary record.
pub fn run_file(path: &Path, options: &RunOptions) -> Result<serde_json::Value, CliError> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config {
            key: None,
            message: format!("cannot read {}: {e}", path.display()),
        })?;
    let loaded = parse_config(&source)?;
    let out = options
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&loaded.resolved.output_dir));
    run(&loaded, &out, options.quiet)
}

/// Runs a parsed configuration, writing artifacts into `out`.
pub fn run(loaded: &LoadedConfig, out: &Path, quiet: bool) -> Result<serde_json::Value, CliError> {
    std::fs::create_dir_all(out)?;
    match loaded.resolved.case {
        CaseKind::TransientCavity => run_transient_case(loaded, out, quiet),
        _ => run_steady(loaded, out, quiet),
    }
}

fn manufactured(cfg: &RunConfig) -> ManufacturedCase {
    let ls = cfg.level_set.build();
    match cfg.case {
        CaseKind::Patch => patch_case(cfg.mu, cfg.sigma, cfg.beta, ls),
        _ => taylor_case(cfg.mu, cfg.sigma).with_level_set(ls),
    }
}

fn write_summary(out: &Path, summary: &serde_json::Value) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(summary).map_err(|e| CliError::Runtime(e.to_string()))?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(())
}

fn eoc_record(eoc: Option<[f64; 6]>) -> serde_json::Value {
    match eoc {
        Some(r) => ErrorReport::COLUMNS
            .iter()
            .zip(r)
            .map(|(c, v)| (c.to_string(), json!(v)))
            .collect::<serde_json::Map<_, _>>()
            .into(),
        None => serde_json::Value::Null,
    }
}

fn run_steady(loaded: &LoadedConfig, out: &Path, quiet: bool) -> Result<serde_json::Value, CliError> {
    let cfg = &loaded.resolved;
    let start = Instant::now();
    let case = manufactured(cfg);
    let conditions = Mutex::new(BTreeMap::new());
    let writes = Mutex::new(());
    let table = run_convergence_with(&case, cfg.order, &cfg.n, cfg.subdivision, &cfg.stabilization, |run| {
        let n = run.disc.mesh.nx;
        if cfg.output.condition_estimate {
            let c = estimate_condition(&run.system.matrix);
            conditions.lock().expect("condition map").insert(n, c);
        }
        if cfg.output.emit_vtk {
            let _guard = writes.lock().expect("write lock");
            run.solution.write_vtk(&run.disc, out.join(format!("fields_N{n}.vtk")))?;
        }
        Ok(())
    })?;
    table.write_csv(out.join("convergence.csv"))?;
    if !quiet {
        print!("{}", table.to_csv());
    }

    let sweep = if cfg.sweep.enabled {
        let h = 1.0 / cfg.sweep.n as f64;
        let offsets: Vec<f64> = match &cfg.sweep.offsets_h {
            Some(o) => o.iter().map(|f| f * h).collect(),
            None => cutfem::verification::default_offsets(h),
        };
        let report = cut_sweep(&case, cfg.order, cfg.sweep.n, &offsets, cfg.subdivision, &cfg.stabilization)?;
        report.write_csv(out.join("sweep.csv"))?;
        if !quiet {
            print!("{}", report.to_csv());
        }
        json!({
            "n": report.n,
            "energy_ratio": report.energy_ratio(),
            "condition_ratio": report.condition_ratio(),
            "coercivity_ratio": report.coercivity_ratio(),
            "extension_ratio": report.extension_ratio(),
        })
    } else {
        serde_json::Value::Null
    };

    let failures: Vec<String> = table
        .rows
        .iter()
        .filter_map(|r| r.failure.as_ref().map(|f| format!("N={}: {f}", r.n)))
        .collect();
    let max_residual = table
        .rows
        .iter()
        .filter(|r| r.failure.is_none())
        .map(|r| r.residual)
        .fold(0.0, f64::max);
    let conditions: BTreeMap<String, f64> = conditions
        .into_inner()
        .expect("condition map")
        .into_iter()
        .map(|(n, c)| (n.to_string(), c))
        .collect();
    let summary = json!({
        "status": if failures.is_empty() { "ok" } else { "failed" },
        "case": cfg.case,
        "config": loaded.raw,
        "resolved": cfg,
        "rows": table.rows,
        "last_eoc": eoc_record(table.last_eoc()),
        "max_residual": max_residual,
        "condition_estimates": conditions,
        "sweep": sweep,
        "failures": failures,
        "runtime_seconds": start.elapsed().as_secs_f64(),
    });
    write_summary(out, &summary)?;
    if !failures.is_empty() {
        return Err(CliError::Runtime(format!("unsolved meshes: {}", failures.join("; "))));
    }
    Ok(summary)
}

fn run_transient_case(loaded: &LoadedConfig, out: &Path, quiet: bool) -> Result<serde_json::Value, CliError> {
    let cfg = &loaded.resolved;
    let ls_cfg = &cfg.level_set;
    if ls_cfg.shape != config::Shape::Square {
        return Err(CliError::config("level_set.shape", "the transient cavity requires shape = \"square\""));
    }
    let start = Instant::now();
    let t = &cfg.transient;
    let center = [ls_cfg.center[0] + ls_cfg.offset[0], ls_cfg.center[1] + ls_cfg.offset[1]];
    let ramp = (t.ramp_time > 0.0).then_some(t.ramp_time);
    let (ls, data) = cut_cavity_at(center, ls_cfg.half_width, cfg.mu, ramp);
    let n = cfg.n[0];
    let disc = unit_square_discretization(n, ls, cfg.order, cfg.subdivision)?;
    let state = TransientState::new(SolutionField::zeros(disc.n_scalar()), t.dt, t.theta, t.picard)?;
    let (last, series) = run_transient(&disc, state, &data, &cfg.stabilization, t.steps, |step, state| {
        if cfg.output.emit_vtk && step % t.vtk_stride == 0 {
            state
                .solution
                .write_vtk(&disc, out.join(format!("fields_N{n}_step{step:04}.vtk")))?;
        }
        if !quiet {
            println!("step {step} t = {:.4}", state.time);
        }
        Ok(())
    })?;
    series.write_csv(out.join("timeseries.csv"))?;
    let records = &series.records;
    let summary = json!({
        "status": "ok",
        "case": cfg.case,
        "config": loaded.raw,
        "resolved": cfg,
        "steps": records.len(),
        "final_time": last.time,
        "max_picard_iterations": series.max_picard_iterations(),
        "max_residual": records.iter().map(|r| r.solver_residual).fold(0.0, f64::max),
        "max_mass_imbalance": records.iter().map(|r| r.mass_imbalance).fold(0.0, f64::max),
        "final_kinetic_energy": records.last().map(|r| r.kinetic_energy),
        "runtime_seconds": start.elapsed().as_secs_f64(),
    });
    write_summary(out, &summary)?;
    Ok(summary)
}
