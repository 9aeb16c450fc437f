//! Run orchestration for the CLI: executes a configured driver into an
//! output directory and post-processes finished runs into figure-panel
//! CSV files.
//!
//! A run directory contains `trace.csv`, `final_flow.csv`,
//! `final_policy.csv`, and `manifest.txt` (the manifest carries the seed,
//! the wall-clock duration, the file list, and a snapshot of the resolved
//! config; rerunning with the same config and seed reproduces every CSV
//! byte for byte, only the manifest's duration differs).

use crate::benchmark::closed_form_equilibrium;
use crate::config::{RunConfig, RunMode, SolverChoice};
use crate::diagnostics::theorem_bound_report;
use crate::error::{MfgError, Result};
use crate::flow::MeanFieldFlow;
use crate::fp::{
    run_approximate_fp, run_exact_fp, run_modelfree_fp, ApproxSolver, FpConfig, FpIteration,
    FpTrace,
};
use crate::grid::StateGrid;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Which driver a run invokes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunKind {
    Exact,
    Approximate,
    ModelFree,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOverrides {
    pub seed: Option<u64>,
    pub diagnostics: Option<bool>,
    pub scale: Option<f64>,
}

/// What a finished run produced, for the CLI to print.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub iterations: usize,
    pub duration_ms: u128,
    pub final_exploitability: Option<f64>,
    pub final_approx_exploitability: f64,
    pub final_l2_density: Option<f64>,
}

const TRACE_FILE: &str = "trace.csv";
const FLOW_FILE: &str = "final_flow.csv";
const POLICY_FILE: &str = "final_policy.csv";
const MANIFEST_FILE: &str = "manifest.txt";

/// In-memory result of a configured run, before anything touches disk.
#[derive(Debug, Clone)]
pub struct DriverOutput {
    /// The final population: a full flow for finite-horizon runs, a single
    /// density slice for stationary model-free runs.
    pub flow: MeanFieldFlow,
    /// Mean mixture control per time step and cell (one row for
    /// stationary runs).
    pub control: Vec<Vec<f64>>,
    pub trace: FpTrace,
}

/// Validate the config against the requested driver and run it.
pub fn run_driver(kind: RunKind, config: &RunConfig) -> Result<DriverOutput> {
    config.validate()?;
    check_kind(kind, config)?;
    let env = config.build_environment()?;
    let mu0 = config.initial_distribution()?;
    let fp_config = FpConfig {
        num_iterations: config.num_iterations,
        mu0,
        initial_flow: None,
        seed: config.seed,
        diagnostics: config.diagnostics,
        compare_to_closed_form: config.tracks_closed_form(),
    };
    match kind {
        RunKind::Exact => {
            let out = run_exact_fp(&env, &fp_config)?;
            let control = out.policy.mean_control(&env);
            Ok(DriverOutput {
                flow: out.flow,
                control,
                trace: out.trace,
            })
        }
        RunKind::Approximate => {
            let solver = match config.solver {
                SolverChoice::Perturbed => ApproxSolver::Perturbed(config.corruption()?),
                SolverChoice::QLearning => ApproxSolver::QLearning {
                    schedule: config.q_schedule(),
                    warm_start: config.q_warm_start,
                },
                SolverChoice::Exact => unreachable!("rejected by check_kind"),
            };
            let out = run_approximate_fp(&env, &fp_config, &solver)?;
            let control = out.policy.mean_control(&env);
            Ok(DriverOutput {
                flow: out.flow,
                control,
                trace: out.trace,
            })
        }
        RunKind::ModelFree => {
            let out = run_modelfree_fp(&env, &fp_config, &config.modelfree_settings())?;
            // Stationary run: one density slice, one control row.
            Ok(DriverOutput {
                flow: MeanFieldFlow::new(vec![out.density])?,
                control: vec![out.policy.mean_control(&env)[0].clone()],
                trace: out.trace,
            })
        }
    }
}

/// Load the config, apply overrides, run the requested driver, and write
/// the run directory.
pub fn execute_run(
    kind: RunKind,
    config_path: &Path,
    out_dir: &Path,
    overrides: &RunOverrides,
) -> Result<RunSummary> {
    let mut config = RunConfig::load(config_path)?;
    if let Some(seed) = overrides.seed {
        config.seed = seed;
    }
    if let Some(diagnostics) = overrides.diagnostics {
        config.diagnostics = diagnostics;
    }
    if let Some(scale) = overrides.scale {
        config.desk_scale = scale;
    }

    let started = Instant::now();
    let output = run_driver(kind, &config)?;
    let duration_ms = started.elapsed().as_millis();

    let grid = StateGrid::new(config.num_cells, 1.0, config.topology)?;
    std::fs::create_dir_all(out_dir)?;
    output.trace.write_csv(&out_dir.join(TRACE_FILE))?;
    output.flow.write_csv(&out_dir.join(FLOW_FILE), &grid)?;
    write_control_csv(&out_dir.join(POLICY_FILE), &grid, &output.control)?;
    let files = vec![
        TRACE_FILE.to_string(),
        FLOW_FILE.to_string(),
        POLICY_FILE.to_string(),
    ];
    write_manifest(&out_dir.join(MANIFEST_FILE), &config, duration_ms, &files)?;

    let last = output
        .trace
        .iterations()
        .last()
        .expect("a run of ≥ 1 iterations has trace rows");
    Ok(RunSummary {
        out_dir: out_dir.to_path_buf(),
        files,
        iterations: output.trace.len(),
        duration_ms,
        final_exploitability: last.exploitability,
        final_approx_exploitability: last.approx_exploitability,
        final_l2_density: last.l2_density_error,
    })
}

fn check_kind(kind: RunKind, config: &RunConfig) -> Result<()> {
    match kind {
        RunKind::Exact => {
            if config.mode != RunMode::FiniteHorizon {
                return Err(MfgError::Config(
                    "exact-fp tracks a full flow; set mode = finite_horizon".into(),
                ));
            }
        }
        RunKind::Approximate => {
            if config.mode != RunMode::FiniteHorizon {
                return Err(MfgError::Config(
                    "approx-fp tracks a full flow; set mode = finite_horizon".into(),
                ));
            }
            if config.solver == SolverChoice::Exact {
                return Err(MfgError::Config(
                    "approx-fp needs solver = perturbed or q_learning \
                     (use exact-fp for the exact solver)"
                        .into(),
                ));
            }
        }
        RunKind::ModelFree => {
            if config.mode != RunMode::Stationary {
                return Err(MfgError::Config(
                    "modelfree-fp estimates a stationary density; set mode = stationary".into(),
                ));
            }
            if config.solver != SolverChoice::QLearning {
                return Err(MfgError::Config(
                    "modelfree-fp learns from samples; set solver = q_learning".into(),
                ));
            }
        }
    }
    Ok(())
}

fn write_control_csv(path: &Path, grid: &StateGrid, rows: &[Vec<f64>]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    let header: Vec<String> = grid
        .coordinates()
        .iter()
        .map(|x| format!("x_{x:.6}"))
        .collect();
    writeln!(out, "{}", header.join(","))?;
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.12e}")).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn write_manifest(
    path: &Path,
    config: &RunConfig,
    duration_ms: u128,
    files: &[String],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "version = {}", env!("CARGO_PKG_VERSION"))?;
    writeln!(out, "seed = {}", config.seed)?;
    writeln!(out, "duration_ms = {duration_ms}")?;
    writeln!(out, "files = {}", files.join(","))?;
    writeln!(out, "[config]")?;
    write!(out, "{}", config.snapshot())?;
    Ok(())
}

/// Read a run directory's manifest back: the config snapshot and the file
/// list it promises.
pub fn read_manifest(dir: &Path) -> Result<(RunConfig, Vec<String>)> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| {
        MfgError::Config(format!(
            "no readable manifest at {}: {e} (is this a finished run directory?)",
            path.display()
        ))
    })?;
    let Some((head, config_block)) = text.split_once("[config]\n") else {
        return Err(MfgError::Config(format!(
            "manifest {} has no [config] section",
            path.display()
        )));
    };
    let mut files = Vec::new();
    for line in head.lines() {
        if let Some(list) = line.strip_prefix("files = ") {
            files = list.split(',').map(str::to_string).collect();
        }
    }
    if files.is_empty() {
        return Err(MfgError::Config(format!(
            "manifest {} lists no output files",
            path.display()
        )));
    }
    Ok((RunConfig::parse(config_block)?, files))
}

fn read_csv_rows(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| MfgError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines();
    let Some(header) = lines.next() else {
        return Err(MfgError::Config(format!("{} is empty", path.display())));
    };
    let header: Vec<String> = header.split(',').map(str::to_string).collect();
    let mut rows = Vec::new();
    for line in lines {
        rows.push(line.split(',').map(str::to_string).collect());
    }
    Ok((header, rows))
}

fn parse_cell(path: &Path, value: &str) -> Result<f64> {
    value.parse().map_err(|_| {
        MfgError::Config(format!(
            "{}: expected a number, got `{value}`",
            path.display()
        ))
    })
}

/// Reconstruct a trace from a run directory's `trace.csv`.
pub fn read_trace_csv(path: &Path) -> Result<FpTrace> {
    let (header, rows) = read_csv_rows(path)?;
    let col = |name: &str| header.iter().position(|h| h == name);
    let Some(n_col) = col("n") else {
        return Err(MfgError::Config(format!(
            "{} has no `n` column",
            path.display()
        )));
    };
    let Some(approx_col) = col("approx_exploitability") else {
        return Err(MfgError::Config(format!(
            "{} has no `approx_exploitability` column",
            path.display()
        )));
    };
    let Some(avg_col) = col("avg_flow_step") else {
        return Err(MfgError::Config(format!(
            "{} has no `avg_flow_step` column",
            path.display()
        )));
    };
    let Some(br_col) = col("br_flow_step") else {
        return Err(MfgError::Config(format!(
            "{} has no `br_flow_step` column",
            path.display()
        )));
    };
    let e_col = col("exploitability");
    let l_col = col("learning_error");
    let gap_col = col("exact_vs_learned_flow");
    let l2d_col = col("l2_density_error");
    let l2c_col = col("l2_control_error");
    let diagnostics = e_col.is_some() && l_col.is_some() && gap_col.is_some();
    let benchmark = l2d_col.is_some() && l2c_col.is_some();

    let mut iterations = Vec::with_capacity(rows.len());
    for row in &rows {
        let get = |i: usize| -> Result<&str> {
            row.get(i).map(String::as_str).ok_or_else(|| {
                MfgError::Config(format!("{}: short row `{}`", path.display(), row.join(",")))
            })
        };
        let opt = |i: Option<usize>| -> Result<Option<f64>> {
            match i {
                None => Ok(None),
                Some(i) => {
                    let v = get(i)?;
                    if v.is_empty() {
                        Ok(None)
                    } else {
                        Ok(Some(parse_cell(path, v)?))
                    }
                }
            }
        };
        iterations.push(FpIteration {
            n: get(n_col)?.parse().map_err(|_| {
                MfgError::Config(format!("{}: bad iteration index", path.display()))
            })?,
            exploitability: opt(e_col)?,
            approx_exploitability: parse_cell(path, get(approx_col)?)?,
            learning_error: opt(l_col)?,
            avg_flow_step: parse_cell(path, get(avg_col)?)?,
            br_flow_step: opt(Some(br_col))?,
            exact_vs_learned_flow: opt(gap_col)?,
            l2_density_error: opt(l2d_col)?,
            l2_control_error: opt(l2c_col)?,
        });
    }
    if iterations.is_empty() {
        return Err(MfgError::Config(format!(
            "{} contains no iterations",
            path.display()
        )));
    }
    Ok(FpTrace::from_parts(iterations, Vec::new(), diagnostics, benchmark))
}

fn read_last_data_row(path: &Path) -> Result<Vec<f64>> {
    let (_, rows) = read_csv_rows(path)?;
    let Some(last) = rows.last() else {
        return Err(MfgError::Config(format!(
            "{} has no data rows",
            path.display()
        )));
    };
    last.iter().map(|v| parse_cell(path, v)).collect()
}

fn read_first_data_row(path: &Path) -> Result<Vec<f64>> {
    let (_, rows) = read_csv_rows(path)?;
    let Some(first) = rows.first() else {
        return Err(MfgError::Config(format!(
            "{} has no data rows",
            path.display()
        )));
    };
    first.iter().map(|v| parse_cell(path, v)).collect()
}

/// What the report command computed, for the CLI to print.
#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub files: Vec<String>,
    /// First and final L2 density error, and their ratio final/first.
    pub l2_density_first: f64,
    pub l2_density_final: f64,
    pub l2_density_ratio: f64,
    /// Present when the trace carried solver-quality diagnostics.
    pub bounds_hold_on_holdout: Option<bool>,
}

/// Post-process a finished benchmark run directory into per-cell
/// comparison CSVs, per-iteration L2 curves, and a fitted-bound report.
/// The five output files are written next to the run's own.
pub fn run_report(dir: &Path) -> Result<ReportSummary> {
    let (config, promised) = read_manifest(dir)?;
    for name in &promised {
        if !dir.join(name).exists() {
            return Err(MfgError::Config(format!(
                "manifest promises `{name}` but it is missing from {}",
                dir.display()
            )));
        }
    }
    if !config.tracks_closed_form() {
        return Err(MfgError::Config(
            "the report compares against the closed-form equilibrium, \
             which needs the congestion benchmark on a torus"
                .into(),
        ));
    }
    let grid = StateGrid::new(config.num_cells, 1.0, config.topology)?;
    let (eq_control, eq_density) = closed_form_equilibrium(&grid)?;

    let learned_density = read_last_data_row(&dir.join(FLOW_FILE))?;
    let learned_control = read_first_data_row(&dir.join(POLICY_FILE))?;
    if learned_density.len() != grid.num_cells() || learned_control.len() != grid.num_cells() {
        return Err(MfgError::Dimension(format!(
            "run outputs cover {} / {} cells, config says {}",
            learned_density.len(),
            learned_control.len(),
            grid.num_cells()
        )));
    }
    let trace = read_trace_csv(&dir.join(TRACE_FILE))?;

    let mut files = Vec::new();
    let density_file = "density_vs_closed_form.csv";
    write_comparison_csv(
        &dir.join(density_file),
        &grid,
        "learned_mass,equilibrium_mass",
        &learned_density,
        eq_density.probs(),
    )?;
    files.push(density_file.to_string());

    let control_file = "control_vs_closed_form.csv";
    write_comparison_csv(
        &dir.join(control_file),
        &grid,
        "learned_control,equilibrium_control",
        &learned_control,
        &eq_control,
    )?;
    files.push(control_file.to_string());

    let l2_density: Vec<(usize, f64)> = trace
        .iterations()
        .iter()
        .map(|row| {
            row.l2_density_error
                .map(|v| (row.n, v))
                .ok_or_else(|| MfgError::Config("trace has no l2_density_error column".into()))
        })
        .collect::<Result<_>>()?;
    let l2_control: Vec<(usize, f64)> = trace
        .iterations()
        .iter()
        .map(|row| {
            row.l2_control_error
                .map(|v| (row.n, v))
                .ok_or_else(|| MfgError::Config("trace has no l2_control_error column".into()))
        })
        .collect::<Result<_>>()?;
    write_series_csv(
        &dir.join("l2_density_by_iteration.csv"),
        "n,l2_density_error",
        &l2_density,
    )?;
    files.push("l2_density_by_iteration.csv".to_string());
    write_series_csv(
        &dir.join("l2_control_by_iteration.csv"),
        "n,l2_control_error",
        &l2_control,
    )?;
    files.push("l2_control_by_iteration.csv".to_string());

    let l2_density_first = l2_density[0].1;
    let l2_density_final = l2_density[l2_density.len() - 1].1;
    let l2_density_ratio = l2_density_final / l2_density_first;

    let report_file = "theorem2_report.txt";
    let bounds_hold = write_bound_report(
        &dir.join(report_file),
        &trace,
        l2_density_first,
        l2_density_final,
    )?;
    files.push(report_file.to_string());

    Ok(ReportSummary {
        files,
        l2_density_first,
        l2_density_final,
        l2_density_ratio,
        bounds_hold_on_holdout: bounds_hold,
    })
}

fn write_comparison_csv(
    path: &Path,
    grid: &StateGrid,
    value_headers: &str,
    learned: &[f64],
    equilibrium: &[f64],
) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "x,{value_headers},error")?;
    for (i, (&l, &e)) in learned.iter().zip(equilibrium).enumerate() {
        writeln!(
            out,
            "{:.12e},{l:.12e},{e:.12e},{:.12e}",
            grid.coordinate(i),
            l - e
        )?;
    }
    Ok(())
}

fn write_series_csv(path: &Path, header: &str, series: &[(usize, f64)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "{header}")?;
    for &(n, v) in series {
        writeln!(out, "{n},{v:.12e}")?;
    }
    Ok(())
}

const BOUND_FIT_FRACTION: f64 = 0.5;

fn write_bound_report(
    path: &Path,
    trace: &FpTrace,
    l2_first: f64,
    l2_final: f64,
) -> Result<Option<bool>> {
    let file = std::fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);
    writeln!(out, "iterations = {}", trace.len())?;
    writeln!(out, "l2_density_first = {l2_first:.12e}")?;
    writeln!(out, "l2_density_final = {l2_final:.12e}")?;
    writeln!(out, "l2_density_ratio = {:.12e}", l2_final / l2_first)?;
    if !trace.has_diagnostics() || trace.len() < 2 {
        writeln!(
            out,
            "bound_fitting = unavailable (needs a diagnostic trace of ≥ 2 iterations)"
        )?;
        return Ok(None);
    }
    let report = theorem_bound_report(trace, BOUND_FIT_FRACTION)?;
    let last = trace.iterations().last().expect("nonempty trace");
    let final_e = last.exploitability.expect("diagnostic trace");
    writeln!(out, "fit_iterations = {}", report.fit_iterations)?;
    writeln!(out, "gap_constant = {:.12e}", report.gap_constant)?;
    writeln!(out, "drift_constant = {:.12e}", report.drift_constant)?;
    writeln!(out, "gap_holds_on_holdout = {}", report.gap_holds_on_holdout)?;
    writeln!(
        out,
        "drift_holds_on_holdout = {}",
        report.drift_holds_on_holdout
    )?;
    writeln!(out, "final_exploitability = {final_e:.12e}")?;
    writeln!(
        out,
        "minimal_certifiable_epsilon = {:.12e}",
        final_e.max(0.0).sqrt()
    )?;
    Ok(Some(report.holds_on_holdout()))
}
