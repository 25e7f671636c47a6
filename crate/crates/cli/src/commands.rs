//! One function per subcommand; each reads a resolved config and writes its
//! files into the output directory.

use std::path::{Path, PathBuf};

use serde::Serialize;
use wiener_core::audit::{audit_hypotheses, AuditBox, AuditReport, AuditTarget};
use wiener_core::clark_ocone::{ito_kernel, ito_residual, ResidualStats};
use wiener_core::grid::{DiscretePath, TimeGrid};
use wiener_core::stats::{sectioned_mean, MeanEstimate};
use wiener_core::stochastic::{
    kl_estimate, minimize_action_mc, penalty_d, sample_ensemble, simulate_xtilde, BlowupSummary, BrownianEnsemble,
};
use wiener_core::validate::{run_battery, ValidateOptions, ValidationReport};
use wiener_core::variational::{scan_terminal, shoot, BoundaryCondition, LagrangianModel, TerminalScan};
use wiener_core::{CostFunctional, DriftKernel, Polynomial};

use crate::config::{DriftSpec, ProblemSpec, RunConfig};
use crate::output::{read_csv_column, write_csv, write_json};
use crate::{Cli, CliError, Command, RunArgs, ValidateArgs};

const AUDIT_SAMPLES: usize = 200;

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Kernel(a) => cmd_kernel(&resolve(&a)?).map(drop),
        Command::Solve(a) => cmd_solve(&resolve(&a)?).map(drop),
        Command::Om(a) => cmd_om(&resolve(&a)?).map(drop),
        Command::Penalty(a) => cmd_penalty(&resolve(&a)?).map(drop),
        Command::Simulate(a) => cmd_simulate(&resolve(&a)?).map(drop),
        Command::Validate(a) => cmd_validate(&a).map(drop),
    }
}

/// Loads the config and applies command-line overrides.
pub fn resolve(args: &RunArgs) -> Result<RunConfig, CliError> {
    let mut cfg = RunConfig::load(&args.config)?;
    if let Some(dir) = &args.out {
        cfg.outputs.dir = dir.clone();
    }
    if let Some(seed) = args.seed {
        cfg.ensemble.seed = seed;
    }
    if args.scan_a {
        cfg.solver.scan_a = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.outputs.dir.join(name)
}

fn ensemble(cfg: &RunConfig, grid: TimeGrid) -> Result<BrownianEnsemble, CliError> {
    Ok(sample_ensemble(grid, cfg.ensemble.paths, cfg.ensemble.seed)?)
}

#[derive(Serialize)]
struct KernelFile {
    horizon: f64,
    g: Polynomial,
    #[serde(rename = "G")]
    terminal: Polynomial,
    /// Row `k`: coefficient of `x^k` as ascending powers of `s`.
    s_coefficients: Vec<Polynomial>,
    /// Row `k`: coefficient of `x^k` as ascending powers of `T − s`.
    tau_coefficients: Vec<Polynomial>,
    mean_c: f64,
    derivation_log: Vec<String>,
}

#[derive(Serialize)]
struct ResidualFile {
    #[serde(flatten)]
    stats: ResidualStats,
    steps: usize,
    paths: usize,
    seed: u64,
}

pub fn cmd_kernel(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let Some(ProblemSpec::Cost(spec)) = &cfg.problem else {
        return Err(CliError::Config("kernel: problem.cost (g and/or G) is required".into()));
    };
    let (g, big_g) = spec.polynomials()?;
    let result = ito_kernel(&g, &big_g, cfg.horizon)?;
    for line in result.derivation_log.iter().filter(|l| l.starts_with("note")) {
        log::warn!("{line}");
    }
    let s_coefficients = match result.kernel.form() {
        wiener_core::KernelForm::SpacePoly(a) => a.clone(),
        _ => unreachable!("Itô kernels of polynomial costs are space polynomials"),
    };
    let grid = cfg.time_grid()?;
    let ens = ensemble(cfg, grid)?;
    let cost = CostFunctional::integral_terminal(g.clone(), big_g.clone(), cfg.horizon)?;
    let stats = ito_residual(&cost, &result, &ens)?;
    Ok(vec![
        write_json(
            &out(cfg, "kernel.json"),
            &KernelFile {
                horizon: cfg.horizon,
                g,
                terminal: big_g,
                s_coefficients,
                tau_coefficients: result.tau_coeffs.clone(),
                mean_c: result.mean_c,
                derivation_log: result.derivation_log.clone(),
            },
        )?,
        write_json(
            &out(cfg, "residual.json"),
            &ResidualFile {
                stats,
                steps: grid.steps(),
                paths: ens.len(),
                seed: ens.seed(),
            },
        )?,
    ])
}

#[derive(Serialize)]
struct ScanSummary {
    #[serde(flatten)]
    scan: TerminalScan,
    /// `|a* − q(T)|` against the free-endpoint solution.
    terminal_gap: Option<f64>,
}

#[derive(Serialize)]
struct SolveReport<'a> {
    config: &'a RunConfig,
    boundary: BoundaryCondition,
    slope0: f64,
    terminal: f64,
    action: f64,
    el_residual_max: f64,
    natural_bc_residual: f64,
    boundary_residual: f64,
    scan: Option<ScanSummary>,
    audit: AuditReport,
    kl_estimate: MeanEstimate,
}

fn audit_box(horizon: f64, path: &[f64], velocity: &[f64]) -> AuditBox {
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let x = (1.5 * sup(path)).max(3.0 * horizon.sqrt());
    let v = (1.5 * sup(velocity)).max(1.0);
    AuditBox {
        t_range: (0.0, horizon),
        x_range: (-x, x),
        qdot_range: (-v, v),
    }
}

fn audit(cfg: &RunConfig, kernel: &DriftKernel, bx: &AuditBox) -> Result<AuditReport, CliError> {
    let report = match &cfg.problem {
        Some(ProblemSpec::Cost(spec)) => {
            let (g, big_g) = spec.polynomials()?;
            audit_hypotheses(
                AuditTarget::Cost {
                    running: &g,
                    terminal: &big_g,
                    horizon: cfg.horizon,
                },
                bx,
                AUDIT_SAMPLES,
            )?
        }
        _ => audit_hypotheses(AuditTarget::Kernel(kernel), bx, AUDIT_SAMPLES)?,
    };
    Ok(report)
}

pub fn cmd_solve(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let kernel = cfg.solve_kernel()?;
    let grid = cfg.time_grid()?;
    let model = LagrangianModel::new(kernel.clone());
    let shooting = cfg.solver.shooting();
    let sol = shoot(&model, &grid, cfg.solver.boundary, &shooting)?;
    let scan = if cfg.solver.scan_a {
        let scan = scan_terminal(&model, &grid, &shooting, cfg.solver.scan_range, cfg.solver.scan_points)?;
        let terminal_gap = matches!(cfg.solver.boundary, BoundaryCondition::FreeEndpoint)
            .then(|| (scan.terminal - sol.path.terminal()).abs());
        Some(ScanSummary { scan, terminal_gap })
    } else {
        None
    };
    let audit = audit(cfg, &kernel, &audit_box(cfg.horizon, sol.path.values(), &sol.velocity))?;
    let ens = ensemble(cfg, grid)?;
    let kl = kl_estimate(&sol.path, &kernel, &ens)?;

    let mut written = Vec::new();
    if cfg.outputs.emit_paths {
        let rows = (0..grid.len()).map(|i| vec![grid.node(i), sol.path.values()[i], sol.velocity[i]]);
        written.push(write_csv(&out(cfg, "solution.csv"), &["t", "q", "qdot"], rows)?);
    }
    written.push(write_json(
        &out(cfg, "report.json"),
        &SolveReport {
            config: cfg,
            boundary: cfg.solver.boundary,
            slope0: sol.slope0,
            terminal: sol.path.terminal(),
            action: sol.action,
            el_residual_max: sol.el_residual_max,
            natural_bc_residual: sol.natural_bc_residual,
            boundary_residual: sol.boundary_residual,
            scan,
            audit,
            kl_estimate: kl,
        },
    )?);
    Ok(written)
}

#[derive(Serialize)]
struct OmReport<'a> {
    config: &'a RunConfig,
    converged: bool,
    iterations: usize,
    final_objective: f64,
    mc_std_err: f64,
    gradient_norm: f64,
    objective_trace: Vec<f64>,
    /// `sup |z − q|` against `solution.csv` in the same directory, when present.
    cross_route_gap: Option<f64>,
    notes: Vec<String>,
}

fn cross_route_gap(path: &Path, z: &DiscretePath) -> (Option<f64>, Option<String>) {
    if !path.exists() {
        return (None, Some("no solution.csv in the output directory".into()));
    }
    match read_csv_column(path, "q") {
        Ok(q) if q.len() == z.values().len() => {
            let gap = q.iter().zip(z.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            (Some(gap), None)
        }
        Ok(q) => (
            None,
            Some(format!(
                "solution.csv has {} nodes, this run has {}",
                q.len(),
                z.values().len()
            )),
        ),
        Err(e) => (None, Some(e.to_string())),
    }
}

pub fn cmd_om(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let kernel = cfg.solve_kernel()?;
    let grid = cfg.time_grid()?;
    let ens = ensemble(cfg, grid)?;
    let init = cfg.init_path()?;
    let report = minimize_action_mc(&kernel, &ens, &init, &cfg.minimizer.config())?;
    let (gap, note) = cross_route_gap(&out(cfg, "solution.csv"), &report.path);
    let mut notes: Vec<String> = note.into_iter().collect();
    if !report.converged {
        notes.push(format!(
            "stopped after {} iterations without meeting the tolerance",
            report.iterations
        ));
        log::warn!("{}", notes.last().unwrap());
    }

    let mut written = Vec::new();
    if cfg.outputs.emit_paths {
        let rows = (0..grid.len()).map(|i| vec![grid.node(i), report.path.values()[i]]);
        written.push(write_csv(&out(cfg, "om_solution.csv"), &["t", "q"], rows)?);
    }
    written.push(write_json(
        &out(cfg, "om_report.json"),
        &OmReport {
            config: cfg,
            converged: report.converged,
            iterations: report.iterations,
            final_objective: report.final_objective,
            mc_std_err: report.mc_std_err,
            gradient_norm: report.gradient_norm,
            objective_trace: report.objective_trace,
            cross_route_gap: gap,
            notes,
        },
    )?);
    Ok(written)
}

#[derive(Serialize)]
struct PenaltyFile<'a> {
    value: f64,
    std_err: f64,
    drift: &'a DriftSpec,
    horizon: f64,
    steps: usize,
    paths: usize,
    seed: u64,
}

pub fn cmd_penalty(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let drift = cfg.drift()?;
    let grid = cfg.time_grid()?;
    let ens = ensemble(cfg, grid)?;
    let est = penalty_d(&drift, &ens)?;
    Ok(vec![write_json(
        &out(cfg, "penalty.json"),
        &PenaltyFile {
            value: est.value,
            std_err: est.std_err,
            drift: cfg.drift.as_ref().expect("drift() succeeded"),
            horizon: cfg.horizon,
            steps: grid.steps(),
            paths: ens.len(),
            seed: ens.seed(),
        },
    )?])
}

#[derive(Serialize)]
struct BlowupFile {
    #[serde(flatten)]
    summary: BlowupSummary,
    threshold: f64,
    /// Mean of `X̃(T)` over paths that stayed finite.
    terminal_mean: Option<MeanEstimate>,
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let kernel = cfg.solve_kernel()?;
    let grid = cfg.time_grid()?;
    let ens = ensemble(cfg, grid)?;
    let set = simulate_xtilde(&kernel, &ens)?;
    let summary = set.summary();
    if summary.blown_up > 0 {
        log::warn!(
            "{} of {} paths blew up (earliest at t = {:?})",
            summary.blown_up,
            summary.paths,
            summary.earliest_time
        );
    }
    let terminals = set.terminal_values();
    let terminal_mean = (!terminals.is_empty()).then(|| sectioned_mean(&terminals));

    let mut written = Vec::new();
    let k = cfg.outputs.emit_xtilde.min(set.paths.len());
    if k > 0 {
        let header: Vec<String> = std::iter::once("t".to_string())
            .chain((0..k).map(|j| format!("path_{j}")))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows = (0..grid.len()).map(|i| {
            std::iter::once(grid.node(i))
                .chain(set.paths[..k].iter().map(|p| p[i]))
                .collect()
        });
        written.push(write_csv(&out(cfg, "xtilde.csv"), &header, rows)?);
    }
    written.push(write_json(
        &out(cfg, "blowup.json"),
        &BlowupFile {
            summary,
            threshold: wiener_core::stochastic::BLOWUP_THRESHOLD,
            terminal_mean,
        },
    )?);
    Ok(written)
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<ValidationReport, CliError> {
    let report = run_battery(&ValidateOptions {
        only: args.only.clone(),
        corrupt: args.corrupt_tolerance,
    });
    for c in &report.criteria {
        println!("{}", c.summary_line());
        if !c.passed {
            if let Some(e) = &c.error {
                println!("      error: {e}");
            }
            for check in c.checks.iter().filter(|k| !k.passed) {
                let op = if check.inclusive { "<=" } else { "<" };
                println!(
                    "      {}: {:e} (needs {op} {:e})",
                    check.label, check.value, check.limit
                );
            }
        }
    }
    write_json(&args.out.join("validation.json"), &report)?;
    if report.passed {
        Ok(report)
    } else {
        Err(CliError::Validation(report.failed_ids()))
    }
}
