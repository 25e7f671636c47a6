//! Calculus-of-variations route: the Lagrangian
//! `L(t, q, q̇) = E[(q̇ − f(t, B(t) + q))²] = q̇² − 2q̇·m(t,q) + s(t,q)`,
//! the action `½∫L dt`, and a shooting solver for its Euler-Lagrange
//! equation.
//!
//! Writing out `L_q − d/dt L_q̇ = 0` the `∂_q m` terms cancel and the
//! equation becomes explicit: `q̈ = ∂ₜm(t, q) + E[f·∂ₓf](t, q)`.
//!
//! A free terminal value is handled through the natural boundary condition
//! `L_q̇(T) = 0`, i.e. `q̇(T) = m(T, q(T))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::DriftKernel;
use crate::grid::{DiscretePath, TimeGrid};

/// Magnitude beyond which an integration counts as diverged.
const DIVERGENCE_LIMIT: f64 = 1e100;

#[derive(Debug, Clone)]
pub struct LagrangianModel {
    kernel: DriftKernel,
}

impl LagrangianModel {
    pub fn new(kernel: DriftKernel) -> Self {
        Self { kernel }
    }

    pub fn kernel(&self) -> &DriftKernel {
        &self.kernel
    }

    pub fn horizon(&self) -> f64 {
        self.kernel.horizon()
    }

    /// `L(t, q, q̇)`, clamped at zero against rounding.
    pub fn lagrangian(&self, t: f64, q: f64, qdot: f64) -> Result<f64> {
        let m = self.kernel.mean(t, q)?;
        let s = self.kernel.sq_mean(t, q)?;
        Ok((qdot * qdot - 2.0 * qdot * m + s).max(0.0))
    }

    /// `q̈` demanded by the Euler-Lagrange equation.
    pub fn el_rhs(&self, t: f64, q: f64, _qdot: f64) -> Result<f64> {
        if !self.kernel.supports_derivative() {
            return Err(Error::UnsupportedKernel(
                "Euler-Lagrange right-hand side needs the kernel's x-derivative".into(),
            ));
        }
        Ok(self.kernel.mean_dt(t, q)? + self.kernel.ffx_mean(t, q)?)
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if (grid.horizon() - self.horizon()).abs() > 1e-12 * self.horizon() {
            Err(Error::invalid(format!(
                "grid horizon {} does not match model horizon {}",
                grid.horizon(),
                self.horizon()
            )))
        } else {
            Ok(())
        }
    }
}

/// A path together with its velocity at every node.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub path: DiscretePath,
    pub velocity: Vec<f64>,
}

impl Trajectory {
    pub fn terminal_velocity(&self) -> f64 {
        *self.velocity.last().expect("non-empty")
    }
}

/// Classical RK4 for `(q, q̇)` from `(0, slope0)` with the grid step.
pub fn integrate_el(model: &LagrangianModel, slope0: f64, grid: &TimeGrid) -> Result<Trajectory> {
    model.check_grid(grid)?;
    let dt = grid.dt();
    let n = grid.steps();
    let mut q = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    v[0] = slope0;
    for i in 0..n {
        let t = grid.node(i);
        let (qi, vi) = (q[i], v[i]);
        let a1 = model.el_rhs(t, qi, vi)?;
        let (q2, v2) = (qi + 0.5 * dt * vi, vi + 0.5 * dt * a1);
        let a2 = model.el_rhs(t + 0.5 * dt, q2, v2)?;
        let (q3, v3) = (qi + 0.5 * dt * v2, vi + 0.5 * dt * a2);
        let a3 = model.el_rhs(t + 0.5 * dt, q3, v3)?;
        let (q4, v4) = (qi + dt * v3, vi + dt * a3);
        let a4 = model.el_rhs(grid.node(i + 1), q4, v4)?;
        let qn = qi + dt / 6.0 * (vi + 2.0 * v2 + 2.0 * v3 + v4);
        let vn = vi + dt / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        if !(qn.is_finite() && vn.is_finite()) || qn.abs() > DIVERGENCE_LIMIT || vn.abs() > DIVERGENCE_LIMIT {
            return Err(Error::IntegrationDiverged { time: grid.node(i + 1) });
        }
        q[i + 1] = qn;
        v[i + 1] = vn;
    }
    Ok(Trajectory {
        path: DiscretePath::new(*grid, q)?,
        velocity: v,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    FreeEndpoint,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShootingConfig {
    /// Largest `|q̇(0)|` the bracket search may reach.
    pub slope_bracket: f64,
    /// Relative residual tolerance.
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        Self {
            slope_bracket: 50.0,
            tolerance: 1e-9,
            max_iterations: 200,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ELSolution {
    pub path: DiscretePath,
    pub velocity: Vec<f64>,
    pub slope0: f64,
    pub action: f64,
    pub el_residual_max: f64,
    /// `q̇(T) − m(T, q(T))`, zero at a free-endpoint optimum.
    pub natural_bc_residual: f64,
    /// Boundary residual the root finder drove to zero.
    pub boundary_residual: f64,
}

#[derive(Debug, Clone, Copy)]
struct Shot {
    slope: f64,
    residual: f64,
    scale: f64,
}

fn fire(model: &LagrangianModel, grid: &TimeGrid, bc: BoundaryCondition, slope: f64) -> Result<Shot> {
    let traj = integrate_el(model, slope, grid)?;
    let qt = traj.path.terminal();
    let vt = traj.terminal_velocity();
    let (residual, scale) = match bc {
        BoundaryCondition::FreeEndpoint => (vt - model.kernel.mean(grid.horizon(), qt)?, 1.0 + vt.abs()),
        BoundaryCondition::Fixed(a) => (qt - a, 1.0 + a.abs()),
    };
    if !residual.is_finite() {
        return Err(Error::IntegrationDiverged { time: grid.horizon() });
    }
    Ok(Shot { slope, residual, scale })
}

/// Finds the initial slope meeting the boundary condition.
///
/// The bracket grows geometrically from `[−1, 1]` to `[−S, S]`; if no sign
/// change shows up, `[−S, S]` is sampled more densely. Among all sign
/// changes the one nearest zero slope wins. The root is then polished with
/// Illinois false position, bisecting whenever a trial integration diverges.
pub fn shoot(
    model: &LagrangianModel,
    grid: &TimeGrid,
    bc: BoundaryCondition,
    cfg: &ShootingConfig,
) -> Result<ELSolution> {
    model.check_grid(grid)?;
    if !(cfg.slope_bracket > 0.0 && cfg.tolerance > 0.0) {
        return Err(Error::invalid("slope bracket and tolerance must be positive"));
    }
    let converged = |s: &Shot| s.residual.abs() <= cfg.tolerance * s.scale;
    let try_fire = |slope: f64| match fire(model, grid, bc, slope) {
        Ok(s) => Ok(Some(s)),
        Err(Error::IntegrationDiverged { .. }) => Ok(None),
        Err(e) => Err(e),
    };

    let mut samples: Vec<Shot> = Vec::new();
    let mut diverged = 0usize;
    let mut probe = |slope: f64, samples: &mut Vec<Shot>| -> Result<()> {
        match try_fire(slope)? {
            Some(s) => samples.push(s),
            None => diverged += 1,
        }
        Ok(())
    };

    probe(0.0, &mut samples)?;
    if let Some(s) = samples.first().filter(|s| converged(s)) {
        return finish(model, grid, s.slope, s.residual);
    }
    let mut width: f64 = 1.0;
    let mut bracket = loop {
        let w = width.min(cfg.slope_bracket);
        probe(-w, &mut samples)?;
        probe(w, &mut samples)?;
        let found = find_bracket(&mut samples);
        if found.is_some() || w >= cfg.slope_bracket {
            break found;
        }
        width *= 2.0;
    };
    let mut level = 1;
    while bracket.is_none() && level <= 6 {
        let pieces = 2usize.pow(level + 1);
        for k in (1..pieces).step_by(2) {
            probe(cfg.slope_bracket * (2.0 * k as f64 / pieces as f64 - 1.0), &mut samples)?;
        }
        bracket = find_bracket(&mut samples);
        level += 1;
    }
    let Some((lo, hi)) = bracket else {
        let (min_r, max_r) = samples.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), s| {
            (a.min(s.residual), b.max(s.residual))
        });
        return Err(Error::ShootingFailed(format!(
            "no sign change of the boundary residual for slopes in [-{s}, {s}]: \
             {} finite shots with residuals in [{min_r:.3e}, {max_r:.3e}], {diverged} diverged",
            samples.len(),
            s = cfg.slope_bracket,
        )));
    };

    let (mut a, mut b) = (lo, hi);
    let mut best = if a.residual.abs() <= b.residual.abs() { a } else { b };
    if converged(&best) {
        return finish(model, grid, best.slope, best.residual);
    }
    let (mut fa, mut fb) = (a.residual, b.residual);
    let mut retained = 0i8;
    for _ in 0..cfg.max_iterations {
        let mut x = (a.slope * fb - b.slope * fa) / (fb - fa);
        if !(x > a.slope && x < b.slope) {
            x = 0.5 * (a.slope + b.slope);
        }
        let shot = match try_fire(x)? {
            Some(s) => s,
            None => {
                let mid = 0.5 * (a.slope + b.slope);
                try_fire(mid)?.ok_or_else(|| {
                    Error::ShootingFailed(format!(
                        "integration diverges inside the bracket [{}, {}]",
                        a.slope, b.slope
                    ))
                })?
            }
        };
        if shot.residual.abs() < best.residual.abs() {
            best = shot;
        }
        if converged(&shot) {
            return finish(model, grid, shot.slope, shot.residual);
        }
        if shot.residual.signum() == fa.signum() {
            a = shot;
            fa = shot.residual;
            if retained == -1 {
                fb *= 0.5;
            }
            retained = -1;
        } else {
            b = shot;
            fb = shot.residual;
            if retained == 1 {
                fa *= 0.5;
            }
            retained = 1;
        }
        if b.slope - a.slope <= 4.0 * f64::EPSILON * (1.0 + a.slope.abs() + b.slope.abs()) {
            // bracket exhausted at machine precision
            return finish(model, grid, best.slope, best.residual);
        }
    }
    Err(Error::ShootingFailed(format!(
        "no convergence after {} iterations; bracket [{}, {}], best residual {:.3e}",
        cfg.max_iterations, a.slope, b.slope, best.residual
    )))
}

fn finish(model: &LagrangianModel, grid: &TimeGrid, slope0: f64, boundary_residual: f64) -> Result<ELSolution> {
    let traj = integrate_el(model, slope0, grid)?;
    let qt = traj.path.terminal();
    let natural_bc_residual = traj.terminal_velocity() - model.kernel.mean(grid.horizon(), qt)?;
    Ok(ELSolution {
        action: action(model, &traj.path)?,
        el_residual_max: el_residual_max(model, &traj.path)?,
        natural_bc_residual,
        boundary_residual,
        slope0,
        path: traj.path,
        velocity: traj.velocity,
    })
}

/// `½ Σ L(t_{i+½}, q̄ᵢ, q̇ᵢ) dt` with slopes and averaged values on midpoints.
pub fn action(model: &LagrangianModel, path: &DiscretePath) -> Result<f64> {
    let grid = path.grid();
    model.check_grid(grid)?;
    let dt = grid.dt();
    let q = path.values();
    let mut acc = 0.0;
    for i in 0..grid.steps() {
        let qbar = 0.5 * (q[i] + q[i + 1]);
        let qdot = (q[i + 1] - q[i]) / dt;
        acc += model.lagrangian(grid.midpoint(i), qbar, qdot)?;
    }
    Ok(0.5 * acc * dt)
}

/// Largest mismatch between centered second differences and the
/// Euler-Lagrange right-hand side over interior nodes.
pub fn el_residual_max(model: &LagrangianModel, path: &DiscretePath) -> Result<f64> {
    let grid = path.grid();
    model.check_grid(grid)?;
    let dt = grid.dt();
    let q = path.values();
    let mut worst: f64 = 0.0;
    for i in 1..grid.steps() {
        let qdd = (q[i + 1] - 2.0 * q[i] + q[i - 1]) / (dt * dt);
        let qd = (q[i + 1] - q[i - 1]) / (2.0 * dt);
        worst = worst.max((qdd - model.el_rhs(grid.node(i), q[i], qd)?).abs());
    }
    Ok(worst)
}

/// Outcome of minimizing the action over fixed terminal values.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TerminalScan {
    pub terminal: f64,
    pub action: f64,
    pub evaluated: usize,
    pub failed: usize,
}

/// Minimizes the action over fixed-endpoint solutions `q(T) = a`: a coarse
/// scan of `a` over `range` followed by golden-section refinement.
pub fn scan_terminal(
    model: &LagrangianModel,
    grid: &TimeGrid,
    cfg: &ShootingConfig,
    range: (f64, f64),
    points: usize,
) -> Result<TerminalScan> {
    if range.0.partial_cmp(&range.1) != Some(std::cmp::Ordering::Less) || points < 3 {
        return Err(Error::invalid("terminal scan needs lo < hi and at least 3 points"));
    }
    let mut failed = 0usize;
    let mut evaluated = 0usize;
    let mut eval = |a: f64| -> Result<Option<f64>> {
        evaluated += 1;
        match shoot(model, grid, BoundaryCondition::Fixed(a), cfg) {
            Ok(sol) => Ok(Some(sol.action)),
            Err(Error::ShootingFailed(_)) | Err(Error::IntegrationDiverged { .. }) => {
                failed += 1;
                Ok(None)
            }
            Err(e) => Err(e),
        }
    };
    let step = (range.1 - range.0) / (points - 1) as f64;
    let coarse: Vec<(f64, Option<f64>)> = (0..points)
        .map(|k| {
            let a = range.0 + step * k as f64;
            eval(a).map(|v| (a, v))
        })
        .collect::<Result<_>>()?;
    let (k_best, _) = coarse
        .iter()
        .enumerate()
        .filter_map(|(k, (_, v))| v.map(|v| (k, v)))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .ok_or_else(|| Error::ShootingFailed("every fixed-endpoint solve in the scan failed".into()))?;

    let (mut lo, mut hi) = (coarse[k_best].0 - step, coarse[k_best].0 + step);
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let penalized = |v: Option<f64>| v.unwrap_or(f64::INFINITY);
    let mut x1 = hi - ratio * (hi - lo);
    let mut x2 = lo + ratio * (hi - lo);
    let mut f1 = penalized(eval(x1)?);
    let mut f2 = penalized(eval(x2)?);
    while hi - lo > 1e-7 * (1.0 + lo.abs()) {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - ratio * (hi - lo);
            f1 = penalized(eval(x1)?);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + ratio * (hi - lo);
            f2 = penalized(eval(x2)?);
        }
    }
    let terminal = 0.5 * (lo + hi);
    let action = eval(terminal)?
        .ok_or_else(|| Error::ShootingFailed(format!("fixed-endpoint solve failed at a = {terminal}")))?;
    Ok(TerminalScan {
        terminal,
        action,
        evaluated,
        failed,
    })
}

fn find_bracket(samples: &mut [Shot]) -> Option<(Shot, Shot)> {
    samples.sort_by(|x, y| x.slope.total_cmp(&y.slope));
    let mut best: Option<(usize, usize)> = None;
    for i in 0..samples.len().saturating_sub(1) {
        if samples[i].residual.signum() != samples[i + 1].residual.signum() {
            let mid = 0.5 * (samples[i].slope + samples[i + 1].slope).abs();
            let better = match best {
                None => true,
                Some((bi, bj)) => mid < 0.5 * (samples[bi].slope + samples[bj].slope).abs(),
            };
            if better {
                best = Some((i, i + 1));
            }
        }
    }
    best.map(|(i, j)| (samples[i], samples[j]))
}
