//! Sample-average minimization of the KL objective over discretized shifts.
//!
//! With the ensemble frozen, `J(z) = (1/M) Σⱼ ½ Σᵢ (żᵢ − f(tᵢ, B_{j,i} + zᵢ))² dt`
//! is a deterministic function of the node values `z₁..zₙ`. Descent
//! directions are gradients taken in the Cameron-Martin metric (the inverse
//! of the discrete `½∫ż²` Hessian), which keeps the step size independent
//! of the grid resolution.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::DriftKernel;
use crate::grid::{DiscretePath, TimeGrid};
use crate::stats::pairwise_sum;

use super::drift::kl_estimate;
use super::ensemble::BrownianEnsemble;

const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimizerConfig {
    pub steps: usize,
    /// Initial step length of every line search.
    pub learn_rate: f64,
    /// Relative stopping tolerance on the metric gradient norm.
    pub tolerance: f64,
}

impl Default for MinimizerConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            learn_rate: 1.0,
            tolerance: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MinimizeReport {
    pub path: DiscretePath,
    pub objective_trace: Vec<f64>,
    /// Standard error of the objective at the final path.
    pub mc_std_err: f64,
    pub final_objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The frozen-sample objective and its exact gradient.
pub struct SampleObjective<'a> {
    kernel: &'a DriftKernel,
    ens: &'a BrownianEnsemble,
    means: Option<Vec<f64>>,
}

impl<'a> SampleObjective<'a> {
    pub fn new(kernel: &'a DriftKernel, ens: &'a BrownianEnsemble) -> Result<Self> {
        let h = ens.grid().horizon();
        if (kernel.horizon() - h).abs() > 1e-12 * h {
            return Err(Error::invalid("objective: kernel horizon does not match ensemble grid"));
        }
        let means = kernel.interval_means(ens.grid());
        Ok(Self { kernel, ens, means })
    }

    fn drift(&self, i: usize, t: f64, x: f64) -> f64 {
        match &self.means {
            Some(m) => m[i],
            None => self.kernel.eval(t, x),
        }
    }

    pub fn grid(&self) -> &TimeGrid {
        self.ens.grid()
    }

    fn chunks(&self) -> Vec<std::ops::Range<usize>> {
        (0..self.ens.len().div_ceil(CHUNK))
            .map(|c| c * CHUNK..((c + 1) * CHUNK).min(self.ens.len()))
            .collect()
    }

    /// `J(z)`, with `z` given on all `n + 1` nodes.
    pub fn value(&self, z: &[f64]) -> f64 {
        let grid = *self.grid();
        let dt = grid.dt();
        let parts: Vec<f64> = self
            .chunks()
            .into_par_iter()
            .map(|range| {
                let mut acc = 0.0;
                for j in range {
                    let b = self.ens.path(j);
                    let mut path = 0.0;
                    for i in 0..grid.steps() {
                        let r = (z[i + 1] - z[i]) / dt - self.drift(i, grid.node(i), b[i] + z[i]);
                        path += r * r;
                    }
                    acc += path;
                }
                acc
            })
            .collect();
        0.5 * dt * pairwise_sum(&parts) / self.ens.len() as f64
    }

    /// `∂J/∂z_k` for `k = 1..=n` (the fixed `z₀` is excluded).
    pub fn gradient(&self, z: &[f64]) -> Result<Vec<f64>> {
        let grid = *self.grid();
        let n = grid.steps();
        let dt = grid.dt();
        let parts: Vec<Vec<f64>> = self
            .chunks()
            .into_par_iter()
            .map(|range| {
                let mut g = vec![0.0; n + 1];
                let mut r = vec![0.0; n];
                for j in range {
                    let b = self.ens.path(j);
                    for i in 0..n {
                        let x = b[i] + z[i];
                        r[i] = (z[i + 1] - z[i]) / dt - self.drift(i, grid.node(i), x);
                    }
                    // ∂rᵢ/∂z_{i+1} = 1/dt, ∂rᵢ/∂zᵢ = −1/dt − ∂ₓf(tᵢ, ·)
                    for i in 0..n {
                        let fx = self.kernel.eval_dx(grid.node(i), b[i] + z[i])?;
                        g[i + 1] += r[i];
                        g[i] -= r[i] * (1.0 + dt * fx);
                    }
                }
                Ok(g)
            })
            .collect::<Result<_>>()?;
        let m = self.ens.len() as f64;
        Ok((1..=n).map(|k| parts.iter().map(|p| p[k]).sum::<f64>() / m).collect())
    }
}

/// Solves `K p = g` where `K/dt` is the Hessian of `½ Σ żᵢ² dt` in
/// `z₁..zₙ`: tridiagonal with 2 on the diagonal (1 in the last row) and −1 off it.
fn metric_solve(g: &[f64], dt: f64) -> Vec<f64> {
    let n = g.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let diag = |k: usize| if k + 1 == n { 1.0 } else { 2.0 };
    c[0] = -1.0 / diag(0);
    d[0] = g[0] * dt / diag(0);
    for k in 1..n {
        let denom = diag(k) + c[k - 1];
        c[k] = -1.0 / denom;
        d[k] = (g[k] * dt + d[k - 1]) / denom;
    }
    let mut p = vec![0.0; n];
    p[n - 1] = d[n - 1];
    for k in (0..n - 1).rev() {
        p[k] = d[k] - c[k] * p[k + 1];
    }
    p
}

pub fn minimize_action_mc(
    kernel: &DriftKernel,
    ens: &BrownianEnsemble,
    init: &DiscretePath,
    cfg: &MinimizerConfig,
) -> Result<MinimizeReport> {
    init.grid().check_same(ens.grid(), "minimizer init")?;
    if !(cfg.learn_rate > 0.0 && cfg.learn_rate.is_finite()) {
        return Err(Error::invalid("learn_rate must be positive"));
    }
    let objective = SampleObjective::new(kernel, ens)?;
    let dt = ens.grid().dt();
    let mut z = init.values().to_vec();
    let mut value = objective.value(&z);
    if !value.is_finite() {
        return Err(Error::Diverged(format!("objective at the initial path is {value}")));
    }
    let mut trace = vec![value];
    let mut converged = false;
    let mut iterations = 0;
    let mut norm = f64::INFINITY;

    while iterations < cfg.steps {
        let g = objective.gradient(&z)?;
        let p = metric_solve(&g, dt);
        let slope: f64 = g.iter().zip(&p).map(|(a, b)| a * b).sum();
        norm = slope.max(0.0).sqrt();
        if !norm.is_finite() {
            return Err(Error::Diverged("non-finite gradient".into()));
        }
        if norm <= cfg.tolerance * (1.0 + value.abs()) {
            converged = true;
            break;
        }
        let mut step = cfg.learn_rate;
        let mut accepted = None;
        for _ in 0..60 {
            let mut trial = z.clone();
            for (k, pk) in p.iter().enumerate() {
                trial[k + 1] -= step * pk;
            }
            let v = objective.value(&trial);
            if v.is_finite() && v <= value - 1e-4 * step * slope {
                accepted = Some((trial, v));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((trial, v)) => {
                z = trial;
                value = v;
                trace.push(v);
            }
            // no sufficient decrease is possible at this precision
            None => break,
        }
    }

    let path = DiscretePath::new(*ens.grid(), z)?;
    let est = kl_estimate(&path, kernel, ens)?;
    Ok(MinimizeReport {
        path,
        objective_trace: trace,
        mc_std_err: est.std_err,
        final_objective: est.value,
        gradient_norm: norm,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::Polynomial;
    use crate::stochastic::sample_ensemble;

    #[test]
    fn metric_solve_inverts_tridiagonal() {
        let dt = 0.1;
        let g = vec![1.0, -2.0, 0.5, 3.0];
        let p = metric_solve(&g, dt);
        let n = g.len();
        for k in 0..n {
            let diag = if k + 1 == n { 1.0 } else { 2.0 };
            let mut kp = diag * p[k];
            if k > 0 {
                kp -= p[k - 1];
            }
            if k + 1 < n {
                kp -= p[k + 1];
            }
            assert!((kp / dt - g[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_kernel_shrinks_to_zero() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let e = sample_ensemble(g, 100, 1).unwrap();
        let init = DiscretePath::from_fn(g, |t| (3.0 * t).sin() + t).unwrap();
        let r = minimize_action_mc(&DriftKernel::zero(1.0).unwrap(), &e, &init, &MinimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.path.sup_norm() < 1e-6);
    }

    #[test]
    fn deterministic_kernel_recovers_drift() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let e = sample_ensemble(g, 1000, 2).unwrap();
        let k = DriftKernel::deterministic_poly(Polynomial::constant(1.0), 1.0).unwrap();
        let r = minimize_action_mc(&k, &e, &DiscretePath::zeros(g), &MinimizerConfig::default()).unwrap();
        let target = DiscretePath::from_fn(g, |t| t).unwrap();
        assert!(r.converged);
        assert!(r.path.sup_distance(&target).unwrap() < 0.02);
    }

    #[test]
    fn linear_kernel_goes_to_zero() {
        let g = TimeGrid::uniform(1.0, 100).unwrap();
        let e = sample_ensemble(g, 10_000, 3).unwrap();
        let k = DriftKernel::monomial(1.0, 1, 1.0).unwrap();
        let init = DiscretePath::from_fn(g, |t| 0.5 * t).unwrap();
        let r = minimize_action_mc(&k, &e, &init, &MinimizerConfig::default()).unwrap();
        assert!(r.converged);
        assert!(r.path.sup_norm() < 0.03, "{}", r.path.sup_norm());
    }

    #[test]
    fn trace_is_non_increasing_and_deterministic() {
        let g = TimeGrid::uniform(1.0, 40).unwrap();
        let e = sample_ensemble(g, 2000, 4).unwrap();
        let k = DriftKernel::monomial(1.0, 2, 1.0).unwrap();
        let a = minimize_action_mc(&k, &e, &DiscretePath::zeros(g), &MinimizerConfig::default()).unwrap();
        let b = minimize_action_mc(&k, &e, &DiscretePath::zeros(g), &MinimizerConfig::default()).unwrap();
        assert!(a.objective_trace.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(a.objective_trace, b.objective_trace);
        assert_eq!(a.path, b.path);
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let g = TimeGrid::uniform(1.0, 30).unwrap();
        let e = sample_ensemble(g, 500, 5).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for k in [
            DriftKernel::monomial(1.0, 1, 1.0).unwrap(),
            DriftKernel::monomial(1.0, 2, 1.0).unwrap(),
            DriftKernel::deterministic_poly(Polynomial::new(vec![1.0, -0.5]).unwrap(), 1.0).unwrap(),
        ] {
            let obj = SampleObjective::new(&k, &e).unwrap();
            for _ in 0..5 {
                let mut z: Vec<f64> = (0..=30).map(|_| rng.random_range(-0.5..0.5)).collect();
                z[0] = 0.0;
                let grad = obj.gradient(&z).unwrap();
                let node = rng.random_range(1..=30);
                let h = 1e-5;
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp[node] += h;
                zm[node] -= h;
                let fd = (obj.value(&zp) - obj.value(&zm)) / (2.0 * h);
                let an = grad[node - 1];
                assert!(
                    (fd - an).abs() <= 1e-4 * fd.abs().max(an.abs()),
                    "{k:?} node {node}: {fd} vs {an}"
                );
            }
        }
    }

    #[test]
    fn rejects_mismatched_init() {
        let e = sample_ensemble(TimeGrid::uniform(1.0, 20).unwrap(), 10, 1).unwrap();
        let init = DiscretePath::zeros(TimeGrid::uniform(1.0, 10).unwrap());
        let k = DriftKernel::zero(1.0).unwrap();
        assert!(minimize_action_mc(&k, &e, &init, &MinimizerConfig::default()).is_err());
    }
}
