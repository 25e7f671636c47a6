use rayon::prelude::*;
use serde::Serialize;

use crate::error::Result;
use crate::functionals::DriftKernel;
use crate::grid::TimeGrid;

use super::ensemble::BrownianEnsemble;

/// States beyond this magnitude count as a blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e50;

/// Euler paths of `dX̃ = m(t, X̃) dt + dB`. A path that blows up keeps its
/// values up to the blow-up node and is NaN afterwards.
#[derive(Debug, Clone)]
pub struct XTildeSet {
    pub grid: TimeGrid,
    pub paths: Vec<Vec<f64>>,
    pub blowup_times: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupSummary {
    pub paths: usize,
    pub blown_up: usize,
    pub fraction: f64,
    pub earliest_time: Option<f64>,
}

impl XTildeSet {
    pub fn summary(&self) -> BlowupSummary {
        let times: Vec<f64> = self.blowup_times.iter().flatten().copied().collect();
        BlowupSummary {
            paths: self.paths.len(),
            blown_up: times.len(),
            fraction: times.len() as f64 / self.paths.len() as f64,
            earliest_time: times.iter().copied().reduce(f64::min),
        }
    }

    pub fn terminal_values(&self) -> Vec<f64> {
        self.paths
            .iter()
            .map(|p| p[self.grid.steps()])
            .filter(|v| v.is_finite())
            .collect()
    }
}

pub fn simulate_xtilde(kernel: &DriftKernel, ens: &BrownianEnsemble) -> Result<XTildeSet> {
    let grid = *ens.grid();
    if (kernel.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon() {
        return Err(crate::error::Error::invalid(
            "simulate_xtilde: kernel horizon does not match grid",
        ));
    }
    let dt = grid.dt();
    let results: Vec<(Vec<f64>, Option<f64>)> = (0..ens.len())
        .into_par_iter()
        .map(|j| {
            let b = ens.path(j);
            let mut x = vec![f64::NAN; grid.len()];
            x[0] = 0.0;
            for i in 0..grid.steps() {
                let drift = kernel.mean(grid.node(i), x[i])?;
                let next = x[i] + drift * dt + (b[i + 1] - b[i]);
                if !next.is_finite() || next.abs() > BLOWUP_THRESHOLD {
                    return Ok((x, Some(grid.node(i + 1))));
                }
                x[i + 1] = next;
            }
            Ok((x, None))
        })
        .collect::<Result<_>>()?;
    let (paths, blowup_times) = results.into_iter().unzip();
    Ok(XTildeSet {
        grid,
        paths,
        blowup_times,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::{sample_variance, sectioned_mean};
    use crate::stochastic::sample_ensemble;

    #[test]
    fn zero_kernel_reproduces_brownian_paths() {
        let g = TimeGrid::uniform(1.0, 50).unwrap();
        let e = sample_ensemble(g, 20, 1).unwrap();
        let x = simulate_xtilde(&DriftKernel::zero(1.0).unwrap(), &e).unwrap();
        for j in 0..20 {
            assert_eq!(x.paths[j].as_slice(), e.path(j));
        }
        assert_eq!(x.summary().blown_up, 0);
    }

    #[test]
    fn linear_kernel_gives_growing_variance() {
        let g = TimeGrid::uniform(1.0, 200).unwrap();
        let e = sample_ensemble(g, 20_000, 2).unwrap();
        let x = simulate_xtilde(&DriftKernel::monomial(1.0, 1, 1.0).unwrap(), &e).unwrap();
        let term = x.terminal_values();
        let est = sectioned_mean(&term);
        assert!(est.value.abs() < 4.0 * est.std_err, "{est:?}");
        // dX = X dt + dB has Var X(1) = (e² − 1)/2 ≈ 3.19
        let var = sample_variance(&term);
        assert!(var > 1.0);
        assert!((var - (1f64.exp().powi(2) - 1.0) / 2.0).abs() < 0.2, "var={var}");
    }

    #[test]
    fn quadratic_kernel_reports_blowups() {
        let g = TimeGrid::uniform(3.0, 600).unwrap();
        let e = sample_ensemble(g, 2000, 3).unwrap();
        let x = simulate_xtilde(&DriftKernel::monomial(1.0, 2, 3.0).unwrap(), &e).unwrap();
        let s = x.summary();
        assert!(s.blown_up > 0, "{s:?}");
        assert!(s.fraction <= 1.0);
        for (p, t) in x.paths.iter().zip(&x.blowup_times) {
            assert_eq!(p[g.steps()].is_nan(), t.is_some());
        }
    }
}
