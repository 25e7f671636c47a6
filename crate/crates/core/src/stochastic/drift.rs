use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::functionals::DriftKernel;
use crate::grid::{finite_difference, sobolev_norm_sq, DiscretePath, TimeGrid};
use crate::stats::{block_std_err, pairwise_sum, sample_variance, section_ranges, sectioned_mean, MeanEstimate};

use super::ensemble::BrownianEnsemble;

/// The drift `F` of a shift measure, `B = B̃ + F` with `B̃` Brownian under it.
#[derive(Debug, Clone)]
pub enum DriftProcessSpec {
    DeterministicPath(DiscretePath),
    /// `dF = f(t, B(t)) dt`.
    StateKernel(DriftKernel),
    /// One deterministic component per path, drawn independently of `B`.
    BernoulliMixture {
        components: Vec<DiscretePath>,
        probs: Vec<f64>,
    },
}

pub fn mixture_drift(components: Vec<DiscretePath>, probs: Vec<f64>) -> Result<DriftProcessSpec> {
    if components.len() < 2 {
        return Err(Error::invalid("a mixture needs at least two components"));
    }
    if components.len() != probs.len() {
        return Err(Error::invalid(format!(
            "{} components but {} probabilities",
            components.len(),
            probs.len()
        )));
    }
    if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::invalid("mixture probabilities must be non-negative"));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::invalid(format!("mixture probabilities sum to {total}, not 1")));
    }
    let grid = *components[0].grid();
    for c in &components[1..] {
        grid.check_same(c.grid(), "mixture components")?;
    }
    Ok(DriftProcessSpec::BernoulliMixture { components, probs })
}

impl DriftProcessSpec {
    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        match self {
            Self::DeterministicPath(p) => p.grid().check_same(grid, "drift"),
            Self::BernoulliMixture { components, .. } => components[0].grid().check_same(grid, "drift"),
            Self::StateKernel(k) => {
                if (k.horizon() - grid.horizon()).abs() > 1e-12 * grid.horizon() {
                    Err(Error::invalid("drift kernel horizon does not match ensemble grid"))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn component_index(probs: &[f64], u: f64) -> usize {
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        // u landed in rounding slack above the last positive weight
        probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    /// Drift slopes on the intervals of path `j`, evaluated on the Wiener
    /// path itself (the integrand of the Girsanov exponent).
    fn slopes_on_reference(&self, ens: &BrownianEnsemble, j: usize) -> Vec<f64> {
        let grid = ens.grid();
        match self {
            Self::DeterministicPath(p) => finite_difference(p).slopes().to_vec(),
            Self::StateKernel(k) => {
                let b = ens.path(j);
                (0..grid.steps()).map(|i| k.eval(grid.node(i), b[i])).collect()
            }
            Self::BernoulliMixture { components, probs } => {
                let c = Self::component_index(probs, ens.aux_uniform(j));
                finite_difference(&components[c]).slopes().to_vec()
            }
        }
    }

    /// Realized slopes of `F` under the shifted measure, simulating
    /// `B = B̃ + F` with the ensemble path as `B̃`.
    fn slopes_under_shift(&self, ens: &BrownianEnsemble, j: usize) -> Vec<f64> {
        match self {
            Self::StateKernel(k) => {
                let grid = ens.grid();
                let dt = grid.dt();
                let bt = ens.path(j);
                let mut x = 0.0;
                let mut out = Vec::with_capacity(grid.steps());
                for i in 0..grid.steps() {
                    let f = k.eval(grid.node(i), x);
                    out.push(f);
                    x += f * dt + (bt[i + 1] - bt[i]);
                }
                out
            }
            _ => self.slopes_on_reference(ens, j),
        }
    }
}

/// `log dμ/dμ₀` on path `j`: left-point `Σ fᵢΔBᵢ − ½ Σ fᵢ² dt`.
pub fn girsanov_logdensity(drift: &DriftProcessSpec, ens: &BrownianEnsemble, j: usize) -> Result<f64> {
    drift.check_grid(ens.grid())?;
    if j >= ens.len() {
        return Err(Error::invalid(format!("path index {j} out of range")));
    }
    Ok(logdensity_unchecked(drift, ens, j))
}

fn logdensity_unchecked(drift: &DriftProcessSpec, ens: &BrownianEnsemble, j: usize) -> f64 {
    let dt = ens.grid().dt();
    let b = ens.path(j);
    let f = drift.slopes_on_reference(ens, j);
    let ito: f64 = f.iter().zip(b.windows(2)).map(|(fi, w)| fi * (w[1] - w[0])).sum();
    let energy: f64 = f.iter().map(|fi| fi * fi).sum::<f64>() * dt;
    ito - 0.5 * energy
}

/// Ensemble mean of `dμ/dμ₀`; equals 1 for a true density.
pub fn girsanov_density_mean(drift: &DriftProcessSpec, ens: &BrownianEnsemble) -> Result<MeanEstimate> {
    drift.check_grid(ens.grid())?;
    let vals: Vec<f64> = (0..ens.len())
        .into_par_iter()
        .map(|j| logdensity_unchecked(drift, ens, j).exp())
        .collect();
    Ok(sectioned_mean(&vals))
}

/// KL divergence between the shift measures of `h1` and `h2`: `½‖h₁ − h₂‖²`.
pub fn kl_shift(h1: &DiscretePath, h2: &DiscretePath) -> Result<f64> {
    Ok(0.5 * sobolev_norm_sq(&h1.minus(h2)?))
}

/// Monte-Carlo `D_KL(μ_z ‖ μ*)` where `μ*` has Girsanov kernel `f`:
/// the ensemble mean of `½ Σ (żᵢ − f(tᵢ, Bᵢ + zᵢ))² dt`. A kernel that
/// ignores `x` enters through its interval means instead of `f(tᵢ)`.
pub fn kl_estimate(z: &DiscretePath, kernel: &DriftKernel, ens: &BrownianEnsemble) -> Result<MeanEstimate> {
    z.grid().check_same(ens.grid(), "kl_estimate")?;
    if (kernel.horizon() - z.grid().horizon()).abs() > 1e-12 * z.grid().horizon() {
        return Err(Error::invalid("kl_estimate: kernel horizon does not match grid"));
    }
    let grid = *z.grid();
    let dt = grid.dt();
    let zv = z.values();
    let slopes = finite_difference(z).slopes().to_vec();
    let means = kernel.interval_means(&grid);
    let vals: Vec<f64> = (0..ens.len())
        .into_par_iter()
        .map(|j| {
            let b = ens.path(j);
            let acc: f64 = (0..grid.steps())
                .map(|i| {
                    let f = match &means {
                        Some(m) => m[i],
                        None => kernel.eval(grid.node(i), b[i] + zv[i]),
                    };
                    let r = slopes[i] - f;
                    r * r
                })
                .sum();
            0.5 * acc * dt
        })
        .collect();
    if let Some(bad) = vals.iter().find(|v| !v.is_finite()) {
        return Err(Error::Evaluation(format!("kl_estimate: non-finite path value {bad}")));
    }
    Ok(sectioned_mean(&vals))
}

/// State-independence penalty `½ ∫ Var_μ(f(s)) ds`, zero exactly for
/// deterministic drifts.
pub fn penalty_d(drift: &DriftProcessSpec, ens: &BrownianEnsemble) -> Result<MeanEstimate> {
    drift.check_grid(ens.grid())?;
    let degenerate = match drift {
        DriftProcessSpec::DeterministicPath(_) => true,
        DriftProcessSpec::BernoulliMixture { probs, .. } => probs.contains(&1.0),
        DriftProcessSpec::StateKernel(_) => false,
    };
    if degenerate {
        return Ok(MeanEstimate {
            value: 0.0,
            std_err: 0.0,
        });
    }
    let grid = *ens.grid();
    let slopes: Vec<Vec<f64>> = (0..ens.len())
        .into_par_iter()
        .map(|j| drift.slopes_under_shift(ens, j))
        .collect();
    let integrated = |rows: &[Vec<f64>]| -> f64 {
        let per_interval: Vec<f64> = (0..grid.steps())
            .map(|i| {
                let col: Vec<f64> = rows.iter().map(|r| r[i]).collect();
                sample_variance(&col)
            })
            .collect();
        0.5 * pairwise_sum(&per_interval) * grid.dt()
    };
    let value = integrated(&slopes);
    let blocks: Vec<f64> = section_ranges(slopes.len())
        .into_iter()
        .map(|r| integrated(&slopes[r]))
        .collect();
    Ok(MeanEstimate {
        value,
        std_err: block_std_err(&blocks),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::polynomial::Polynomial;
    use crate::stochastic::sample_ensemble;

    fn grid(t: f64, n: usize) -> TimeGrid {
        TimeGrid::uniform(t, n).unwrap()
    }

    fn linear(g: TimeGrid, slope: f64) -> DiscretePath {
        DiscretePath::from_fn(g, |t| slope * t).unwrap()
    }

    #[test]
    fn zero_drift_has_zero_logdensity() {
        let g = grid(1.0, 20);
        let e = sample_ensemble(g, 50, 1).unwrap();
        let d = DriftProcessSpec::DeterministicPath(DiscretePath::zeros(g));
        for j in 0..50 {
            assert_eq!(girsanov_logdensity(&d, &e, j).unwrap(), 0.0);
        }
    }

    #[test]
    fn density_is_a_martingale() {
        let g = grid(1.0, 50);
        let e = sample_ensemble(g, 100_000, 4).unwrap();
        let plus = DriftProcessSpec::DeterministicPath(linear(g, 1.0));
        let est = girsanov_density_mean(&plus, &e).unwrap();
        assert!((est.value - 1.0).abs() < 4.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn logdensity_grid_mismatch() {
        let e = sample_ensemble(grid(1.0, 20), 5, 1).unwrap();
        let d = DriftProcessSpec::DeterministicPath(DiscretePath::zeros(grid(1.0, 10)));
        assert!(matches!(girsanov_logdensity(&d, &e, 0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn kl_shift_examples() {
        let g = grid(1.0, 10);
        assert!((kl_shift(&linear(g, 1.0), &DiscretePath::zeros(g)).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(kl_shift(&linear(g, 1.0), &linear(g, 1.0)).unwrap(), 0.0);
        let g2 = grid(2.0, 10);
        assert!((kl_shift(&linear(g2, 2.0), &linear(g2, 1.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!(kl_shift(&linear(g, 1.0), &linear(g2, 1.0)).is_err());
    }

    #[test]
    fn kl_estimate_deterministic_is_exact() {
        let g = grid(1.0, 40);
        let e = sample_ensemble(g, 64, 2).unwrap();
        let k = DriftKernel::deterministic_poly(Polynomial::constant(0.7), 1.0).unwrap();
        let f = linear(g, 0.7);
        assert!(kl_estimate(&f, &k, &e).unwrap().value < 1e-26);
        let z = DiscretePath::from_fn(g, |t| t.sin() - 0.2 * t * t).unwrap();
        let est = kl_estimate(&z, &k, &e).unwrap();
        let exact = kl_shift(&z, &f).unwrap();
        assert!((est.value - exact).abs() < 1e-12);
        assert!(est.std_err < 1e-12);
    }

    #[test]
    fn kl_estimate_vanishes_on_drift_path() {
        let g = grid(1.0, 50);
        let e = sample_ensemble(g, 32, 5).unwrap();
        let k = DriftKernel::deterministic_poly(Polynomial::new(vec![0.0, 2.0, -1.0]).unwrap(), 1.0).unwrap();
        let f = DiscretePath::from_fn(g, |t| t * t - t * t * t / 3.0).unwrap();
        assert!(kl_estimate(&f, &k, &e).unwrap().value < 1e-26);
        let z = DiscretePath::from_fn(g, |t| 0.3 * t).unwrap();
        let est = kl_estimate(&z, &k, &e).unwrap();
        assert!((est.value - kl_shift(&z, &f).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn kl_estimate_state_kernel_oracle() {
        let g = grid(1.0, 100);
        let e = sample_ensemble(g, 100_000, 8).unwrap();
        let k = DriftKernel::monomial(1.0, 1, 1.0).unwrap();
        let est = kl_estimate(&DiscretePath::zeros(g), &k, &e).unwrap();
        // ½ Σ tᵢ dt with left nodes, which is ½∫t dt − dt/4
        let exact = 0.25 - 0.01 / 4.0;
        assert!((est.value - exact).abs() < 4.0 * est.std_err, "{est:?}");
    }

    #[test]
    fn penalty_deterministic_is_zero() {
        let g = grid(1.0, 20);
        let e = sample_ensemble(g, 100, 3).unwrap();
        let p = penalty_d(&DriftProcessSpec::DeterministicPath(linear(g, 2.0)), &e).unwrap();
        assert_eq!(p.value, 0.0);
    }

    #[test]
    fn penalty_two_point_mixture() {
        let g = grid(1.0, 20);
        let e = sample_ensemble(g, 10_000, 5).unwrap();
        let m = mixture_drift(vec![linear(g, 1.0), linear(g, -1.0)], vec![0.5, 0.5]).unwrap();
        let p = penalty_d(&m, &e).unwrap();
        assert!((p.value - 0.5).abs() / 0.5 < 0.05, "{p:?}");
        assert!(p.value > 4.0 * p.std_err);
    }

    #[test]
    fn penalty_three_point_mixture() {
        let g = grid(2.0, 20);
        let e = sample_ensemble(g, 10_000, 6).unwrap();
        let m = mixture_drift(
            vec![linear(g, 0.0), linear(g, 1.0), linear(g, 2.0)],
            vec![1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0],
        )
        .unwrap();
        let p = penalty_d(&m, &e).unwrap();
        assert!((p.value - 2.0 / 3.0).abs() / (2.0 / 3.0) < 0.05, "{p:?}");
    }

    #[test]
    fn degenerate_mixture_is_deterministic() {
        let g = grid(1.0, 20);
        let e = sample_ensemble(g, 500, 7).unwrap();
        let m = mixture_drift(vec![linear(g, 1.0), linear(g, -1.0)], vec![1.0, 0.0]).unwrap();
        assert_eq!(penalty_d(&m, &e).unwrap().value, 0.0);
        let det = DriftProcessSpec::DeterministicPath(linear(g, 1.0));
        for j in 0..20 {
            assert_eq!(
                girsanov_logdensity(&m, &e, j).unwrap(),
                girsanov_logdensity(&det, &e, j).unwrap()
            );
        }
    }

    #[test]
    fn state_kernel_penalty_positive_and_growing() {
        let k1 = DriftKernel::monomial(1.0, 1, 1.0).unwrap();
        let k2 = DriftKernel::monomial(1.0, 1, 2.0).unwrap();
        let e1 = sample_ensemble(grid(1.0, 50), 5000, 9).unwrap();
        let e2 = sample_ensemble(grid(2.0, 100), 5000, 9).unwrap();
        let p1 = penalty_d(&DriftProcessSpec::StateKernel(k1), &e1).unwrap();
        let p2 = penalty_d(&DriftProcessSpec::StateKernel(k2), &e2).unwrap();
        assert!(p1.value > 4.0 * p1.std_err);
        assert!(p2.value > p1.value + 4.0 * (p1.std_err + p2.std_err));
    }

    #[test]
    fn mixture_validation() {
        let g = grid(1.0, 10);
        assert!(mixture_drift(vec![linear(g, 1.0)], vec![1.0]).is_err());
        assert!(mixture_drift(vec![linear(g, 1.0), linear(g, 0.0)], vec![0.6, 0.6]).is_err());
        assert!(mixture_drift(vec![linear(g, 1.0), linear(g, 0.0)], vec![1.2, -0.2]).is_err());
        assert!(mixture_drift(vec![linear(g, 1.0), linear(grid(1.0, 5), 0.0)], vec![0.5, 0.5]).is_err());
    }
}
