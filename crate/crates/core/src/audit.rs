//! Sampling audits of the existence and sufficiency hypotheses.
//!
//! Everything here is heuristic evidence gathered on a finite box, never a
//! proof. The audited integrand is the action density `ℓ = ½L`, so that the
//! action is `∫ℓ dt`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clark_ocone::ito_kernel;
use crate::error::{Error, Result};
use crate::functionals::{CostFunctional, DriftKernel};
use crate::grid::TimeGrid;
use crate::polynomial::Polynomial;
use crate::stats::{sectioned_mean, MeanEstimate};
use crate::stochastic::sample_ensemble;
use crate::variational::LagrangianModel;

const AUDIT_SEED: u64 = 0xa0d17;
const HESSIAN_STEP: f64 = 1e-3;
const EIGEN_TOLERANCE: f64 = 1e-8;
/// Brownian paths behind the finite-entropy estimate.
const ENTROPY_PATHS: usize = 4000;
const ENTROPY_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditBox {
    pub t_range: (f64, f64),
    pub x_range: (f64, f64),
    pub qdot_range: (f64, f64),
}

impl AuditBox {
    /// `t ∈ [0, T]`, `x, q̇ ∈ [−r, r]`.
    pub fn symmetric(horizon: f64, radius: f64) -> Self {
        Self {
            t_range: (0.0, horizon),
            x_range: (-radius, radius),
            qdot_range: (-radius, radius),
        }
    }

    /// Same box with the x- and q̇-ranges doubled about their centres.
    fn widened(&self) -> Self {
        let double = |(lo, hi): (f64, f64)| {
            let mid = 0.5 * (lo + hi);
            (mid - (hi - lo), mid + (hi - lo))
        };
        Self {
            x_range: double(self.x_range),
            qdot_range: double(self.qdot_range),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, (lo, hi)) in [("t", self.t_range), ("x", self.x_range), ("qdot", self.qdot_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid(format!(
                    "audit box {name}-range [{lo}, {hi}] is not a finite interval"
                )));
            }
        }
        if self.t_range.0 < 0.0 {
            return Err(Error::invalid("audit box starts before t = 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum AuditTarget<'a> {
    Kernel(&'a DriftKernel),
    /// `C = ∫g(B)dt + G(B(T))`; the Lagrangian checks run on the kernel
    /// the solver would use for it.
    Cost {
        running: &'a Polynomial,
        terminal: &'a Polynomial,
        horizon: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub coercivity_ok: bool,
    pub alpha: f64,
    pub beta: f64,
    /// `β` re-estimated on a box with doubled x- and q̇-ranges.
    pub beta_widened: f64,
    pub joint_convexity_ok: bool,
    /// Smallest Hessian eigenvalue over the samples, relative to `max(1, |ℓ|)`.
    pub worst_eigenvalue: f64,
    pub lipschitz_g: Option<f64>,
    pub lipschitz_terminal: Option<f64>,
    pub bounded_below_ok: bool,
    pub entropy_estimate: Option<MeanEstimate>,
    pub entropy_suspect: bool,
    pub notes: Vec<String>,
}

struct Sample {
    t: f64,
    x: f64,
    qdot: f64,
}

fn sample_points(bx: &AuditBox, samples: usize) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(AUDIT_SEED);
    let mut pts = Vec::with_capacity(samples + 8);
    for &t in &[bx.t_range.0, bx.t_range.1] {
        for &x in &[bx.x_range.0, bx.x_range.1] {
            for &qdot in &[bx.qdot_range.0, bx.qdot_range.1] {
                pts.push(Sample { t, x, qdot });
            }
        }
    }
    let draw = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    for _ in 0..samples {
        let t = draw(&mut rng, bx.t_range);
        let x = draw(&mut rng, bx.x_range);
        let qdot = draw(&mut rng, bx.qdot_range);
        pts.push(Sample { t, x, qdot });
    }
    pts
}

fn density(model: &LagrangianModel, t: f64, q: f64, qdot: f64) -> Result<f64> {
    Ok(0.5 * model.lagrangian(t, q, qdot)?)
}

/// `max(α q̇² − ℓ)` over the box, with `α` half the `q̇²` coefficient of `ℓ`.
fn coercivity_beta(model: &LagrangianModel, bx: &AuditBox, samples: usize, alpha: f64) -> Result<f64> {
    let mut beta: f64 = 0.0;
    for s in sample_points(bx, samples) {
        beta = beta.max(alpha * s.qdot * s.qdot - density(model, s.t, s.x, s.qdot)?);
        // the worst velocity for a quadratic-in-q̇ density is q̇ = 2m
        let q_star = 2.0 * model.kernel().mean(s.t, s.x)?;
        if (bx.qdot_range.0..=bx.qdot_range.1).contains(&q_star) {
            beta = beta.max(alpha * q_star * q_star - density(model, s.t, s.x, q_star)?);
        }
    }
    Ok(beta)
}

fn worst_hessian_eigenvalue(model: &LagrangianModel, bx: &AuditBox, samples: usize) -> Result<f64> {
    let h = HESSIAN_STEP;
    let mut worst = f64::INFINITY;
    for s in sample_points(bx, samples) {
        let l = |dq: f64, dv: f64| density(model, s.t, s.x + dq, s.qdot + dv);
        let l0 = l(0.0, 0.0)?;
        let lqq = (l(h, 0.0)? - 2.0 * l0 + l(-h, 0.0)?) / (h * h);
        let lvv = (l(0.0, h)? - 2.0 * l0 + l(0.0, -h)?) / (h * h);
        let lqv = (l(h, h)? - l(h, -h)? - l(-h, h)? + l(-h, -h)?) / (4.0 * h * h);
        let mean = 0.5 * (lqq + lvv);
        let radius = (0.25 * (lqq - lvv).powi(2) + lqv * lqv).sqrt();
        worst = worst.min((mean - radius) / l0.abs().max(1.0));
    }
    Ok(worst)
}

fn lipschitz(p: &Polynomial, (lo, hi): (f64, f64), samples: usize) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    let h = (hi - lo) / samples as f64;
    (0..samples)
        .map(|i| {
            let a = lo + h * i as f64;
            ((p.eval(a + h) - p.eval(a)) / h).abs()
        })
        .fold(0.0, f64::max)
}

/// `E[e^{−C}|C|]` under the Wiener measure on a fixed small ensemble.
fn entropy_estimate(running: &Polynomial, terminal: &Polynomial, horizon: f64) -> Result<MeanEstimate> {
    let grid = TimeGrid::uniform(horizon, ENTROPY_STEPS)?;
    let ens = sample_ensemble(grid, ENTROPY_PATHS, AUDIT_SEED)?;
    let cost = CostFunctional::integral_terminal(running.clone(), terminal.clone(), horizon)?;
    let vals = ens
        .iter()
        .map(|b| cost.evaluate_path(&grid, b).map(|c| (-c).exp() * c.abs()))
        .collect::<Result<Vec<f64>>>()?;
    Ok(sectioned_mean(&vals))
}

/// Scans the box for evidence on coercivity, joint convexity, Lipschitz
/// continuity and lower bounds.
pub fn audit_hypotheses(target: AuditTarget<'_>, bx: &AuditBox, samples: usize) -> Result<AuditReport> {
    bx.validate()?;
    if samples < 100 {
        return Err(Error::invalid(format!(
            "audit needs at least 100 samples, got {samples}"
        )));
    }
    let mut notes = vec!["heuristic: sampled evidence on a finite box, not a proof".to_string()];
    let (kernel, cost) = match target {
        AuditTarget::Kernel(k) => (k.clone(), None),
        AuditTarget::Cost {
            running,
            terminal,
            horizon,
        } => {
            let k = ito_kernel(running, terminal, horizon)?.kernel.negated();
            notes.push("Lagrangian checks use the negated Itô kernel of the cost".into());
            (k, Some((running, terminal, horizon)))
        }
    };
    if bx.t_range.1 > kernel.horizon() * (1.0 + 1e-12) {
        return Err(Error::invalid(format!(
            "audit box reaches t = {} beyond the horizon {}",
            bx.t_range.1,
            kernel.horizon()
        )));
    }
    let model = LagrangianModel::new(kernel);

    let alpha = 0.25;
    let beta = coercivity_beta(&model, bx, samples, alpha)?;
    let beta_widened = coercivity_beta(&model, &bx.widened(), samples, alpha)?;
    let coercivity_ok = beta.is_finite() && beta_widened <= beta * (1.0 + 1e-9) + 1e-12;
    if !coercivity_ok {
        notes.push(format!(
            "beta grows from {beta:.4e} to {beta_widened:.4e} when the box doubles"
        ));
    }

    let worst_eigenvalue = worst_hessian_eigenvalue(&model, bx, samples)?;
    let joint_convexity_ok = worst_eigenvalue >= -EIGEN_TOLERANCE;

    let (lipschitz_g, lipschitz_terminal, bounded_below_ok, entropy, entropy_suspect) = match cost {
        None => (None, None, true, None, false),
        Some((g, big_g, horizon)) => {
            let bounded = g.is_bounded_below() && big_g.is_bounded_below();
            let est = entropy_estimate(g, big_g, horizon)?;
            let noisy = !est.value.is_finite() || est.std_err > 0.25 * est.value.abs().max(1e-12);
            let suspect = !bounded || noisy;
            if suspect {
                notes.push("finite-entropy estimate may diverge: cost unbounded below or noisy".into());
            }
            (
                Some(lipschitz(g, bx.x_range, samples)),
                Some(lipschitz(big_g, bx.x_range, samples)),
                bounded,
                Some(est),
                suspect,
            )
        }
    };

    Ok(AuditReport {
        samples,
        coercivity_ok,
        alpha,
        beta,
        beta_widened,
        joint_convexity_ok,
        worst_eigenvalue,
        lipschitz_g,
        lipschitz_terminal,
        bounded_below_ok,
        entropy_estimate: entropy,
        entropy_suspect,
        notes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_kernel_is_jointly_convex() {
        let k = DriftKernel::monomial(1.0, 1, 1.0).unwrap();
        let r = audit_hypotheses(AuditTarget::Kernel(&k), &AuditBox::symmetric(1.0, 3.0), 200).unwrap();
        assert!(r.joint_convexity_ok, "{r:?}");
        assert!(r.worst_eigenvalue.abs() < 1e-6);
        assert!(r.notes[0].starts_with("heuristic"));
    }

    #[test]
    fn deterministic_kernel_is_coercive() {
        let f = Polynomial::new(vec![0.5, 1.0]).unwrap();
        let k = DriftKernel::deterministic_poly(f, 1.0).unwrap();
        let r = audit_hypotheses(AuditTarget::Kernel(&k), &AuditBox::symmetric(1.0, 4.0), 300).unwrap();
        assert!(r.coercivity_ok);
        assert_eq!(r.alpha, 0.25);
        // max f² / 2 over t ∈ [0, 1]
        assert!((r.beta - 1.5f64.powi(2) / 2.0).abs() < 1e-12, "{}", r.beta);
        assert!(r.joint_convexity_ok);
    }

    #[test]
    fn quadratic_kernel_flags() {
        let k = DriftKernel::monomial(1.0, 2, 1.0).unwrap();
        let r = audit_hypotheses(AuditTarget::Kernel(&k), &AuditBox::symmetric(1.0, 3.0), 200).unwrap();
        assert!(!r.coercivity_ok);
        assert!(!r.joint_convexity_ok);
    }

    #[test]
    fn quadratic_cost_lipschitz_grows() {
        let g = Polynomial::monomial(1.0, 2).unwrap();
        let zero = Polynomial::zero();
        let target = AuditTarget::Cost {
            running: &g,
            terminal: &zero,
            horizon: 1.0,
        };
        let small = audit_hypotheses(target, &AuditBox::symmetric(1.0, 1.0), 100).unwrap();
        let large = audit_hypotheses(target, &AuditBox::symmetric(1.0, 4.0), 100).unwrap();
        assert!(large.lipschitz_g.unwrap() > 3.0 * small.lipschitz_g.unwrap());
        assert!(small.bounded_below_ok && large.bounded_below_ok);
        assert!(!small.entropy_suspect);
        assert_eq!(small.lipschitz_terminal, Some(0.0));
    }

    #[test]
    fn cubic_cost_is_suspect() {
        let g = Polynomial::monomial(1.0, 3).unwrap();
        let zero = Polynomial::zero();
        let r = audit_hypotheses(
            AuditTarget::Cost {
                running: &g,
                terminal: &zero,
                horizon: 1.0,
            },
            &AuditBox::symmetric(1.0, 2.0),
            100,
        )
        .unwrap();
        assert!(!r.bounded_below_ok);
        assert!(r.entropy_suspect);
    }

    #[test]
    fn rejects_bad_input() {
        let k = DriftKernel::zero(1.0).unwrap();
        assert!(audit_hypotheses(AuditTarget::Kernel(&k), &AuditBox::symmetric(1.0, 1.0), 50).is_err());
        assert!(audit_hypotheses(AuditTarget::Kernel(&k), &AuditBox::symmetric(2.0, 1.0), 100).is_err());
        let bad = AuditBox {
            x_range: (1.0, -1.0),
            ..AuditBox::symmetric(1.0, 1.0)
        };
        assert!(audit_hypotheses(AuditTarget::Kernel(&k), &bad, 100).is_err());
    }

    #[test]
    fn audit_is_deterministic() {
        let k = DriftKernel::monomial(1.0, 2, 1.0).unwrap();
        let bx = AuditBox::symmetric(1.0, 2.0);
        let a = audit_hypotheses(AuditTarget::Kernel(&k), &bx, 150).unwrap();
        let b = audit_hypotheses(AuditTarget::Kernel(&k), &bx, 150).unwrap();
        assert_eq!(a.worst_eigenvalue.to_bits(), b.worst_eigenvalue.to_bits());
        assert_eq!(a.beta.to_bits(), b.beta.to_bits());
    }
}
