//! Gaussian expectations: exact moments for polynomials, Gauss-Hermite
//! quadrature for everything else.

use std::f64::consts::PI;
use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::polynomial::Polynomial;

pub const DEFAULT_ORDER: usize = 20;
pub const MAX_ORDER: usize = 64;

/// `E[X^k]` for `X ~ N(mean, var)`.
pub fn gaussian_moment(k: usize, mean: f64, var: f64) -> Result<f64> {
    check_var(var)?;
    Ok(moments(k, mean, var)[k])
}

/// All moments `M_0..=M_k` via `M_j = m·M_{j−1} + (j−1)·v·M_{j−2}`.
fn moments(k: usize, mean: f64, var: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(k + 1);
    out.push(1.0);
    if k >= 1 {
        out.push(mean);
    }
    for j in 2..=k {
        let next = mean * out[j - 1] + (j - 1) as f64 * var * out[j - 2];
        out.push(next);
    }
    out
}

fn check_var(var: f64) -> Result<()> {
    if var.is_nan() || var < 0.0 {
        Err(Error::invalid(format!("variance must be non-negative, got {var}")))
    } else {
        Ok(())
    }
}

/// `E[p(X)]` for `X ~ N(mean, var)`, exact up to rounding.
pub fn expect_polynomial(p: &Polynomial, mean: f64, var: f64) -> Result<f64> {
    check_var(var)?;
    if p.is_zero() {
        return Ok(0.0);
    }
    let m = moments(p.degree(), mean, var);
    Ok(p.coeffs().iter().zip(&m).map(|(c, mk)| c * mk).sum())
}

/// Physicists' Gauss-Hermite rule: `∫ h(u) e^{−u²} du ≈ Σ w_j h(u_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Nodes by Newton iteration on the orthonormal Hermite recurrence, started
/// from the usual asymptotic guesses.
pub fn gauss_hermite(order: usize) -> Result<QuadratureRule> {
    if !(1..=MAX_ORDER).contains(&order) {
        return Err(Error::invalid(format!(
            "Gauss-Hermite order must be in 1..={MAX_ORDER}, got {order}"
        )));
    }
    let n = order;
    let nf = n as f64;
    let pim4 = PI.powf(-0.25);
    let mut roots = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut z = 0.0f64;
    for i in 1..=n.div_ceil(2) {
        z = match i {
            1 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            2 => z - 1.14 * nf.powf(0.426) / z,
            3 => 1.86 * z - 0.86 * roots[0],
            4 => 1.91 * z - 0.91 * roots[1],
            _ => 2.0 * z - roots[i - 3],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 1..=n {
                let jf = j as f64;
                let p3 = p2;
                p2 = p1;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let step = p1 / pp;
            z -= step;
            if step.abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        if n % 2 == 1 && i == n.div_ceil(2) {
            z = 0.0;
        }
        roots[i - 1] = z;
        roots[n - i] = -z;
        weights[i - 1] = 2.0 / (pp * pp);
        weights[n - i] = weights[i - 1];
    }
    roots.reverse();
    weights.reverse();
    Ok(QuadratureRule { nodes: roots, weights })
}

/// The shared order-20 rule.
pub fn default_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| gauss_hermite(DEFAULT_ORDER).expect("default order is valid"))
}

/// `E[h(X)]` for `X ~ N(mean, var)` by quadrature; point evaluation when `var = 0`.
pub fn expect_function(h: impl Fn(f64) -> f64, mean: f64, var: f64, rule: &QuadratureRule) -> Result<f64> {
    check_var(var)?;
    if var == 0.0 {
        let v = h(mean);
        return if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Evaluation(format!("h({mean}) = {v}")))
        };
    }
    let scale = (2.0 * var).sqrt();
    let mut acc = 0.0;
    for (u, w) in rule.nodes.iter().zip(&rule.weights) {
        let x = mean + scale * u;
        let v = h(x);
        if !v.is_finite() {
            return Err(Error::Evaluation(format!("h({x}) = {v}")));
        }
        acc += w * v;
    }
    Ok(acc / PI.sqrt())
}
