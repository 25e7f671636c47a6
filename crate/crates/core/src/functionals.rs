//! Drift kernels `f(t, x)` and cost functionals, plus the three Gaussian
//! fields the rest of the crate consumes:
//!
//! * `m(t, x)   = E[f(t, N)]`
//! * `s(t, x)   = E[f(t, N)²]`
//! * `ffx(t, x) = E[f(t, N) · ∂ₓf(t, N)]`
//!
//! with `N ~ Normal(x, t)`. Under the Wiener measure `B(t) ~ Normal(0, t)`,
//! so every expectation over paths at a fixed time collapses to one of these.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::gaussian::{default_rule, expect_function};
use crate::grid::{trapezoid, TimeGrid};
use crate::polynomial::{Polynomial, MAX_DEGREE};

/// Highest power of `x` allowed in a [`KernelForm::SpacePoly`].
pub const MAX_SPACE_DEGREE: usize = 8;

pub type ScalarFn = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum KernelForm {
    /// `f(t, x) = p(t)`.
    DeterministicPoly(Polynomial),
    /// `f(t, x) = Σ_k a_k(t) x^k`.
    SpacePoly(Vec<Polynomial>),
    /// Black-box `f` and optional `∂ₓf`. Both must be safe to call concurrently.
    Callback {
        f: ScalarFn,
        f_x: Option<ScalarFn>,
        state_independent: bool,
    },
}

/// A Markovian drift kernel on `[0, T]`.
#[derive(Clone)]
pub struct DriftKernel {
    horizon: f64,
    form: KernelForm,
}

impl fmt::Debug for DriftKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let form = match &self.form {
            KernelForm::DeterministicPoly(p) => format!("DeterministicPoly({p})"),
            KernelForm::SpacePoly(a) => format!("SpacePoly({a:?})"),
            KernelForm::Callback { f_x, .. } => {
                format!("Callback(f_x: {})", if f_x.is_some() { "yes" } else { "no" })
            }
        };
        write!(f, "DriftKernel {{ horizon: {}, {form} }}", self.horizon)
    }
}

fn check_horizon(horizon: f64) -> Result<()> {
    if horizon.is_finite() && horizon > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "kernel horizon must be positive, got {horizon}"
        )))
    }
}

impl DriftKernel {
    pub fn deterministic_poly(p: Polynomial, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self {
            horizon,
            form: KernelForm::DeterministicPoly(p),
        })
    }

    /// `coeffs[k]` is the time polynomial multiplying `x^k`.
    pub fn space_poly(mut coeffs: Vec<Polynomial>, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        while coeffs.last().is_some_and(Polynomial::is_zero) {
            coeffs.pop();
        }
        if coeffs.len() > MAX_SPACE_DEGREE + 1 {
            return Err(Error::invalid(format!(
                "space degree {} exceeds cap {MAX_SPACE_DEGREE}",
                coeffs.len() - 1
            )));
        }
        Ok(Self {
            horizon,
            form: KernelForm::SpacePoly(coeffs),
        })
    }

    pub fn callback(horizon: f64, f: ScalarFn, f_x: Option<ScalarFn>) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self {
            horizon,
            form: KernelForm::Callback {
                f,
                f_x,
                state_independent: false,
            },
        })
    }

    /// A callback `f(t)` that ignores the state; `∂ₓf ≡ 0` is supplied.
    pub fn time_callback(horizon: f64, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self {
            horizon,
            form: KernelForm::Callback {
                f: Arc::new(move |t, _| f(t)),
                f_x: Some(Arc::new(|_, _| 0.0)),
                state_independent: true,
            },
        })
    }

    /// `f(t, x) = c · x^k`.
    pub fn monomial(c: f64, k: usize, horizon: f64) -> Result<Self> {
        let mut coeffs = vec![Polynomial::zero(); k + 1];
        coeffs[k] = Polynomial::constant(c);
        Self::space_poly(coeffs, horizon)
    }

    pub fn zero(horizon: f64) -> Result<Self> {
        Self::deterministic_poly(Polynomial::zero(), horizon)
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn form(&self) -> &KernelForm {
        &self.form
    }

    pub fn is_state_independent(&self) -> bool {
        match &self.form {
            KernelForm::DeterministicPoly(_) => true,
            KernelForm::SpacePoly(a) => a.len() <= 1,
            KernelForm::Callback { state_independent, .. } => *state_independent,
        }
    }

    pub fn supports_derivative(&self) -> bool {
        !matches!(&self.form, KernelForm::Callback { f_x: None, .. })
    }

    /// `−f`.
    pub fn negated(&self) -> Self {
        let form = match &self.form {
            KernelForm::DeterministicPoly(p) => KernelForm::DeterministicPoly(p.scale(-1.0)),
            KernelForm::SpacePoly(a) => KernelForm::SpacePoly(a.iter().map(|p| p.scale(-1.0)).collect()),
            KernelForm::Callback {
                f,
                f_x,
                state_independent,
            } => {
                let f = f.clone();
                let f_x = f_x.clone();
                KernelForm::Callback {
                    f: Arc::new(move |t, x| -f(t, x)),
                    f_x: f_x.map(|g| -> ScalarFn { Arc::new(move |t, x| -g(t, x)) }),
                    state_independent: *state_independent,
                }
            }
        };
        Self {
            horizon: self.horizon,
            form,
        }
    }

    fn check_time(&self, t: f64) -> Result<f64> {
        let slack = 1e-12 * self.horizon.max(1.0);
        if t.is_nan() || t < -slack || t > self.horizon + slack {
            return Err(Error::invalid(format!("time {t} outside [0, {}]", self.horizon)));
        }
        Ok(t.clamp(0.0, self.horizon))
    }

    /// Interval means `(1/dt) ∫ f(s) ds` over the steps of `grid` for a
    /// state-independent kernel; `None` when `f` depends on `x`.
    /// Polynomials are integrated exactly, callbacks by 3-point Gauss-Legendre.
    pub fn interval_means(&self, grid: &TimeGrid) -> Option<Vec<f64>> {
        if !self.is_state_independent() {
            return None;
        }
        let time_poly = match &self.form {
            KernelForm::DeterministicPoly(p) => Some(p.clone()),
            KernelForm::SpacePoly(a) => Some(a.first().cloned().unwrap_or_else(Polynomial::zero)),
            KernelForm::Callback { .. } => None,
        };
        let dt = grid.dt();
        let steps = 0..grid.steps();
        Some(match time_poly {
            Some(p) => {
                let big = p.antiderivative();
                steps
                    .map(|i| (big.eval(grid.node(i + 1)) - big.eval(grid.node(i))) / dt)
                    .collect()
            }
            None => {
                let off = 0.5 * (0.6f64).sqrt();
                steps
                    .map(|i| {
                        let mid = grid.node(i) + 0.5 * dt;
                        let lo = self.eval(mid - off * dt, 0.0);
                        let hi = self.eval(mid + off * dt, 0.0);
                        (5.0 * (lo + hi) + 8.0 * self.eval(mid, 0.0)) / 18.0
                    })
                    .collect()
            }
        })
    }

    /// Pointwise `f(t, x)` (no range check; used on hot Monte-Carlo paths).
    pub fn eval(&self, t: f64, x: f64) -> f64 {
        match &self.form {
            KernelForm::DeterministicPoly(p) => p.eval(t),
            KernelForm::SpacePoly(a) => a.iter().rev().fold(0.0, |acc, c| acc * x + c.eval(t)),
            KernelForm::Callback { f, .. } => f(t, x),
        }
    }

    /// Pointwise `∂ₓf(t, x)`.
    pub fn eval_dx(&self, t: f64, x: f64) -> Result<f64> {
        Ok(match &self.form {
            KernelForm::DeterministicPoly(_) => 0.0,
            KernelForm::SpacePoly(a) => a
                .iter()
                .enumerate()
                .skip(1)
                .rev()
                .fold(0.0, |acc, (k, c)| acc * x + k as f64 * c.eval(t)),
            KernelForm::Callback { f_x: Some(g), .. } => g(t, x),
            KernelForm::Callback { f_x: None, .. } => {
                return Err(Error::UnsupportedKernel("callback kernel has no x-derivative".into()))
            }
        })
    }

    /// `m(t, x) = E[f(t, N)]`, `N ~ Normal(x, t)`.
    pub fn mean(&self, t: f64, x: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        self.mean_unchecked(t, x)
    }

    fn mean_unchecked(&self, t: f64, x: f64) -> Result<f64> {
        match &self.form {
            KernelForm::DeterministicPoly(p) => Ok(p.eval(t)),
            KernelForm::SpacePoly(a) => {
                let (c, d) = coeffs_at(a, t);
                let m = raw_moments(x, t, d);
                Ok((0..=d).map(|k| c[k] * m[k]).sum())
            }
            KernelForm::Callback { f, .. } => expect_function(|y| f(t, y), x, t, default_rule()),
        }
    }

    /// `s(t, x) = E[f(t, N)²]`.
    pub fn sq_mean(&self, t: f64, x: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        match &self.form {
            KernelForm::DeterministicPoly(p) => Ok(p.eval(t).powi(2)),
            KernelForm::SpacePoly(a) => {
                let (c, d) = coeffs_at(a, t);
                let m = raw_moments(x, t, 2 * d);
                let mut acc = 0.0;
                for i in 0..=d {
                    for j in 0..=d {
                        acc += c[i] * c[j] * m[i + j];
                    }
                }
                Ok(acc.max(0.0))
            }
            KernelForm::Callback { f, .. } => expect_function(|y| f(t, y).powi(2), x, t, default_rule()),
        }
    }

    /// `ffx(t, x) = E[f · ∂ₓf]`; needs `∂ₓf` for callbacks.
    pub fn ffx_mean(&self, t: f64, x: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        match &self.form {
            KernelForm::DeterministicPoly(_) => Ok(0.0),
            KernelForm::SpacePoly(a) => {
                let (c, d) = coeffs_at(a, t);
                if d == 0 {
                    return Ok(0.0);
                }
                let m = raw_moments(x, t, 2 * d - 1);
                let mut acc = 0.0;
                for i in 0..=d {
                    for j in 1..=d {
                        acc += c[i] * j as f64 * c[j] * m[i + j - 1];
                    }
                }
                Ok(acc)
            }
            KernelForm::Callback { f, f_x: Some(g), .. } => {
                expect_function(|y| f(t, y) * g(t, y), x, t, default_rule())
            }
            KernelForm::Callback { f_x: None, .. } => {
                Err(Error::UnsupportedKernel("callback kernel has no x-derivative".into()))
            }
        }
    }

    /// `∂ₜm(t, x)`: analytic for polynomial kernels, finite differences for callbacks.
    pub fn mean_dt(&self, t: f64, x: f64) -> Result<f64> {
        let t = self.check_time(t)?;
        match &self.form {
            KernelForm::DeterministicPoly(p) => Ok(p.derivative().eval(t)),
            KernelForm::SpacePoly(a) => {
                // ∂ᵥ E[(x+N(0,v))^k] = ½ k(k−1) E[(x+N(0,v))^{k−2}]
                let (c, d) = coeffs_at(a, t);
                let m = raw_moments(x, t, d);
                let mut acc = 0.0;
                for (k, ak) in a.iter().enumerate() {
                    acc += ak.derivative().eval(t) * m[k];
                    if k >= 2 {
                        acc += c[k] * 0.5 * (k * (k - 1)) as f64 * m[k - 2];
                    }
                }
                Ok(acc)
            }
            KernelForm::Callback { .. } => {
                let h = (1e-5 * self.horizon).max(1e-5);
                let m = |s: f64| self.mean_unchecked(s, x);
                if t - h < 0.0 {
                    Ok((-3.0 * m(t)? + 4.0 * m(t + h)? - m(t + 2.0 * h)?) / (2.0 * h))
                } else if t + h > self.horizon {
                    Ok((3.0 * m(t)? - 4.0 * m(t - h)? + m(t - 2.0 * h)?) / (2.0 * h))
                } else {
                    Ok((m(t + h)? - m(t - h)?) / (2.0 * h))
                }
            }
        }
    }
}

fn coeffs_at(a: &[Polynomial], t: f64) -> ([f64; MAX_SPACE_DEGREE + 1], usize) {
    let mut c = [0.0; MAX_SPACE_DEGREE + 1];
    for (k, p) in a.iter().enumerate() {
        c[k] = p.eval(t);
    }
    (c, a.len().saturating_sub(1))
}

/// `E[(x + N(0, v))^k]` for `k = 0..=d`, `d ≤ 16`.
fn raw_moments(x: f64, v: f64, d: usize) -> [f64; MAX_DEGREE + 1] {
    let mut m = [0.0; MAX_DEGREE + 1];
    m[0] = 1.0;
    if d >= 1 {
        m[1] = x;
    }
    for j in 2..=d {
        m[j] = x * m[j - 1] + (j - 1) as f64 * v * m[j - 2];
    }
    m
}

/// Cost functionals on Wiener paths.
#[derive(Debug, Clone)]
pub enum CostFunctional {
    /// `C = C₀ − ∫ f(t, B) dB`; the target measure has Girsanov kernel `f`.
    ItoForm { c0: f64, kernel: DriftKernel },
    /// `C = ∫ g(B(t)) dt + G(B(T))`.
    IntegralTerminal {
        running: Polynomial,
        terminal: Polynomial,
        horizon: f64,
    },
}

impl CostFunctional {
    pub fn integral_terminal(running: Polynomial, terminal: Polynomial, horizon: f64) -> Result<Self> {
        check_horizon(horizon)?;
        Ok(Self::IntegralTerminal {
            running,
            terminal,
            horizon,
        })
    }

    pub fn horizon(&self) -> f64 {
        match self {
            Self::ItoForm { kernel, .. } => kernel.horizon(),
            Self::IntegralTerminal { horizon, .. } => *horizon,
        }
    }

    /// Value of `C` on one discretized Brownian path (trapezoid in time,
    /// left-point Itô sums).
    pub fn evaluate_path(&self, grid: &TimeGrid, path: &[f64]) -> Result<f64> {
        if path.len() != grid.len() {
            return Err(Error::invalid("cost evaluation: path length does not match grid"));
        }
        if (grid.horizon() - self.horizon()).abs() > 1e-12 * self.horizon() {
            return Err(Error::invalid("cost evaluation: horizon does not match grid"));
        }
        match self {
            Self::IntegralTerminal { running, terminal, .. } => {
                let g: Vec<f64> = path.iter().map(|&b| running.eval(b)).collect();
                Ok(trapezoid(&g, grid)? + terminal.eval(path[grid.steps()]))
            }
            Self::ItoForm { c0, kernel } => {
                let ito: f64 = path
                    .windows(2)
                    .enumerate()
                    .map(|(i, w)| kernel.eval(grid.node(i), w[0]) * (w[1] - w[0]))
                    .sum();
                Ok(c0 - ito)
            }
        }
    }
}
