//! Uniform time grids, discretized paths on them, and the elementary
//! quadratures every other module builds on.
//!
//! Slopes live on interval midpoints (forward differences). Deterministic
//! time integrals use the trapezoid rule; stochastic sums elsewhere use the
//! left node of each interval.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `n + 1` equally spaced nodes on `[0, T]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn uniform(horizon: f64, steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::invalid(format!("horizon must be positive, got {horizon}")));
        }
        if steps < 2 {
            return Err(Error::invalid(format!("grid needs at least 2 steps, got {steps}")));
        }
        Ok(Self { horizon, steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.steps as f64
    }

    /// Node `i`; the last node is exactly the horizon.
    pub fn node(&self, i: usize) -> f64 {
        if i == self.steps {
            self.horizon
        } else {
            i as f64 * self.dt()
        }
    }

    pub fn midpoint(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt()
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|i| self.node(i)).collect()
    }

    pub(crate) fn check_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "{what}: grid mismatch (T={}, n={}) vs (T={}, n={})",
                self.horizon, self.steps, other.horizon, other.steps
            )))
        }
    }
}

/// Convenience constructor mirroring [`TimeGrid::uniform`].
pub fn uniform_grid(horizon: f64, steps: usize) -> Result<TimeGrid> {
    TimeGrid::uniform(horizon, steps)
}

/// Values of a path at the grid nodes, starting at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl DiscretePath {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::invalid(format!(
                "path has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if values[0] != 0.0 {
            return Err(Error::invalid(format!("path must start at 0, got {}", values[0])));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite path value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Samples `f` at the nodes. `f(0)` must vanish (to 1e-12) and is pinned to 0.
    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        let mut values: Vec<f64> = grid.nodes().into_iter().map(f).collect();
        if values[0].abs() > 1e-12 {
            return Err(Error::invalid(format!("path must start at 0, got {}", values[0])));
        }
        values[0] = 0.0;
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn terminal(&self) -> f64 {
        self.values[self.grid.steps]
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        Self::new(self.grid, self.values.iter().map(|v| alpha * v).collect())
    }

    pub fn plus(&self, other: &DiscretePath) -> Result<Self> {
        self.grid.check_same(&other.grid, "path sum")?;
        Self::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        )
    }

    pub fn minus(&self, other: &DiscretePath) -> Result<Self> {
        self.grid.check_same(&other.grid, "path difference")?;
        Self::new(
            self.grid,
            self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        )
    }

    /// Max-norm distance to another path on the same grid.
    pub fn sup_distance(&self, other: &DiscretePath) -> Result<f64> {
        self.grid.check_same(&other.grid, "sup distance")?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    /// Writes `t,q` rows, one per node.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,q")?;
        for (i, q) in self.values.iter().enumerate() {
            writeln!(out, "{},{}", self.grid.node(i), q)?;
        }
        Ok(())
    }
}

/// Forward-difference slopes on the `n` interval midpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct PathDerivative {
    grid: TimeGrid,
    slopes: Vec<f64>,
}

impl PathDerivative {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn slopes(&self) -> &[f64] {
        &self.slopes
    }
}

pub fn finite_difference(path: &DiscretePath) -> PathDerivative {
    let dt = path.grid.dt();
    PathDerivative {
        grid: path.grid,
        slopes: path.values.windows(2).map(|w| (w[1] - w[0]) / dt).collect(),
    }
}

/// Squared Cameron-Martin norm `∫ q̇² dt`, with no ½ factor.
pub fn sobolev_norm_sq(path: &DiscretePath) -> f64 {
    let dt = path.grid.dt();
    let d = finite_difference(path);
    d.slopes.iter().map(|f| f * f * dt).sum()
}

/// Composite trapezoid rule over the grid.
pub fn trapezoid(samples: &[f64], grid: &TimeGrid) -> Result<f64> {
    if samples.len() != grid.len() {
        return Err(Error::invalid(format!(
            "trapezoid: {} samples for {} nodes",
            samples.len(),
            grid.len()
        )));
    }
    let n = grid.steps();
    let interior: f64 = samples[1..n].iter().sum();
    Ok(grid.dt() * (0.5 * (samples[0] + samples[n]) + interior))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn uniform_grid_nodes() {
        let g = uniform_grid(1.0, 4).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = uniform_grid(2.0, 2).unwrap();
        assert_eq!(g.nodes(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn uniform_grid_rejects_bad_input() {
        assert!(matches!(uniform_grid(1.0, 1), Err(Error::InvalidArgument(_))));
        assert!(matches!(uniform_grid(0.0, 4), Err(Error::InvalidArgument(_))));
        assert!(matches!(uniform_grid(-1.0, 4), Err(Error::InvalidArgument(_))));
        assert!(uniform_grid(f64::NAN, 4).is_err());
    }

    #[test]
    fn finite_difference_examples() {
        let g = uniform_grid(1.0, 4).unwrap();
        let lin = DiscretePath::from_fn(g, |t| t).unwrap();
        for s in finite_difference(&lin).slopes() {
            assert!((s - 1.0).abs() < 1e-15);
        }
        assert!(finite_difference(&DiscretePath::zeros(g))
            .slopes()
            .iter()
            .all(|&s| s == 0.0));

        let g2 = uniform_grid(1.0, 2).unwrap();
        let sq = DiscretePath::from_fn(g2, |t| t * t).unwrap();
        assert_eq!(finite_difference(&sq).slopes(), &[0.5, 1.5]);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = uniform_grid(1.0, 10).unwrap();
        let lin = DiscretePath::from_fn(g, |t| t).unwrap();
        assert!((sobolev_norm_sq(&lin) - 1.0).abs() < 1e-12);
        assert_eq!(sobolev_norm_sq(&DiscretePath::zeros(g)), 0.0);
        let g3 = uniform_grid(3.0, 30).unwrap();
        let p = DiscretePath::from_fn(g3, |t| 2.0 * t).unwrap();
        assert!((sobolev_norm_sq(&p) - 12.0).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_examples() {
        let g = uniform_grid(1.0, 4).unwrap();
        assert!((trapezoid(&[1.0; 5], &g).unwrap() - 1.0).abs() < 1e-15);
        assert!((trapezoid(&g.nodes(), &g).unwrap() - 0.5).abs() < 1e-15);
        let g2 = uniform_grid(1.0, 2).unwrap();
        assert!((trapezoid(&[0.0, 0.25, 1.0], &g2).unwrap() - 0.375).abs() < 1e-15);
        assert!(matches!(trapezoid(&[1.0; 4], &g), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn path_rejects_nonzero_start_and_nan() {
        let g = uniform_grid(1.0, 2).unwrap();
        assert!(DiscretePath::new(g, vec![0.1, 0.0, 0.0]).is_err());
        assert!(DiscretePath::new(g, vec![0.0, f64::NAN, 0.0]).is_err());
        assert!(DiscretePath::new(g, vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn csv_layout() {
        let g = uniform_grid(1.0, 2).unwrap();
        let p = DiscretePath::from_fn(g, |t| t * t).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "t,q\n0,0\n0.5,0.25\n1,1\n");
    }

    #[test]
    fn sobolev_norm_converges_at_second_order() {
        // q = t² on [0,1]: exact norm 4/3, forward differences give 4/3 - dt²/3.
        let err = |n: usize| {
            let g = uniform_grid(1.0, n).unwrap();
            let p = DiscretePath::from_fn(g, |t| t * t).unwrap();
            (sobolev_norm_sq(&p) - 4.0 / 3.0).abs()
        };
        for n in [10, 20, 40, 80] {
            let ratio = err(n) / err(2 * n);
            assert!((ratio - 4.0).abs() < 0.05, "n={n} ratio={ratio}");
        }
    }

    fn path_strategy() -> impl Strategy<Value = DiscretePath> {
        (2usize..40, 0.1f64..5.0).prop_flat_map(|(n, t)| {
            prop::collection::vec(-10.0f64..10.0, n).prop_map(move |tail| {
                let g = uniform_grid(t, n).unwrap();
                let mut v = vec![0.0];
                v.extend(tail);
                DiscretePath::new(g, v).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn sobolev_norm_is_quadratic(p in path_strategy(), alpha in -4.0f64..4.0) {
            let lhs = sobolev_norm_sq(&p.scaled(alpha).unwrap());
            let rhs = alpha * alpha * sobolev_norm_sq(&p);
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn sobolev_norm_vanishes_only_on_zero(p in path_strategy()) {
            let zero = p.values().iter().all(|&v| v == 0.0);
            prop_assert_eq!(sobolev_norm_sq(&p) == 0.0, zero);
        }

        #[test]
        fn trapezoid_linear_and_exact_on_affine(
            n in 2usize..50, t in 0.1f64..5.0, a in -3.0f64..3.0, b in -3.0f64..3.0,
            c in -2.0f64..2.0,
        ) {
            let g = uniform_grid(t, n).unwrap();
            let affine: Vec<f64> = g.nodes().iter().map(|s| a + b * s).collect();
            let exact = a * t + 0.5 * b * t * t;
            prop_assert!((trapezoid(&affine, &g).unwrap() - exact).abs() < 1e-10 * (1.0 + exact.abs()));

            let other: Vec<f64> = g.nodes().iter().map(|s| (s * 3.0).sin()).collect();
            let combo: Vec<f64> = affine.iter().zip(&other).map(|(x, y)| x + c * y).collect();
            let lhs = trapezoid(&combo, &g).unwrap();
            let rhs = trapezoid(&affine, &g).unwrap() + c * trapezoid(&other, &g).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
        }
    }
}
