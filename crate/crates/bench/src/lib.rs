//! Shared fixtures for the solver benchmarks.

use wiener_core::grid::TimeGrid;
use wiener_core::{DriftKernel, Polynomial};

pub fn unit_grid(steps: usize) -> TimeGrid {
    TimeGrid::uniform(1.0, steps).expect("positive step count")
}

/// `(label, kernel)` for `f = x`, `f = 1` and `f = x²` on `[0, 1]`.
pub fn kernels() -> Vec<(&'static str, DriftKernel)> {
    vec![
        ("linear", DriftKernel::monomial(1.0, 1, 1.0).unwrap()),
        (
            "constant",
            DriftKernel::deterministic_poly(Polynomial::constant(1.0), 1.0).unwrap(),
        ),
        ("quadratic", DriftKernel::monomial(1.0, 2, 1.0).unwrap()),
    ]
}

#[cfg(test)]
mod tests {
    #[test]
    fn fixtures_build() {
        assert_eq!(super::kernels().len(), 3);
        assert_eq!(super::unit_grid(10).steps(), 10);
    }
}
