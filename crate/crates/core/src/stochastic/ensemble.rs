use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::stats::mean;

/// Stream offset separating auxiliary draws (mixture components) from the
/// Brownian increments of the same path.
pub(crate) const AUX_LANE: u64 = 1 << 63;

/// Seeded Brownian paths `B_{j,i}` on a common grid, `B_{j,0} = 0`.
///
/// Path `j` is drawn from ChaCha8 keyed on `seed` with stream `j`, so any
/// subset of paths can be regenerated independently of the others.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianEnsemble {
    grid: TimeGrid,
    seed: u64,
    paths: usize,
    values: Vec<f64>,
}

impl BrownianEnsemble {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.paths
    }

    pub fn is_empty(&self) -> bool {
        self.paths == 0
    }

    pub fn path(&self, j: usize) -> &[f64] {
        let w = self.grid.len();
        &self.values[j * w..(j + 1) * w]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.grid.len())
    }

    /// Same paths observed on every `factor`-th node.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || !self.grid.steps().is_multiple_of(factor) {
            return Err(Error::invalid(format!(
                "cannot coarsen {} steps by {factor}",
                self.grid.steps()
            )));
        }
        let grid = TimeGrid::uniform(self.grid.horizon(), self.grid.steps() / factor)?;
        let values = self.iter().flat_map(|p| p.iter().step_by(factor).copied()).collect();
        Ok(Self {
            grid,
            seed: self.seed,
            paths: self.paths,
            values,
        })
    }

    /// Uniform `[0, 1)` draw for path `j` on the auxiliary lane.
    pub(crate) fn aux_uniform(&self, j: usize) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(AUX_LANE | j as u64);
        rng.random::<f64>()
    }
}

pub fn sample_ensemble(grid: TimeGrid, paths: usize, seed: u64) -> Result<BrownianEnsemble> {
    if paths == 0 {
        return Err(Error::invalid("ensemble needs at least one path"));
    }
    let width = grid.len();
    let sd = grid.dt().sqrt();
    let mut values = vec![0.0; paths * width];
    values.par_chunks_mut(width).enumerate().for_each(|(j, row)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(j as u64);
        for i in 1..width {
            let z: f64 = rng.sample(StandardNormal);
            row[i] = row[i - 1] + sd * z;
        }
    });
    let ens = BrownianEnsemble {
        grid,
        seed,
        paths,
        values,
    };
    let terminal: Vec<f64> = ens.iter().map(|p| p[grid.steps()]).collect();
    let bar = mean(&terminal);
    let bound = 4.0 * (grid.horizon() / paths as f64).sqrt();
    if bar.abs() > bound {
        log::warn!("ensemble seed {seed}: terminal mean {bar:.4} outside ±{bound:.4}");
    }
    Ok(ens)
}
