use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted time points starting at zero.
///
/// Grids built with [`TimeGrid::uniform`] are uniformly spaced; grids built
/// from explicit times only have to be strictly increasing, and consumers
/// that need uniform spacing (the renewal solver) check [`TimeGrid::step`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    /// `n_points` equally spaced times on `[0, t_end]`.
    pub fn uniform(t_end: f64, n_points: usize) -> Result<Self> {
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Grid(format!("t_end must be positive, got {t_end}")));
        }
        if n_points < 2 {
            return Err(Error::Grid(format!("need at least 2 points, got {n_points}")));
        }
        let dt = t_end / (n_points - 1) as f64;
        let mut times: Vec<f64> = (0..n_points).map(|i| i as f64 * dt).collect();
        times[n_points - 1] = t_end;
        Ok(Self { times })
    }

    /// Uniform grid with spacing `dt` ending at `t_end` (which must be a
    /// whole number of steps, up to rounding).
    pub fn with_step(t_end: f64, dt: f64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::Grid(format!("step must be positive, got {dt}")));
        }
        let steps = (t_end / dt).round();
        if steps < 1.0 || ((steps * dt) - t_end).abs() > 1e-9 * t_end.max(1.0) {
            return Err(Error::Grid(format!("t_end {t_end} is not a multiple of dt {dt}")));
        }
        Self::uniform(t_end, steps as usize + 1)
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Grid("need at least 2 points".into()));
        }
        if times[0] != 0.0 {
            return Err(Error::Grid(format!("grid must start at 0, got {}", times[0])));
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err(Error::Grid("non-finite time".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Grid("times must be strictly increasing".into()));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn t_end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    /// The common spacing, or `None` when the grid is not uniform.
    pub fn step(&self) -> Option<f64> {
        let dt = self.t_end() / (self.len() - 1) as f64;
        let tol = 1e-9 * dt.max(1e-300);
        self.times
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - i as f64 * dt).abs() <= tol * (i as f64 + 1.0))
            .then_some(dt)
    }

    /// Index of the grid point closest to `t`.
    pub fn nearest_index(&self, t: f64) -> usize {
        let pos = self.times.partition_point(|&x| x < t);
        if pos == 0 {
            return 0;
        }
        if pos == self.times.len() {
            return pos - 1;
        }
        if (self.times[pos] - t) < (t - self.times[pos - 1]) {
            pos
        } else {
            pos - 1
        }
    }
}
