use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Input encoding shared by a dataset and the model trained on it: the
/// fixed sensor times at which every system's recovery function is sampled,
/// and the horizon used to scale trunk inputs to `[0, 1]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct InputEncoding {
    pub n_systems: usize,
    pub sensors: Vec<f64>,
    pub t_end: f64,
}

impl InputEncoding {
    pub fn new(n_systems: usize, sensors: Vec<f64>, t_end: f64) -> Result<Self> {
        if n_systems == 0 || sensors.is_empty() {
            return Err(Error::Config("need at least one system and one sensor".into()));
        }
        if !(t_end.is_finite() && t_end > 0.0) {
            return Err(Error::Config(format!("t_end must be positive, got {t_end}")));
        }
        if sensors.windows(2).any(|w| w[1] <= w[0]) || sensors[0] < 0.0 {
            return Err(Error::Config("sensor times must be increasing and nonnegative".into()));
        }
        Ok(Self {
            n_systems,
            sensors,
            t_end,
        })
    }

    /// `m` equally spaced sensors on `[0, t_end]`.
    pub fn uniform(n_systems: usize, m: usize, t_end: f64) -> Result<Self> {
        if m < 2 {
            return Err(Error::Config(format!("need at least 2 sensors, got {m}")));
        }
        let dt = t_end / (m - 1) as f64;
        let mut sensors: Vec<f64> = (0..m).map(|i| i as f64 * dt).collect();
        sensors[m - 1] = t_end;
        Self::new(n_systems, sensors, t_end)
    }

    pub fn branch_dim(&self) -> usize {
        self.n_systems * self.sensors.len()
    }

    pub fn scale_time(&self, t: f64) -> f64 {
        t / self.t_end
    }
}

/// One observed `(sample, output time, target)` triple.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub sample: usize,
    pub time: f64,
    pub target: f64,
}

/// Training or test data for the operator network.
///
/// Output times are stored once (deduplicated and sorted) and targets live
/// in a dense `samples x times` matrix with a 0/1 mask of observed pairs, so
/// a shared output grid is simply a full mask.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorDataset {
    encoding: InputEncoding,
    branch: Array2<f64>,
    times: Vec<f64>,
    targets: Array2<f64>,
    mask: Array2<f64>,
    n_pairs: usize,
}

impl OperatorDataset {
    /// Every sample observed on the same output times.
    pub fn on_shared_grid(
        encoding: InputEncoding,
        branch: Array2<f64>,
        times: Vec<f64>,
        targets: Array2<f64>,
    ) -> Result<Self> {
        if targets.dim() != (branch.nrows(), times.len()) {
            return Err(Error::Shape(format!(
                "targets {:?} for {} samples and {} times",
                targets.dim(),
                branch.nrows(),
                times.len()
            )));
        }
        let mut obs = Vec::with_capacity(targets.len());
        for ((k, j), &v) in targets.indexed_iter() {
            obs.push(Observation {
                sample: k,
                time: times[j],
                target: v,
            });
        }
        Self::from_observations(encoding, branch, &obs)
    }

    pub fn from_observations(
        encoding: InputEncoding,
        branch: Array2<f64>,
        observations: &[Observation],
    ) -> Result<Self> {
        if branch.ncols() != encoding.branch_dim() {
            return Err(Error::Shape(format!(
                "branch rows have {} values, expected {} systems x {} sensors",
                branch.ncols(),
                encoding.n_systems,
                encoding.sensors.len()
            )));
        }
        if branch.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Data("branch inputs must lie in [0, 1]".into()));
        }
        let mut times: Vec<f64> = observations.iter().map(|o| o.time).collect();
        times.sort_by(f64::total_cmp);
        times.dedup();
        let n = branch.nrows();
        let mut targets = Array2::zeros((n, times.len()));
        let mut mask = Array2::zeros((n, times.len()));
        for o in observations {
            if o.sample >= n {
                return Err(Error::Shape(format!("observation for missing sample {}", o.sample)));
            }
            if !(0.0..=1.0).contains(&o.target) {
                return Err(Error::Data(format!("target {} outside [0, 1]", o.target)));
            }
            if !(0.0..=encoding.t_end).contains(&o.time) {
                return Err(Error::Data(format!("output time {} outside [0, t_end]", o.time)));
            }
            let j = times.partition_point(|&t| t < o.time);
            if mask[(o.sample, j)] != 0.0 {
                return Err(Error::Data(format!(
                    "duplicate observation at sample {}, t = {}",
                    o.sample, o.time
                )));
            }
            targets[(o.sample, j)] = o.target;
            mask[(o.sample, j)] = 1.0;
        }
        Ok(Self {
            encoding,
            branch,
            times,
            targets,
            mask,
            n_pairs: observations.len(),
        })
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    pub fn branch(&self) -> &Array2<f64> {
        &self.branch
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn targets(&self) -> &Array2<f64> {
        &self.targets
    }

    pub fn mask(&self) -> &Array2<f64> {
        &self.mask
    }

    pub fn n_samples(&self) -> usize {
        self.branch.nrows()
    }

    pub fn n_pairs(&self) -> usize {
        self.n_pairs
    }

    /// Trunk inputs: output times scaled by the horizon, as a column.
    pub fn trunk_input(&self) -> Array2<f64> {
        let col: Array1<f64> = self.times.iter().map(|&t| self.encoding.scale_time(t)).collect();
        col.insert_axis(ndarray::Axis(1))
    }

    /// Observed pairs in sample-major, time-ascending order.
    pub fn observations(&self) -> Vec<Observation> {
        let mut out = Vec::with_capacity(self.n_pairs);
        for ((k, j), &m) in self.mask.indexed_iter() {
            if m != 0.0 {
                out.push(Observation {
                    sample: k,
                    time: self.times[j],
                    target: self.targets[(k, j)],
                });
            }
        }
        out
    }

    /// Same data with samples reordered by `order`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        if order.len() != self.n_samples() {
            return Err(Error::Shape("permutation length differs from sample count".into()));
        }
        let branch = self.branch.select(ndarray::Axis(0), order);
        let mut inverse = vec![0; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inverse[old] = new;
        }
        let obs: Vec<Observation> = self
            .observations()
            .into_iter()
            .map(|o| Observation {
                sample: inverse[o.sample],
                ..o
            })
            .collect();
        Self::from_observations(self.encoding.clone(), branch, &obs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn enc() -> InputEncoding {
        InputEncoding::uniform(1, 2, 2.0).unwrap()
    }

    #[test]
    fn random_times_are_merged() {
        let obs = [
            Observation { sample: 0, time: 0.5, target: 0.1 },
            Observation { sample: 1, time: 1.5, target: 0.9 },
            Observation { sample: 1, time: 0.5, target: 0.2 },
        ];
        let d = OperatorDataset::from_observations(enc(), array![[0.0, 0.5], [0.0, 1.0]], &obs).unwrap();
        assert_eq!(d.times(), &[0.5, 1.5]);
        assert_eq!(d.mask(), &array![[1.0, 0.0], [1.0, 1.0]]);
        assert_eq!(d.n_pairs(), 3);
        assert_eq!(d.trunk_input(), array![[0.25], [0.75]]);
    }

    #[test]
    fn validation() {
        let obs = [Observation { sample: 0, time: 3.0, target: 0.1 }];
        assert!(OperatorDataset::from_observations(enc(), array![[0.0, 0.5]], &obs).is_err());
        let obs = [Observation { sample: 0, time: 1.0, target: 1.1 }];
        assert!(OperatorDataset::from_observations(enc(), array![[0.0, 0.5]], &obs).is_err());
        assert!(OperatorDataset::from_observations(enc(), array![[0.0, 0.5, 0.2]], &[]).is_err());
        assert!(InputEncoding::uniform(1, 1, 2.0).is_err());
    }
}
