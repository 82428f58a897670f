use ndarray::Array2;
use rand::Rng;
use rayon::prelude::*;

use super::config::{ExperimentConfig, OutputTimes};
use crate::error::Result;
use crate::grid::TimeGrid;
use crate::operator::{InputEncoding, Observation, OperatorDataset};
use crate::recovery::{sample_random_function_set, RecoveryFunctionSet};
use crate::rng::{child_rng, child_seed};
use crate::sos::{
    build_equal_impact_f, estimate_recovery_curve_mc, InitialStateVector, RecoveryCurve, StateSpace,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }

    fn stream(self) -> u64 {
        match self {
            Split::Train => 1,
            Split::Test => 2,
        }
    }
}

/// Seed of one split. Train and test use disjoint child streams of the
/// master seed; within a split, stream 0 drives function draws, 1 the Monte
/// Carlo curves and 2 the random output times, each indexed by sample.
pub fn split_seed(master: u64, split: Split) -> u64 {
    child_seed(master, split.stream())
}

/// A dataset plus the inputs it was generated from.
#[derive(Debug, Clone)]
pub struct GeneratedData {
    pub dataset: OperatorDataset,
    pub sets: Vec<RecoveryFunctionSet>,
    /// Monte Carlo reference curve of each sample, on its output times.
    pub curves: Vec<RecoveryCurve>,
}

pub fn input_encoding(cfg: &ExperimentConfig) -> Result<InputEncoding> {
    InputEncoding::uniform(cfg.n_systems, cfg.m_sensors, cfg.horizon()?)
}

/// Draw function sets, simulate their SoS curves and collect the operator
/// dataset for one split.
pub fn generate_dataset(cfg: &ExperimentConfig, split: Split) -> Result<GeneratedData> {
    cfg.validate()?;
    let encoding = input_encoding(cfg)?;
    let t_end = encoding.t_end;
    let n = match split {
        Split::Train => cfg.n_train,
        Split::Test => cfg.n_test,
    };
    let root = split_seed(cfg.seed, split);
    let (draw_seed, mc_seed, time_seed) = (child_seed(root, 0), child_seed(root, 1), child_seed(root, 2));

    let space = StateSpace::new(cfg.n_systems)?;
    let f = build_equal_impact_f(&space);
    let init = InitialStateVector::all_down(space.n_states());
    let gen = cfg.generator_config();
    let shared = TimeGrid::uniform(t_end, cfg.n_output_times)?;

    let samples: Vec<(RecoveryFunctionSet, RecoveryCurve)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let set = sample_random_function_set(&gen, cfg.n_systems, &mut child_rng(draw_seed, i as u64))?;
            let grid = match cfg.output_times {
                OutputTimes::SharedGrid => shared.clone(),
                OutputTimes::Random => random_times(t_end, cfg.n_output_times, child_seed(time_seed, i as u64))?,
            };
            let curve = estimate_recovery_curve_mc(
                &set,
                &space,
                &f,
                &init,
                &grid,
                cfg.mc_realizations,
                child_seed(mc_seed, i as u64),
            )?;
            Ok((set, curve))
        })
        .collect::<Result<_>>()?;

    let (sets, curves): (Vec<_>, Vec<_>) = samples.into_iter().unzip();
    let dataset = assemble(encoding, &sets, &curves)?;
    Ok(GeneratedData {
        dataset,
        sets,
        curves,
    })
}

fn random_times(t_end: f64, n: usize, seed: u64) -> Result<TimeGrid> {
    let mut rng = child_rng(seed, 0);
    let mut times: Vec<f64> = (1..n).map(|_| rng.random::<f64>() * t_end).collect();
    times.push(0.0);
    times.sort_by(f64::total_cmp);
    times.dedup();
    TimeGrid::from_times(times)
}

/// Operator dataset from function sets and their reference curves.
pub fn assemble(
    encoding: InputEncoding,
    sets: &[RecoveryFunctionSet],
    curves: &[RecoveryCurve],
) -> Result<OperatorDataset> {
    let width = encoding.branch_dim();
    let mut branch = Array2::zeros((sets.len(), width));
    for (mut row, set) in branch.rows_mut().into_iter().zip(sets) {
        let values = set.sensor_values(&encoding.sensors);
        row.assign(&ndarray::ArrayView1::from(&values));
    }
    let obs: Vec<Observation> = curves
        .iter()
        .enumerate()
        .flat_map(|(k, c)| {
            c.grid.times().iter().zip(&c.values).map(move |(&t, &v)| Observation {
                sample: k,
                time: t,
                target: v,
            })
        })
        .collect();
    OperatorDataset::from_observations(encoding, branch, &obs)
}
