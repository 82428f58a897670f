//! SoS state space, competing-clocks simulation and functionality curves.

use itertools::Itertools;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::mc;
use crate::recovery::RecoveryFunctionSet;
use crate::renewal::TransitionProbabilityMatrix;
use crate::rng::child_rng;

/// Largest supported number of systems (the state space has `2^n` states).
pub const MAX_SYSTEMS: usize = 20;

/// Subset state space: state `i` is the set of functional systems.
///
/// States are ordered by ascending cardinality and then lexicographically by
/// member indices, so state 0 is the empty set and the last state is the
/// full set. Subsets are stored as bitmasks (bit `k` = system `k`).
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n_systems: usize,
    masks: Vec<u32>,
    index_of_mask: Vec<u32>,
}

impl StateSpace {
    pub fn new(n_systems: usize) -> Result<Self> {
        if n_systems == 0 {
            return Err(Error::Domain("n_systems must be at least 1".into()));
        }
        if n_systems > MAX_SYSTEMS {
            return Err(Error::Size {
                what: "n_systems",
                value: n_systems,
                max: MAX_SYSTEMS,
            });
        }
        let mut masks = Vec::with_capacity(1 << n_systems);
        for size in 0..=n_systems {
            for combo in (0..n_systems).combinations(size) {
                masks.push(combo.iter().fold(0u32, |m, &k| m | (1 << k)));
            }
        }
        let mut index_of_mask = vec![0u32; masks.len()];
        for (i, &m) in masks.iter().enumerate() {
            index_of_mask[m as usize] = i as u32;
        }
        Ok(Self {
            n_systems,
            masks,
            index_of_mask,
        })
    }

    pub fn n_systems(&self) -> usize {
        self.n_systems
    }

    pub fn n_states(&self) -> usize {
        self.masks.len()
    }

    pub fn mask(&self, state: usize) -> u32 {
        self.masks[state]
    }

    pub fn index_of_mask(&self, mask: u32) -> usize {
        self.index_of_mask[mask as usize] as usize
    }

    /// Functional systems in `state`, ascending.
    pub fn members(&self, state: usize) -> Vec<usize> {
        let m = self.masks[state];
        (0..self.n_systems).filter(|k| m & (1 << k) != 0).collect()
    }

    pub fn full_state(&self) -> usize {
        self.masks.len() - 1
    }
}

pub fn build_state_space(n_systems: usize) -> Result<StateSpace> {
    StateSpace::new(n_systems)
}

/// Functionality level of each state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FunctionalityVector(Vec<f64>);

impl FunctionalityVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Domain("functionality vector is empty".into()));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Domain(format!("functionality {v} outside [0, 1]")));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Each system contributes equally: `F_i = |S_i| / n`.
pub fn build_equal_impact_f(space: &StateSpace) -> FunctionalityVector {
    let n = space.n_systems() as f64;
    FunctionalityVector(
        (0..space.n_states())
            .map(|i| space.mask(i).count_ones() as f64 / n)
            .collect(),
    )
}

/// Distribution over states right after the disruption.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InitialStateVector(Vec<f64>);

impl InitialStateVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("initial state vector is empty".into()));
        }
        if probs.iter().any(|&p| !(p >= 0.0)) {
            return Err(Error::Domain("initial probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("initial probabilities sum to {total}")));
        }
        Ok(Self(probs))
    }

    /// All mass on `state`.
    pub fn concentrated(n_states: usize, state: usize) -> Self {
        let mut p = vec![0.0; n_states];
        p[state] = 1.0;
        Self(p)
    }

    /// Recovery always starts from the all-down state.
    pub fn all_down(n_states: usize) -> Self {
        Self::concentrated(n_states, 0)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub(crate) fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &p) in self.0.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        self.0.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Expected SoS functionality on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryCurve {
    pub grid: TimeGrid,
    pub values: Vec<f64>,
    /// Per-point Monte Carlo standard error; `None` for exact curves.
    pub stderr: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub time: f64,
    pub state: usize,
}

/// One sample path: a start state and the jumps that follow.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationTrajectory {
    pub initial_state: usize,
    pub events: Vec<Transition>,
}

impl RealizationTrajectory {
    /// State occupied at `t` (right-continuous).
    pub fn state_at(&self, t: f64) -> usize {
        let k = self.events.partition_point(|e| e.time <= t);
        if k == 0 {
            self.initial_state
        } else {
            self.events[k - 1].state
        }
    }

    /// State at each grid time.
    pub fn states_on(&self, times: &[f64]) -> Vec<usize> {
        let mut out = Vec::with_capacity(times.len());
        self.fill_states(times, |i, s| {
            debug_assert_eq!(i, out.len());
            out.push(s)
        });
        out
    }

    /// Single pass over a sorted time list.
    pub(crate) fn fill_states(&self, times: &[f64], mut emit: impl FnMut(usize, usize)) {
        let mut state = self.initial_state;
        let mut next = 0;
        for (i, &t) in times.iter().enumerate() {
            while next < self.events.len() && self.events[next].time <= t {
                state = self.events[next].state;
                next += 1;
            }
            emit(i, state);
        }
    }
}

/// Competing-clocks trajectory for given per-system recovery times.
///
/// Every event adds exactly one system. Ties are broken by ascending system
/// index; tied events share a time stamp, and since states are
/// right-continuous only the last of them is ever observed.
pub fn trajectory_from_recovery_times(
    times: &[f64],
    space: &StateSpace,
) -> Result<RealizationTrajectory> {
    if times.len() != space.n_systems() {
        return Err(Error::Shape(format!(
            "{} recovery times for {} systems",
            times.len(),
            space.n_systems()
        )));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by(|&a, &b| times[a].total_cmp(&times[b]).then(a.cmp(&b)));
    let mut mask = 0u32;
    let events = order
        .into_iter()
        .map(|k| {
            mask |= 1 << k;
            Transition {
                time: times[k],
                state: space.index_of_mask(mask),
            }
        })
        .collect();
    Ok(RealizationTrajectory {
        initial_state: 0,
        events,
    })
}

/// One competing-clocks realization: every system draws its recovery time
/// at `t = 0`, in system order.
pub fn simulate_realization_clocks<R: Rng + ?Sized>(
    set: &RecoveryFunctionSet,
    space: &StateSpace,
    rng: &mut R,
) -> Result<RealizationTrajectory> {
    let times: Vec<f64> = set
        .functions()
        .iter()
        .map(|f| f.sample_recovery_time(rng))
        .collect();
    trajectory_from_recovery_times(&times, space)
}

/// Step function `F[state(t)]` on the grid.
pub fn functionality_of_trajectory(
    traj: &RealizationTrajectory,
    f: &FunctionalityVector,
    grid: &TimeGrid,
) -> Result<Vec<f64>> {
    let max_state = traj
        .events
        .iter()
        .map(|e| e.state)
        .chain([traj.initial_state])
        .max()
        .unwrap_or(0);
    if max_state >= f.len() {
        return Err(Error::Shape(format!(
            "trajectory visits state {max_state} but F has {} entries",
            f.len()
        )));
    }
    let mut out = vec![0.0; grid.len()];
    traj.fill_states(grid.times(), |i, s| out[i] = f.values()[s]);
    Ok(out)
}

fn check_dims(set: &RecoveryFunctionSet, space: &StateSpace, f: &FunctionalityVector) -> Result<()> {
    if set.n_systems() != space.n_systems() {
        return Err(Error::Shape(format!(
            "{} recovery functions for a {}-system state space",
            set.n_systems(),
            space.n_systems()
        )));
    }
    if f.len() != space.n_states() {
        return Err(Error::Shape(format!(
            "F has {} entries, state space has {}",
            f.len(),
            space.n_states()
        )));
    }
    Ok(())
}

/// Monte Carlo recovery curve under competing clocks.
///
/// Realization `i` draws from its own generator seeded with
/// `child_seed(seed, i)`, so the estimate is bit-identical for any degree of
/// parallelism.
pub fn estimate_recovery_curve_mc(
    set: &RecoveryFunctionSet,
    space: &StateSpace,
    f: &FunctionalityVector,
    init: &InitialStateVector,
    grid: &TimeGrid,
    n_realizations: usize,
    seed: u64,
) -> Result<RecoveryCurve> {
    check_dims(set, space, f)?;
    if n_realizations == 0 {
        return Err(Error::Config("n_realizations must be at least 1".into()));
    }
    if init.len() != space.n_states() {
        return Err(Error::Shape("initial vector length differs from state count".into()));
    }
    if init.probs()[0] != 1.0 {
        return Err(Error::Unsupported(
            "competing-clocks simulation starts from the all-down state; \
             use the renewal solver for other initial distributions"
                .into(),
        ));
    }

    let times = grid.times();
    let levels = f.values();
    let moments = mc::accumulate(n_realizations, grid.len(), |i, out| {
        let mut rng = child_rng(seed, i as u64);
        let traj = simulate_realization_clocks(set, space, &mut rng)
            .expect("dimensions checked above");
        traj.fill_states(times, |k, s| out[k] = levels[s]);
    });

    Ok(RecoveryCurve {
        grid: grid.clone(),
        values: moments.mean(),
        stderr: Some(moments.stderr()),
    })
}

/// Exact curve for independent systems by enumerating every state:
/// `P(A at t) = prod_{k in A} φ_k(t) * prod_{k not in A} (1 - φ_k(t))`.
pub fn exact_recovery_curve_independent(
    set: &RecoveryFunctionSet,
    space: &StateSpace,
    f: &FunctionalityVector,
    grid: &TimeGrid,
) -> Result<RecoveryCurve> {
    check_dims(set, space, f)?;
    let n = space.n_systems();
    let values = grid
        .times()
        .iter()
        .map(|&t| {
            let phi: Vec<f64> = set.functions().iter().map(|g| g.cdf(t)).collect();
            (0..space.n_states())
                .map(|s| {
                    let m = space.mask(s);
                    let p: f64 = (0..n)
                        .map(|k| if m & (1 << k) != 0 { phi[k] } else { 1.0 - phi[k] })
                        .product();
                    p * f.values()[s]
                })
                .sum()
        })
        .collect();
    Ok(RecoveryCurve {
        grid: grid.clone(),
        values,
        stderr: None,
    })
}

/// `I^T R(t) F` at every grid point of `r`.
pub fn assemble_functionality(
    init: &InitialStateVector,
    r: &TransitionProbabilityMatrix,
    f: &FunctionalityVector,
) -> Result<RecoveryCurve> {
    let n = r.n_states();
    if init.len() != n || f.len() != n {
        return Err(Error::Shape(format!(
            "I has {} entries, F has {}, R is {n}x{n}",
            init.len(),
            f.len()
        )));
    }
    let values = (0..r.grid().len())
        .map(|k| {
            let m = r.at(k);
            init.probs()
                .iter()
                .enumerate()
                .filter(|(_, &p)| p != 0.0)
                .map(|(i, &p)| {
                    let row = &m[i * n..(i + 1) * n];
                    p * row.iter().zip(f.values()).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum()
        })
        .collect();
    Ok(RecoveryCurve {
        grid: r.grid().clone(),
        values,
        stderr: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recovery::RecoveryFunction;
    use crate::rng::rng_from_seed;
    use approx::assert_relative_eq;

    #[test]
    fn state_space_ordering() {
        let s = StateSpace::new(2).unwrap();
        let members: Vec<_> = (0..s.n_states()).map(|i| s.members(i)).collect();
        assert_eq!(members, vec![vec![], vec![0], vec![1], vec![0, 1]]);

        let s = StateSpace::new(1).unwrap();
        assert_eq!(s.n_states(), 2);

        let s = StateSpace::new(4).unwrap();
        assert_eq!(s.n_states(), 16);
        assert!(s.members(0).is_empty());
        assert_eq!(s.members(15), vec![0, 1, 2, 3]);
        assert_eq!(s.members(5), vec![0, 1]);
        assert_eq!(s.members(10), vec![2, 3]);

        let s = StateSpace::new(3).unwrap();
        let pairs: Vec<_> = (4..7).map(|i| s.members(i)).collect();
        assert_eq!(pairs, vec![vec![0, 1], vec![0, 2], vec![1, 2]]);
    }

    #[test]
    fn state_space_limits() {
        assert!(matches!(StateSpace::new(21), Err(Error::Size { .. })));
        assert!(StateSpace::new(0).is_err());
    }

    #[test]
    fn equal_impact_vectors() {
        let f = build_equal_impact_f(&StateSpace::new(4).unwrap());
        let mut expected = vec![0.0];
        expected.extend([0.25; 4]);
        expected.extend([0.5; 6]);
        expected.extend([0.75; 4]);
        expected.push(1.0);
        assert_eq!(f.values(), expected.as_slice());
        assert_eq!(build_equal_impact_f(&StateSpace::new(1).unwrap()).values(), &[0.0, 1.0]);
        assert_eq!(
            build_equal_impact_f(&StateSpace::new(2).unwrap()).values(),
            &[0.0, 0.5, 0.5, 1.0]
        );
    }

    #[test]
    fn forced_clock_times() {
        let space = StateSpace::new(4).unwrap();
        let traj = trajectory_from_recovery_times(&[3.0, 1.0, 2.0, 4.0], &space).unwrap();
        let seq: Vec<_> = traj.events.iter().map(|e| (e.time, space.members(e.state))).collect();
        assert_eq!(
            seq,
            vec![
                (1.0, vec![1]),
                (2.0, vec![1, 2]),
                (3.0, vec![0, 1, 2]),
                (4.0, vec![0, 1, 2, 3]),
            ]
        );

        let f = build_equal_impact_f(&space);
        let grid = TimeGrid::from_times(vec![0.0, 2.5, 5.0]).unwrap();
        assert_eq!(functionality_of_trajectory(&traj, &f, &grid).unwrap(), vec![0.0, 0.5, 1.0]);
    }

    #[test]
    fn single_system_trajectory() {
        let space = StateSpace::new(1).unwrap();
        let traj = trajectory_from_recovery_times(&[5.0], &space).unwrap();
        assert_eq!(traj.events, vec![Transition { time: 5.0, state: 1 }]);
    }

    #[test]
    fn ties_go_to_lower_index() {
        let space = StateSpace::new(3).unwrap();
        let traj = trajectory_from_recovery_times(&[1.0, 1.0, 2.0], &space).unwrap();
        assert_eq!(traj.events.len(), 3);
        assert_eq!(space.members(traj.events[0].state), vec![0]);
        assert_eq!(space.members(traj.events[1].state), vec![0, 1]);
        assert_eq!(space.members(traj.state_at(1.0)), vec![0, 1]);
    }

    #[test]
    fn exact_enumeration_two_systems() {
        let set = RecoveryFunctionSet::new(vec![
            RecoveryFunction::piecewise_linear(&[(0.0, 0.0), (5.0, 1.0)]).unwrap(),
            RecoveryFunction::piecewise_linear(&[(0.0, 0.0), (2.0, 1.0)]).unwrap(),
        ])
        .unwrap();
        let space = StateSpace::new(2).unwrap();
        let f = FunctionalityVector::new(vec![0.0, 0.1, 0.3, 1.0]).unwrap();
        let grid = TimeGrid::from_times(vec![0.0, 1.0]).unwrap();
        // φ1(1) = 0.2, φ2(1) = 0.5
        let c = exact_recovery_curve_independent(&set, &space, &f, &grid).unwrap();
        let brute = 0.8 * 0.5 * 0.0 + 0.2 * 0.5 * 0.1 + 0.8 * 0.5 * 0.3 + 0.2 * 0.5 * 1.0;
        assert_relative_eq!(c.values[1], brute, epsilon = 1e-15);
        assert_relative_eq!(c.values[1], 0.23, epsilon = 1e-15);
        assert_eq!(c.values[0], 0.0);
    }

    #[test]
    fn exact_at_full_recovery_is_one() {
        let set = RecoveryFunctionSet::identical(
            RecoveryFunction::piecewise_linear(&[(0.0, 0.0), (1.0, 1.0)]).unwrap(),
            3,
        )
        .unwrap();
        let space = StateSpace::new(3).unwrap();
        let f = build_equal_impact_f(&space);
        let grid = TimeGrid::uniform(2.0, 3).unwrap();
        let c = exact_recovery_curve_independent(&set, &space, &f, &grid).unwrap();
        assert_eq!(c.values[2], 1.0);
    }

    #[test]
    fn mc_rejects_non_default_initial_state() {
        let space = StateSpace::new(2).unwrap();
        let set = RecoveryFunctionSet::identical(RecoveryFunction::exponential(1.0).unwrap(), 2).unwrap();
        let f = build_equal_impact_f(&space);
        let grid = TimeGrid::uniform(1.0, 3).unwrap();
        let init = InitialStateVector::concentrated(4, 1);
        assert!(matches!(
            estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, 10, 0),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn mc_starts_at_zero_and_is_deterministic() {
        let space = StateSpace::new(3).unwrap();
        let set = RecoveryFunctionSet::identical(RecoveryFunction::lognormal(1.0, 0.5).unwrap(), 3).unwrap();
        let f = build_equal_impact_f(&space);
        let grid = TimeGrid::uniform(3.0, 31).unwrap();
        let init = InitialStateVector::all_down(8);
        let a = estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, 2000, 5).unwrap();
        let b = estimate_recovery_curve_mc(&set, &space, &f, &init, &grid, 2000, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.values[0], 0.0);
        assert!(a.values.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn single_realization_is_a_step_function() {
        let space = StateSpace::new(2).unwrap();
        let set = RecoveryFunctionSet::identical(RecoveryFunction::exponential(1.0).unwrap(), 2).unwrap();
        let f = build_equal_impact_f(&space);
        let grid = TimeGrid::uniform(10.0, 201).unwrap();
        let c = estimate_recovery_curve_mc(&set, &space, &f, &InitialStateVector::all_down(4), &grid, 1, 3)
            .unwrap();
        assert!(c.values.iter().all(|v| [0.0, 0.5, 1.0].contains(v)));

        let mut rng = child_rng(3, 0);
        let traj = simulate_realization_clocks(&set, &space, &mut rng).unwrap();
        assert_eq!(c.values, functionality_of_trajectory(&traj, &f, &grid).unwrap());
    }

    #[test]
    fn initial_vector_validation() {
        assert!(InitialStateVector::new(vec![0.5, 0.6]).is_err());
        assert!(InitialStateVector::new(vec![-0.1, 1.1]).is_err());
        let i = InitialStateVector::new(vec![0.25, 0.75]).unwrap();
        let mut rng = rng_from_seed(2);
        let hits = (0..4000).filter(|_| i.draw(&mut rng) == 1).count();
        assert!((hits as f64 / 4000.0 - 0.75).abs() < 0.03);
    }
}
