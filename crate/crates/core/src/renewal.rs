//! Markov-renewal machinery: semi-Markov kernels, the waiting matrix, a
//! time-marching Volterra solver for `R(t) = W(t) + ∫ Φ'(τ) R(t-τ) dτ`, and a
//! semi-Markov Monte Carlo estimator of the same `R(t)`.

use nalgebra::DMatrix;
use rand::distr::Open01;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::mc;
use crate::recovery::{RecoveryFunction, RecoveryFunctionSet};
use crate::rng::{child_rng, child_seed};
use crate::sos::{InitialStateVector, RealizationTrajectory, StateSpace, Transition};

/// Tolerance on row masses above 1.
const MASS_TOL: f64 = 1e-9;

/// Number of cells in the first-passage tables.
const FIRST_OF_CELLS: usize = 8192;

/// Sub-distribution `P(T_w <= t, T_w < T_j for every rival j)` of a winner
/// clock racing independent rival clocks.
///
/// The CDF is tabulated against the winner's own probability scale,
/// `C(u) = ∫_0^u g(Q_w(v)) dv` with `g = prod_j (1 - φ_j)`, which handles
/// jumps and unbounded densities of the winner without special cases. Cells
/// are uniform in `s = sqrt(u)` so they are finest in the lower tail, where
/// the winner's quantile moves fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstOf {
    winner: RecoveryFunction,
    rivals: Vec<RecoveryFunction>,
    cum: Vec<f64>,
}

impl FirstOf {
    pub fn new(winner: RecoveryFunction, rivals: Vec<RecoveryFunction>) -> Self {
        let m = FIRST_OF_CELLS;
        let survival = |t: f64| -> f64 {
            if t.is_infinite() {
                return if rivals.is_empty() { 1.0 } else { 0.0 };
            }
            rivals.iter().map(|r| 1.0 - r.cdf(t)).product()
        };
        // integrand in s: g(Q(s^2)) * 2s
        let h: Vec<f64> = (0..=m)
            .map(|i| {
                let s = i as f64 / m as f64;
                survival(winner.quantile(s * s)) * 2.0 * s
            })
            .collect();
        let mut cum = Vec::with_capacity(m + 1);
        cum.push(0.0);
        let mut acc = 0.0;
        for w in h.windows(2) {
            acc += 0.5 * (w[0] + w[1]) / m as f64;
            cum.push(acc);
        }
        Self {
            winner,
            rivals,
            cum,
        }
    }

    pub fn mass(&self) -> f64 {
        self.cum[self.cum.len() - 1]
    }

    pub fn cdf(&self, t: f64) -> f64 {
        let m = FIRST_OF_CELLS as f64;
        let x = self.winner.cdf(t).sqrt() * m;
        let i = (x.floor() as usize).min(FIRST_OF_CELLS - 1);
        let frac = x - i as f64;
        self.cum[i] + (self.cum[i + 1] - self.cum[i]) * frac
    }

    pub fn density(&self, t: f64) -> f64 {
        let d = self.winner.density(t);
        if d == 0.0 {
            return 0.0;
        }
        d * self.rivals.iter().map(|r| 1.0 - r.cdf(t)).product::<f64>()
    }

    /// Holding time conditional on this transition being the one taken.
    fn sample_conditional<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let v: f64 = rng.sample(Open01);
        let c = v * self.mass();
        let j = self.cum.partition_point(|&x| x < c).clamp(1, FIRST_OF_CELLS);
        let (c0, c1) = (self.cum[j - 1], self.cum[j]);
        let frac = if c1 > c0 { (c - c0) / (c1 - c0) } else { 0.0 };
        let s = ((j - 1) as f64 + frac) / FIRST_OF_CELLS as f64;
        self.winner.quantile(s * s)
    }
}

/// One nonzero kernel entry `Φ_ij(t)`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelEntry {
    /// `mass * φ(t)`.
    Scaled { mass: f64, function: RecoveryFunction },
    FirstOf(FirstOf),
}

impl KernelEntry {
    pub fn mass(&self) -> f64 {
        match self {
            KernelEntry::Scaled { mass, .. } => *mass,
            KernelEntry::FirstOf(f) => f.mass(),
        }
    }

    pub fn cdf(&self, t: f64) -> f64 {
        match self {
            KernelEntry::Scaled { mass, function } => mass * function.cdf(t),
            KernelEntry::FirstOf(f) => f.cdf(t),
        }
    }

    /// `Φ'_ij(t)` from the analytic family densities.
    pub fn density(&self, t: f64) -> f64 {
        match self {
            KernelEntry::Scaled { mass, function } => {
                if *mass == 0.0 {
                    0.0
                } else {
                    mass * function.density(t)
                }
            }
            KernelEntry::FirstOf(f) => f.density(t),
        }
    }

    /// Central-difference density, step `h`.
    pub fn density_fd(&self, t: f64, h: f64) -> f64 {
        let lo = (t - h).max(0.0);
        (self.cdf(t + h) - self.cdf(lo)) / (t + h - lo)
    }

    fn sample_holding<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            KernelEntry::Scaled { function, .. } => function.sample_recovery_time(rng),
            KernelEntry::FirstOf(f) => f.sample_conditional(rng),
        }
    }
}

/// Semi-Markov kernel stored by row; absent entries are identically zero.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelMatrix {
    rows: Vec<Vec<(usize, KernelEntry)>>,
}

impl KernelMatrix {
    /// Kernel with no transitions.
    pub fn zero(n_states: usize) -> Self {
        Self {
            rows: vec![Vec::new(); n_states],
        }
    }

    /// Validates indices and per-row transition mass.
    pub fn from_entries(
        n_states: usize,
        entries: impl IntoIterator<Item = (usize, usize, KernelEntry)>,
    ) -> Result<Self> {
        if n_states == 0 {
            return Err(Error::Domain("kernel needs at least one state".into()));
        }
        let mut rows: Vec<Vec<(usize, KernelEntry)>> = vec![Vec::new(); n_states];
        for (i, j, e) in entries {
            if i >= n_states || j >= n_states {
                return Err(Error::Kernel {
                    row: i,
                    reason: format!("entry ({i}, {j}) outside a {n_states}-state kernel"),
                });
            }
            let m = e.mass();
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::Kernel {
                    row: i,
                    reason: format!("transition mass to {j} is {m}"),
                });
            }
            if rows[i].iter().any(|(jj, _)| *jj == j) {
                return Err(Error::Kernel {
                    row: i,
                    reason: format!("duplicate entry for destination {j}"),
                });
            }
            rows[i].push((j, e));
        }
        for r in &mut rows {
            r.sort_by_key(|(j, _)| *j);
        }
        let k = Self { rows };
        for i in 0..n_states {
            let total = k.row_mass(i);
            if total > 1.0 + MASS_TOL {
                return Err(Error::Kernel {
                    row: i,
                    reason: format!("row mass {total} exceeds 1"),
                });
            }
        }
        Ok(k)
    }

    pub fn n_states(&self) -> usize {
        self.rows.len()
    }

    pub fn row(&self, i: usize) -> &[(usize, KernelEntry)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> Option<&KernelEntry> {
        self.rows[i].iter().find(|(jj, _)| *jj == j).map(|(_, e)| e)
    }

    /// `Φ_ij(t)`, zero for absent entries.
    pub fn eval(&self, i: usize, j: usize, t: f64) -> f64 {
        self.entry(i, j).map_or(0.0, |e| e.cdf(t))
    }

    /// `Σ_j Φ_ij(∞)`.
    pub fn row_mass(&self, i: usize) -> f64 {
        self.rows[i].iter().map(|(_, e)| e.mass()).sum()
    }

    pub fn is_absorbing(&self, i: usize) -> bool {
        self.rows[i].iter().all(|(_, e)| e.mass() == 0.0)
    }
}

/// Serialized kernel file:
/// `{"n_states": 2, "entries": [{"from": 0, "to": 1, "mass": 1.0, "function": {...}}]}`.
/// State indices are zero-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub n_states: usize,
    #[serde(default)]
    pub entries: Vec<KernelSpecEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSpecEntry {
    pub from: usize,
    pub to: usize,
    pub mass: f64,
    pub function: RecoveryFunction,
}

impl KernelSpec {
    pub fn build(&self) -> Result<KernelMatrix> {
        KernelMatrix::from_entries(
            self.n_states,
            self.entries.iter().map(|e| {
                (
                    e.from,
                    e.to,
                    KernelEntry::Scaled {
                        mass: e.mass,
                        function: e.function.clone(),
                    },
                )
            }),
        )
    }
}

/// Kernel of the clock-reset model: in state `A` every non-functional system
/// draws a fresh clock and the first to ring moves the SoS to `A ∪ {k}`.
pub fn build_kernel_clock_reset(
    set: &RecoveryFunctionSet,
    space: &StateSpace,
) -> Result<KernelMatrix> {
    if set.n_systems() != space.n_systems() {
        return Err(Error::Shape(format!(
            "{} recovery functions for a {}-system state space",
            set.n_systems(),
            space.n_systems()
        )));
    }
    let n = space.n_systems();
    let mut entries = Vec::new();
    for s in 0..space.n_states() {
        let mask = space.mask(s);
        let down: Vec<usize> = (0..n).filter(|k| mask & (1 << k) == 0).collect();
        for &k in &down {
            let target = space.index_of_mask(mask | (1 << k));
            let winner = set.get(k).clone();
            let entry = if down.len() == 1 {
                KernelEntry::Scaled {
                    mass: 1.0,
                    function: winner,
                }
            } else {
                let rivals = down
                    .iter()
                    .filter(|&&j| j != k)
                    .map(|&j| set.get(j).clone())
                    .collect();
                KernelEntry::FirstOf(FirstOf::new(winner, rivals))
            };
            entries.push((s, target, entry));
        }
    }
    KernelMatrix::from_entries(space.n_states(), entries)
}

/// Diagonal `W(t)` with `W_ii(t) = 1 - Σ_j Φ_ij(t)`, one diagonal per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct WaitingMatrix {
    grid: TimeGrid,
    diag: Vec<Vec<f64>>,
}

impl WaitingMatrix {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn diagonal(&self, k: usize) -> &[f64] {
        &self.diag[k]
    }

    /// Element `(i, j)` at grid index `k`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        if i == j {
            self.diag[k][i]
        } else {
            0.0
        }
    }
}

pub fn build_waiting_matrix(kernel: &KernelMatrix, grid: &TimeGrid) -> Result<WaitingMatrix> {
    let n = kernel.n_states();
    let mut diag = Vec::with_capacity(grid.len());
    for &t in grid.times() {
        let mut d = vec![1.0; n];
        for (i, w) in d.iter_mut().enumerate() {
            let mass: f64 = kernel.row(i).iter().map(|(_, e)| e.cdf(t)).sum();
            if mass > 1.0 + MASS_TOL {
                return Err(Error::Kernel {
                    row: i,
                    reason: format!("row mass {mass} exceeds 1 at t = {t}"),
                });
            }
            *w = (1.0 - mass).max(0.0);
        }
        diag.push(d);
    }
    Ok(WaitingMatrix {
        grid: grid.clone(),
        diag,
    })
}

/// Quality report of a Volterra solve, taken before renormalization.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveDiagnostics {
    /// Largest `|Σ_j R_ij(t) - 1|` over rows and grid points.
    pub max_row_sum_deviation: f64,
    /// Largest distance of an entry outside `[0, 1]`.
    pub max_clamp: f64,
}

/// `R(t)` on a grid, one row-major `N x N` matrix per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionProbabilityMatrix {
    grid: TimeGrid,
    n_states: usize,
    data: Vec<f64>,
    stderr: Option<Vec<f64>>,
    diagnostics: SolveDiagnostics,
}

impl TransitionProbabilityMatrix {
    /// Build from raw per-grid-point matrices (row-major `N x N`).
    pub fn from_matrices(grid: TimeGrid, n_states: usize, matrices: Vec<Vec<f64>>) -> Result<Self> {
        if matrices.len() != grid.len() || matrices.iter().any(|m| m.len() != n_states * n_states) {
            return Err(Error::Shape("matrices do not match grid and state count".into()));
        }
        Ok(Self {
            grid,
            n_states,
            data: matrices.concat(),
            stderr: None,
            diagnostics: SolveDiagnostics::default(),
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    /// Matrix at grid index `k`, row-major.
    pub fn at(&self, k: usize) -> &[f64] {
        let nn = self.n_states * self.n_states;
        &self.data[k * nn..(k + 1) * nn]
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.at(k)[i * self.n_states + j]
    }

    /// Monte Carlo standard errors in the same layout, when estimated.
    pub fn stderr_at(&self, k: usize) -> Option<&[f64]> {
        let nn = self.n_states * self.n_states;
        self.stderr.as_ref().map(|s| &s[k * nn..(k + 1) * nn])
    }

    pub fn diagnostics(&self) -> SolveDiagnostics {
        self.diagnostics
    }
}

/// Densities of the kernel on the grid, stored sparsely per row.
fn kernel_densities(kernel: &KernelMatrix, grid: &TimeGrid) -> Result<Vec<Vec<Vec<(usize, f64)>>>> {
    grid.times()
        .iter()
        .map(|&t| {
            (0..kernel.n_states())
                .map(|i| {
                    kernel
                        .row(i)
                        .iter()
                        .map(|(j, e)| {
                            let d = e.density(t);
                            // integrable singularity at the origin, handled by the solver
                            if d.is_finite() || (t == 0.0 && d == f64::INFINITY) {
                                Ok((*j, d))
                            } else {
                                Err(Error::Kernel {
                                    row: i,
                                    reason: format!("density to {j} is not finite at t = {t}"),
                                })
                            }
                        })
                        .filter(|r| !matches!(r, Ok((_, d)) if *d == 0.0))
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Time-marching trapezoidal solution of the Markov-renewal equation.
///
/// At step `n` the convolution uses `R(t_{n-m})` for `m >= 1`, all known; the
/// `m = 0` endpoint term involves `R(t_n)` and is moved to the left-hand side,
/// giving `(I - Δt/2 Φ'(0)) R(t_n) = rhs`. Entries whose density is infinite
/// at 0 (Weibull shape < 1) use the trapezoid rule on `∫ R(t - τ) dΦ(τ)`,
/// each panel weighted by its kernel increment `Φ(t_{m+1}) - Φ(t_m)`. Rows are
/// renormalized and clamped after the whole march; the raw deviation is kept
/// in [`SolveDiagnostics`].
pub fn solve_markov_renewal(
    kernel: &KernelMatrix,
    grid: &TimeGrid,
) -> Result<TransitionProbabilityMatrix> {
    let dt = grid
        .step()
        .ok_or_else(|| Error::Grid("the renewal solver needs a uniform grid".into()))?;
    let n = kernel.n_states();
    let nn = n * n;
    let steps = grid.len();
    let waiting = build_waiting_matrix(kernel, grid)?;
    let mut dens = kernel_densities(kernel, grid)?;

    // Entries with an infinite density at 0 weight R by kernel increments
    // ΔΦ_m = Φ(t_{m+1}) - Φ(t_m) instead: (row, column, increments).
    let mut singular = Vec::new();
    for (i, row) in dens[0].iter().enumerate() {
        for &(j, d) in row {
            if d.is_infinite() {
                let e = kernel.entry(i, j).expect("density of a stored entry");
                let cdf: Vec<f64> = grid.times().iter().map(|&t| e.cdf(t)).collect();
                singular.push((i, j, cdf.windows(2).map(|w| w[1] - w[0]).collect::<Vec<_>>()));
            }
        }
    }
    for (i, j, _) in &singular {
        for row in dens.iter_mut() {
            row[*i].retain(|(k, _)| k != j);
        }
    }

    let mut lhs = DMatrix::<f64>::identity(n, n);
    let mut implicit = false;
    for (i, row) in dens[0].iter().enumerate() {
        for &(j, d) in row {
            lhs[(i, j)] -= 0.5 * dt * d;
            implicit = true;
        }
    }
    for (i, j, inc) in &singular {
        lhs[(*i, *j)] -= 0.5 * inc[0];
        implicit = true;
    }
    let lhs_inv = if implicit {
        Some(lhs.try_inverse().ok_or_else(|| Error::Kernel {
            row: 0,
            reason: "I - dt/2 Φ'(0) is singular; refine the grid".into(),
        })?)
    } else {
        None
    };

    let mut r = vec![0.0; steps * nn];
    for i in 0..n {
        r[i * n + i] = 1.0;
    }

    let mut rhs = vec![0.0; nn];
    for step in 1..steps {
        rhs.iter_mut().for_each(|x| *x = 0.0);
        for m in 1..=step {
            let w = if m == step { 0.5 * dt } else { dt };
            let prev = step - m;
            let (head, _) = r.split_at(step * nn);
            let rp = &head[prev * nn..(prev + 1) * nn];
            for (i, row) in dens[m].iter().enumerate() {
                for &(j, d) in row {
                    let c = w * d;
                    let src = &rp[j * n..(j + 1) * n];
                    for (o, s) in rhs[i * n..(i + 1) * n].iter_mut().zip(src) {
                        *o += c * s;
                    }
                }
            }
        }
        for (i, j, inc) in &singular {
            for m in 1..=step {
                let c = if m == step { 0.5 * inc[m - 1] } else { 0.5 * (inc[m - 1] + inc[m]) };
                let rp = &r[(step - m) * nn..(step - m + 1) * nn];
                for (o, s) in rhs[i * n..(i + 1) * n].iter_mut().zip(&rp[j * n..(j + 1) * n]) {
                    *o += c * s;
                }
            }
        }
        for (i, w) in waiting.diagonal(step).iter().enumerate() {
            rhs[i * n + i] += w;
        }
        let out = &mut r[step * nn..(step + 1) * nn];
        match &lhs_inv {
            None => out.copy_from_slice(&rhs),
            Some(inv) => {
                for i in 0..n {
                    for c in 0..n {
                        out[i * n + c] = (0..n).map(|k| inv[(i, k)] * rhs[k * n + c]).sum();
                    }
                }
            }
        }
    }

    let mut diag = SolveDiagnostics::default();
    for row in r.chunks_mut(n) {
        let sum: f64 = row.iter().sum();
        diag.max_row_sum_deviation = diag.max_row_sum_deviation.max((sum - 1.0).abs());
        for x in row.iter_mut() {
            let excess = if *x < 0.0 { -*x } else { (*x - 1.0).max(0.0) };
            diag.max_clamp = diag.max_clamp.max(excess);
            *x = x.max(0.0);
        }
        let s: f64 = row.iter().sum();
        if s > 0.0 {
            row.iter_mut().for_each(|x| *x = (*x / s).min(1.0));
        }
    }

    Ok(TransitionProbabilityMatrix {
        grid: grid.clone(),
        n_states: n,
        data: r,
        stderr: None,
        diagnostics: diag,
    })
}

fn simulate_from<R: Rng + ?Sized>(
    kernel: &KernelMatrix,
    start: usize,
    horizon: f64,
    rng: &mut R,
) -> RealizationTrajectory {
    let mut state = start;
    let mut time = 0.0;
    let mut events = Vec::new();
    loop {
        let row = kernel.row(state);
        if row.is_empty() {
            break;
        }
        let v: f64 = rng.random();
        let mut acc = 0.0;
        let Some((dest, entry)) = row.iter().find(|(_, e)| {
            acc += e.mass();
            v < acc
        }) else {
            // leftover mass: the process stays here for good
            break;
        };
        time += entry.sample_holding(rng);
        if time > horizon {
            break;
        }
        if *dest != state {
            events.push(Transition { time, state: *dest });
        }
        state = *dest;
    }
    RealizationTrajectory {
        initial_state: start,
        events,
    }
}

/// One semi-Markov path: start drawn from `init`, destinations drawn with
/// probabilities `p_ij = Φ_ij(∞)` (leftover mass absorbs in place), holding
/// times drawn from `Φ_ij(t) / p_ij`. Stops at an absorbing state or past
/// `horizon`.
pub fn simulate_semi_markov<R: Rng + ?Sized>(
    kernel: &KernelMatrix,
    init: &InitialStateVector,
    horizon: f64,
    rng: &mut R,
) -> Result<RealizationTrajectory> {
    if init.len() != kernel.n_states() {
        return Err(Error::Shape("initial vector length differs from kernel size".into()));
    }
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    for i in 0..kernel.n_states() {
        let m = kernel.row_mass(i);
        if m > 1.0 + MASS_TOL {
            return Err(Error::Kernel {
                row: i,
                reason: format!("row mass {m} exceeds 1"),
            });
        }
    }
    let start = init.draw(rng);
    Ok(simulate_from(kernel, start, horizon, rng))
}

/// Monte Carlo `R(t)`: row `i` is the occupancy distribution of
/// `n_realizations` paths started in `i`. Path `r` from state `i` uses
/// `child_rng(child_seed(seed, i), r)`.
pub fn estimate_r_mc(
    kernel: &KernelMatrix,
    grid: &TimeGrid,
    n_realizations: usize,
    seed: u64,
) -> Result<TransitionProbabilityMatrix> {
    if n_realizations == 0 {
        return Err(Error::Config("n_realizations must be at least 1".into()));
    }
    let n = kernel.n_states();
    let nn = n * n;
    let steps = grid.len();
    let horizon = grid.t_end();
    let mut data = vec![0.0; steps * nn];
    let mut stderr = vec![0.0; steps * nn];

    for start in 0..n {
        let seed_i = child_seed(seed, start as u64);
        // width = steps x n occupancy indicators
        let moments = mc::accumulate(n_realizations, steps * n, |r, out| {
            out.iter_mut().for_each(|x| *x = 0.0);
            let mut rng = child_rng(seed_i, r as u64);
            let traj = simulate_from(kernel, start, horizon, &mut rng);
            traj.fill_states(grid.times(), |k, s| out[k * n + s] = 1.0);
        });
        let mean = moments.mean();
        let se = moments.stderr();
        for k in 0..steps {
            let dst = k * nn + start * n;
            data[dst..dst + n].copy_from_slice(&mean[k * n..(k + 1) * n]);
            stderr[dst..dst + n].copy_from_slice(&se[k * n..(k + 1) * n]);
        }
    }

    Ok(TransitionProbabilityMatrix {
        grid: grid.clone(),
        n_states: n,
        data,
        stderr: Some(stderr),
        diagnostics: SolveDiagnostics::default(),
    })
}
