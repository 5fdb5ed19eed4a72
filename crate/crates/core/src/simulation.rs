//! Synthetic specimens, corrupted readouts and the recovery phase diagram.
//!
//! Every trial draws from its own ChaCha8 stream, selected by the cell
//! indices and the trial number, so results do not depend on how trials
//! are scheduled across threads.

use crate::design::PoolingDesign;
use crate::matrix::CscMatrix;
use crate::nnlad::{solve_nnlad, NnladProblem, NnladSolution, SolveStatus, SolverOptions};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimulationError {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid too coarse for the region check: {0}")]
    GridTooCoarse(String),
}

/// Infected loads are Poisson(`poisson_mean`) conditioned to be at least 1;
/// `round(prevalence * n)` individuals are infected.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalModel {
    poisson_mean: f64,
    prevalence: f64,
}

impl SignalModel {
    pub const DEFAULT_POISSON_MEAN: f64 = 100.0;

    pub fn new(poisson_mean: f64, prevalence: f64) -> Result<Self, SimulationError> {
        if !(poisson_mean > 0.0 && poisson_mean.is_finite()) {
            return Err(SimulationError::InvalidModel(format!("poisson mean {poisson_mean}")));
        }
        if !(0.0..=1.0).contains(&prevalence) {
            return Err(SimulationError::InvalidModel(format!("prevalence {prevalence}")));
        }
        Ok(Self { poisson_mean, prevalence })
    }

    pub fn poisson_mean(&self) -> f64 {
        self.poisson_mean
    }

    pub fn prevalence(&self) -> f64 {
        self.prevalence
    }

    pub fn support_size(&self, n: usize) -> usize {
        ((self.prevalence * n as f64).round() as usize).min(n)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpecimenProfile {
    pub loads: Vec<f64>,
}

impl SpecimenProfile {
    pub fn support(&self) -> Vec<usize> {
        (0..self.loads.len()).filter(|&i| self.loads[i] != 0.0).collect()
    }

    pub fn sparsity(&self) -> usize {
        self.loads.iter().filter(|&&v| v != 0.0).count()
    }
}

pub fn draw_signal<R: Rng + ?Sized>(n: usize, model: SignalModel, rng: &mut R) -> SpecimenProfile {
    let k = model.support_size(n);
    let mut loads = vec![0.0; n];
    if k == 0 {
        return SpecimenProfile { loads };
    }
    let poisson = Poisson::new(model.poisson_mean).expect("validated mean");
    for idx in sample(rng, n, k).into_iter() {
        loads[idx] = loop {
            let v: f64 = poisson.sample(rng);
            if v >= 1.0 {
                break v;
            }
        };
    }
    SpecimenProfile { loads }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorruptionKind {
    /// The test reads zero (a false negative).
    ZeroOut,
    /// The test reads a uniform value in `[0, max(clean))`.
    ReplaceRandom,
    /// Each corrupted test picks one of the above with probability 1/2.
    Mixed,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorruptionModel {
    fraction: f64,
    kind: CorruptionKind,
}

impl CorruptionModel {
    pub fn new(fraction: f64, kind: CorruptionKind) -> Result<Self, SimulationError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SimulationError::InvalidModel(format!("corruption fraction {fraction}")));
        }
        Ok(Self { fraction, kind })
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn kind(&self) -> CorruptionKind {
        self.kind
    }

    pub fn corrupted_count(&self, m: usize) -> usize {
        ((self.fraction * m as f64).round() as usize).min(m)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedReadout {
    pub readout: Vec<f64>,
    /// `readout - clean`
    pub error: Vec<f64>,
    /// Indices selected for corruption, sorted. A selected test can keep its
    /// clean value (zeroing a test that already reads zero), so
    /// `||error||_0 <= corrupted.len()`.
    pub corrupted: Vec<usize>,
}

pub fn corrupt_readout<R: Rng + ?Sized>(clean: &[f64], model: CorruptionModel, rng: &mut R) -> CorruptedReadout {
    let m = clean.len();
    let count = model.corrupted_count(m);
    let top = clean.iter().copied().fold(0.0, f64::max);
    let mut readout = clean.to_vec();
    let mut corrupted: Vec<usize> = if count == 0 { Vec::new() } else { sample(rng, m, count).into_vec() };
    corrupted.sort_unstable();
    for &i in &corrupted {
        let zero = match model.kind {
            CorruptionKind::ZeroOut => true,
            CorruptionKind::ReplaceRandom => false,
            CorruptionKind::Mixed => rng.random_bool(0.5),
        };
        readout[i] = if zero || top <= 0.0 { 0.0 } else { rng.random_range(0.0..top) };
    }
    let error = readout.iter().zip(clean).map(|(r, c)| r - c).collect();
    CorruptedReadout { readout, error, corrupted }
}

/// Settings shared by every cell of a phase diagram.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseConfig {
    pub trials: usize,
    /// Success iff `||x# - x||_1 <= success_rel_tol * max(1, ||x||_1)`.
    pub success_rel_tol: f64,
    pub seed: u64,
    pub poisson_mean: f64,
    pub corruption: CorruptionKind,
    pub solver: SolverOptions,
}

impl PhaseConfig {
    pub fn new(trials: usize, seed: u64) -> Self {
        Self {
            trials,
            success_rel_tol: 1e-3,
            seed,
            poisson_mean: SignalModel::DEFAULT_POISSON_MEAN,
            corruption: CorruptionKind::Mixed,
            solver: SolverOptions::default(),
        }
    }
}

/// Random stream of one trial. Indices are packed into disjoint bit ranges.
pub fn trial_rng(seed: u64, p_index: usize, pe_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((p_index as u64) << 42) | ((pe_index as u64) << 21) | trial as u64);
    rng
}

#[derive(Clone, Debug)]
pub struct TrialRecord {
    pub signal: SpecimenProfile,
    pub clean: Vec<f64>,
    pub corrupted: CorruptedReadout,
    pub solution: NnladSolution,
    /// `||x# - x||_1`
    pub error_l1: f64,
}

impl TrialRecord {
    pub fn signal_l1(&self) -> f64 {
        self.signal.loads.iter().map(|v| v.abs()).sum()
    }

    pub fn noise_l1(&self) -> f64 {
        self.corrupted.error.iter().map(|v| v.abs()).sum()
    }

    pub fn succeeded(&self, success_rel_tol: f64) -> bool {
        self.error_l1 <= success_rel_tol * self.signal_l1().max(1.0)
    }
}

/// Draw, measure, corrupt and decode once.
pub fn simulate_trial<R: Rng + ?Sized>(
    matrix: &CscMatrix,
    signal: SignalModel,
    corruption: CorruptionModel,
    solver: &SolverOptions,
    rng: &mut R,
) -> TrialRecord {
    let x = draw_signal(matrix.ncols(), signal, rng);
    let clean = matrix.mul(&x.loads);
    let corrupted = corrupt_readout(&clean, corruption, rng);
    let problem = NnladProblem::new(matrix.clone(), corrupted.readout.clone()).expect("lengths match");
    let solution = solve_nnlad(&problem, solver);
    let error_l1 = solution.estimate.iter().zip(&x.loads).map(|(a, b)| (a - b).abs()).sum();
    TrialRecord { signal: x, clean, corrupted, solution, error_l1 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub p_grid: Vec<f64>,
    pub pe_grid: Vec<f64>,
    pub trials: usize,
    /// `success_counts[i][j]` for `p_grid[i]`, `pe_grid[j]`.
    pub success_counts: Vec<Vec<usize>>,
    /// Trials whose solve reported a numerical failure (counted as failures).
    pub solver_failures: Vec<Vec<usize>>,
    pub seed: u64,
}

impl PhaseDiagram {
    pub fn probability(&self, i: usize, j: usize) -> f64 {
        self.success_counts[i][j] as f64 / self.trials as f64
    }

    /// `(p, pe, successes, probability)` in row-major `(p, pe)` order.
    pub fn cells(&self) -> impl Iterator<Item = (f64, f64, usize, f64)> + '_ {
        self.p_grid.iter().enumerate().flat_map(move |(i, &p)| {
            self.pe_grid
                .iter()
                .enumerate()
                .map(move |(j, &pe)| (p, pe, self.success_counts[i][j], self.probability(i, j)))
        })
    }
}

fn check_grid(name: &str, grid: &[f64], lo: f64, hi: f64) -> Result<(), SimulationError> {
    if grid.is_empty() {
        return Err(SimulationError::InvalidGrid(format!("{name} grid is empty")));
    }
    if grid.iter().any(|v| !(lo..=hi).contains(v)) {
        return Err(SimulationError::InvalidGrid(format!("{name} grid leaves [{lo}, {hi}]")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SimulationError::InvalidGrid(format!("{name} grid is not strictly increasing")));
    }
    Ok(())
}

pub fn run_phase_diagram(
    design: &PoolingDesign,
    p_grid: &[f64],
    pe_grid: &[f64],
    config: &PhaseConfig,
) -> Result<PhaseDiagram, SimulationError> {
    check_grid("p", p_grid, 0.0, 1.0)?;
    check_grid("pe", pe_grid, 0.0, 1.0)?;
    if config.trials == 0 {
        return Err(SimulationError::InvalidModel("trials must be positive".into()));
    }
    SignalModel::new(config.poisson_mean, 0.0)?;
    let matrix = design.normalized();
    let jobs: Vec<(usize, usize, usize)> = (0..p_grid.len())
        .flat_map(|i| (0..pe_grid.len()).flat_map(move |j| (0..config.trials).map(move |t| (i, j, t))))
        .collect();
    let outcomes: Vec<(bool, bool)> = jobs
        .par_iter()
        .map(|&(i, j, t)| {
            let mut rng = trial_rng(config.seed, i, j, t);
            let signal = SignalModel::new(config.poisson_mean, p_grid[i]).expect("checked");
            let corruption = CorruptionModel::new(pe_grid[j], config.corruption).expect("checked");
            let rec = simulate_trial(&matrix, signal, corruption, &config.solver, &mut rng);
            let failed = rec.solution.status == SolveStatus::NumericalFailure;
            (!failed && rec.succeeded(config.success_rel_tol), failed)
        })
        .collect();
    let mut success_counts = vec![vec![0; pe_grid.len()]; p_grid.len()];
    let mut solver_failures = vec![vec![0; pe_grid.len()]; p_grid.len()];
    for (&(i, j, _), &(ok, failed)) in jobs.iter().zip(&outcomes) {
        success_counts[i][j] += ok as usize;
        solver_failures[i][j] += failed as usize;
    }
    Ok(PhaseDiagram {
        p_grid: p_grid.to_vec(),
        pe_grid: pe_grid.to_vec(),
        trials: config.trials,
        success_counts,
        solver_failures,
        seed: config.seed,
    })
}

/// Inclusive grid `start, start + step, ..., stop`; the endpoint is kept
/// when it is within 1e-12 of a grid point. Values are rounded to 12
/// decimals so they print cleanly.
pub fn range_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>, SimulationError> {
    if !(step > 0.0 && start.is_finite() && stop.is_finite()) || stop < start {
        return Err(SimulationError::InvalidGrid(format!("{start}:{stop}:{step}")));
    }
    let count = ((stop - start) / step + 1e-12).floor() as usize + 1;
    Ok((0..count).map(|k| ((start + k as f64 * step) * 1e12).round() / 1e12).collect())
}

const REGION_PE_MAX: f64 = 0.06;
const REGION_SUM_MAX: f64 = 0.08;
const REGION_TOL: f64 = 1e-12;

/// The empirically reported success region: `pe <= 0.06` and
/// `4/3 pe + p <= 0.08`, boundary included.
pub fn in_reported_region(p: f64, pe: f64) -> bool {
    pe <= REGION_PE_MAX + REGION_TOL && 4.0 / 3.0 * pe + p <= REGION_SUM_MAX + REGION_TOL
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionCell {
    pub p: f64,
    pub pe: f64,
    pub inside: bool,
    /// Still outside after moving one grid step towards the origin on both axes.
    pub outside_with_margin: bool,
    pub probability: f64,
}

impl RegionCell {
    pub fn agrees(&self) -> bool {
        (!self.inside || self.probability >= 0.9) && (!self.outside_with_margin || self.probability <= 0.1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RegionReport {
    pub cells: Vec<RegionCell>,
    /// Fraction of cells whose probability agrees with the region.
    pub agreement: f64,
}

fn max_step(grid: &[f64]) -> f64 {
    grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max)
}

pub fn region_check(diagram: &PhaseDiagram) -> Result<RegionReport, SimulationError> {
    for (name, grid, hi) in [("p", &diagram.p_grid, 0.12), ("pe", &diagram.pe_grid, 0.1)] {
        let (first, last) = (grid[0], grid[grid.len() - 1]);
        let step = max_step(grid);
        if first > 1e-12 || last < hi - 1e-12 || grid.len() < 2 || step > 0.01 + 1e-12 {
            return Err(SimulationError::GridTooCoarse(format!(
                "{name} grid must cover [0, {hi}] with step <= 0.01 (covers [{first}, {last}], step {step})"
            )));
        }
    }
    let (dp, dpe) = (max_step(&diagram.p_grid), max_step(&diagram.pe_grid));
    let cells: Vec<RegionCell> = diagram
        .cells()
        .map(|(p, pe, _, probability)| RegionCell {
            p,
            pe,
            inside: in_reported_region(p, pe),
            outside_with_margin: !in_reported_region((p - dp).max(0.0), (pe - dpe).max(0.0)),
            probability,
        })
        .collect();
    let agreement = cells.iter().filter(|c| c.agrees()).count() as f64 / cells.len() as f64;
    Ok(RegionReport { cells, agreement })
}
