//! Robust Gauss-Newton solve of a single epoch.
//!
//! The weighted objective sums the information-weighted squared residuals of
//! all admitted factors. The Huber kernel reweights the absolute-position
//! factors only; relative and length factors stay quadratic. Weights are
//! frozen within an iteration and the step is halved (up to
//! [`MAX_STEP_HALVINGS`] times) whenever it would increase the frozen-weight
//! cost, so accepted iterations never increase it.

use nalgebra::{Cholesky, Matrix3, SMatrix, SVector, Vector3};

use super::factors::{
    baseline_length_jacobian, baseline_length_residual, huber_cost, huber_weight, whitened_norm,
    MIN_BASELINE_SEPARATION,
};
use super::{
    AntennaId, AntennaStateVector, ClasStatus, EpochProblem, SolveError, SolverSettings,
};
use crate::geodesy::EnuPosition;

/// Maximum number of step halvings per iteration before the solver stops
/// rather than accept a cost increase.
pub const MAX_STEP_HALVINGS: usize = 8;

/// Relative slack when comparing costs during damping, so that converged
/// solves are not rejected over rounding noise.
const COST_SLACK: f64 = 1e-12;

/// Result of the observability analysis: an antenna is positioned iff it is
/// connected through ambiguity-fixed baselines to an antenna holding an
/// absolute fix. Length priors are 1-D constraints and never position an
/// antenna on their own.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Observability {
    WellPosed,
    /// The listed antennas are free to translate rigidly (per connected
    /// component) without changing any residual.
    Underdetermined { free_antennas: Vec<AntennaId> },
}

pub fn observability_check(problem: &EpochProblem) -> Observability {
    let mut anchored = [false; 4];
    for fix in &problem.clas {
        if fix.status != ClasStatus::None {
            anchored[fix.antenna.index()] = true;
        }
    }
    let mut adjacency = [[false; 4]; 4];
    for obs in &problem.baselines {
        if obs.fixed && obs.from != obs.to {
            adjacency[obs.from.index()][obs.to.index()] = true;
            adjacency[obs.to.index()][obs.from.index()] = true;
        }
    }
    // Flood anchor status across fixed baselines.
    let mut changed = true;
    while changed {
        changed = false;
        for i in 0..4 {
            if !anchored[i] {
                continue;
            }
            for j in 0..4 {
                if adjacency[i][j] && !anchored[j] {
                    anchored[j] = true;
                    changed = true;
                }
            }
        }
    }
    let free_antennas: Vec<AntennaId> = AntennaId::ALL
        .iter()
        .copied()
        .filter(|a| !anchored[a.index()])
        .collect();
    if free_antennas.is_empty() {
        Observability::WellPosed
    } else {
        Observability::Underdetermined { free_antennas }
    }
}

/// Seed the state vector for an epoch. Preference order per antenna: the
/// previous epoch's solution (returned verbatim when present), the antenna's
/// own absolute fix, propagation from a seeded antenna across fixed
/// baselines, and finally translation from the section partner by the
/// nominal spacing. Deterministic for fixed inputs.
pub fn build_initial_guess(
    problem: &EpochProblem,
    previous: Option<&AntennaStateVector>,
) -> Result<AntennaStateVector, SolveError> {
    if let Some(prev) = previous {
        return Ok(*prev);
    }
    let mut seeded: [Option<EnuPosition>; 4] = [None; 4];
    for fix in &problem.clas {
        let idx = fix.antenna.index();
        if fix.status != ClasStatus::None && seeded[idx].is_none() {
            seeded[idx] = Some(fix.position);
        }
    }
    // Propagate across fixed baselines until settled.
    let mut changed = true;
    while changed {
        changed = false;
        for obs in &problem.baselines {
            if !obs.fixed {
                continue;
            }
            let (fi, ti) = (obs.from.index(), obs.to.index());
            match (seeded[fi], seeded[ti]) {
                (Some(xf), None) => {
                    // e = x_from - x_to - b = 0  =>  x_to = x_from - b
                    seeded[ti] = Some(EnuPosition::from_vector(xf.as_vector() - obs.baseline));
                    changed = true;
                }
                (None, Some(xt)) => {
                    seeded[fi] = Some(EnuPosition::from_vector(xt.as_vector() + obs.baseline));
                    changed = true;
                }
                _ => {}
            }
        }
    }
    // Nominal-geometry fallback within each section; heading unknown at this
    // point, so the spacing is applied along east.
    for (a, b, length) in [(0usize, 1usize, problem.prior.l12), (2, 3, problem.prior.l34)] {
        match (seeded[a], seeded[b]) {
            (Some(xa), None) => {
                seeded[b] = Some(xa + Vector3::new(length, 0.0, 0.0));
            }
            (None, Some(xb)) => {
                seeded[a] = Some(xb + Vector3::new(-length, 0.0, 0.0));
            }
            _ => {}
        }
    }
    let mut antennas = [EnuPosition::default(); 4];
    for (i, slot) in seeded.iter().enumerate() {
        antennas[i] = slot.ok_or(SolveError::UnseededAntenna(AntennaId::ALL[i]))?;
    }
    Ok(AntennaStateVector { antennas })
}

/// One accepted Gauss-Newton iteration, costs evaluated with that
/// iteration's frozen Huber weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStat {
    pub cost_before: f64,
    pub cost_after: f64,
    pub step_norm: f64,
    pub halvings: usize,
}

/// Counts of admitted factors, used downstream to grade solution quality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FactorAvailability {
    /// Antennas holding at least one ambiguity-fixed absolute solution.
    pub clas_fix_antennas: usize,
    /// Antennas holding only float absolute solutions.
    pub clas_float_antennas: usize,
    /// Distinct antenna pairs with an ambiguity-fixed baseline.
    pub fixed_baseline_pairs: usize,
}

/// Diagnostics from a single epoch solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub timestamp: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Robust objective value at the final iterate.
    pub final_cost: f64,
    /// Per absolute-position factor: (antenna, residual norm in meters,
    /// whitened norm, final Huber weight).
    pub clas_residuals: Vec<(AntennaId, f64, f64, f64)>,
    /// Per relative factor: (from, to, residual norm in meters).
    pub mvrtk_residuals: Vec<(AntennaId, AntennaId, f64)>,
    /// Signed length residuals for the front and rear pairs, meters; `None`
    /// when the factor was dropped for degenerate geometry.
    pub length_residuals: [Option<f64>; 2],
    /// True when a length factor had to be dropped this epoch.
    pub dropped_length_factor: bool,
    pub iteration_trace: Vec<IterationStat>,
    pub availability: FactorAvailability,
}

struct PreparedClas {
    antenna: AntennaId,
    b: Vector3<f64>,
    omega: Matrix3<f64>,
}

struct PreparedBaseline {
    from: AntennaId,
    to: AntennaId,
    b: Vector3<f64>,
    omega: Matrix3<f64>,
}

struct Workspace {
    clas: Vec<PreparedClas>,
    baselines: Vec<PreparedBaseline>,
    /// (first index, second index, length, information).
    lengths: [(usize, usize, f64, f64); 2],
}

impl Workspace {
    fn prepare(problem: &EpochProblem) -> Result<Self, SolveError> {
        let mut clas = Vec::with_capacity(problem.clas.len());
        for fix in &problem.clas {
            if fix.status == ClasStatus::None {
                continue;
            }
            let omega = fix
                .covariance
                .information(&format!("CLAS antenna {}", fix.antenna))?;
            clas.push(PreparedClas { antenna: fix.antenna, b: fix.position.as_vector(), omega });
        }
        let mut baselines = Vec::with_capacity(problem.baselines.len());
        for obs in &problem.baselines {
            if !obs.fixed {
                continue;
            }
            obs.validate()?;
            let omega = obs
                .covariance
                .information(&format!("baseline {}-{}", obs.from, obs.to))?;
            baselines.push(PreparedBaseline {
                from: obs.from,
                to: obs.to,
                b: obs.baseline,
                omega,
            });
        }
        let omega_len = 1.0 / problem.prior.variance;
        let lengths = [
            (0, 1, problem.prior.l12, omega_len),
            (2, 3, problem.prior.l34, omega_len),
        ];
        Ok(Self { clas, baselines, lengths })
    }

    fn antenna_positions(x: &SVector<f64, 12>, idx: usize) -> Vector3<f64> {
        x.fixed_rows::<3>(3 * idx).into_owned()
    }

    /// Frozen-weight quadratic cost.
    fn cost(&self, x: &SVector<f64, 12>, weights: &[f64]) -> f64 {
        let mut cost = 0.0;
        for (factor, w) in self.clas.iter().zip(weights) {
            let e = Self::antenna_positions(x, factor.antenna.index()) - factor.b;
            cost += w * (e.transpose() * factor.omega * e)[(0, 0)];
        }
        for factor in &self.baselines {
            let e = Self::antenna_positions(x, factor.from.index())
                - Self::antenna_positions(x, factor.to.index())
                - factor.b;
            cost += (e.transpose() * factor.omega * e)[(0, 0)];
        }
        for &(a, b, length, omega) in &self.lengths {
            let d = Self::antenna_positions(x, b) - Self::antenna_positions(x, a);
            let sep = d.norm();
            if sep >= MIN_BASELINE_SEPARATION {
                let e = sep - length;
                cost += omega * e * e;
            }
        }
        cost
    }

    /// True robust objective (Huber on absolute factors when enabled).
    fn robust_cost(&self, x: &SVector<f64, 12>, settings: &SolverSettings) -> f64 {
        let mut cost = 0.0;
        for factor in &self.clas {
            let e = Self::antenna_positions(x, factor.antenna.index()) - factor.b;
            let s = whitened_norm(&e, &factor.omega);
            cost += if settings.huber_enabled {
                huber_cost(s, settings.huber_delta)
            } else {
                s * s
            };
        }
        for factor in &self.baselines {
            let e = Self::antenna_positions(x, factor.from.index())
                - Self::antenna_positions(x, factor.to.index())
                - factor.b;
            cost += (e.transpose() * factor.omega * e)[(0, 0)];
        }
        for &(a, b, length, omega) in &self.lengths {
            let d = Self::antenna_positions(x, b) - Self::antenna_positions(x, a);
            let sep = d.norm();
            if sep >= MIN_BASELINE_SEPARATION {
                let e = sep - length;
                cost += omega * e * e;
            }
        }
        cost
    }

    fn clas_weights(&self, x: &SVector<f64, 12>, settings: &SolverSettings) -> Vec<f64> {
        self.clas
            .iter()
            .map(|factor| {
                if !settings.huber_enabled {
                    return 1.0;
                }
                let e = Self::antenna_positions(x, factor.antenna.index()) - factor.b;
                huber_weight(whitened_norm(&e, &factor.omega), settings.huber_delta)
            })
            .collect()
    }

    /// Assemble the weighted normal equations H * delta = -g. Returns true
    /// when a length factor had to be dropped for degenerate geometry.
    fn assemble(
        &self,
        x: &SVector<f64, 12>,
        weights: &[f64],
        h: &mut SMatrix<f64, 12, 12>,
        g: &mut SVector<f64, 12>,
    ) -> bool {
        h.fill(0.0);
        g.fill(0.0);
        for (factor, &w) in self.clas.iter().zip(weights) {
            let i = factor.antenna.index();
            let e = Self::antenna_positions(x, i) - factor.b;
            let w_omega = factor.omega * w;
            add_block(h, i, i, &w_omega);
            add_grad(g, i, &(w_omega * e));
        }
        for factor in &self.baselines {
            let fi = factor.from.index();
            let ti = factor.to.index();
            let e = Self::antenna_positions(x, fi) - Self::antenna_positions(x, ti) - factor.b;
            add_block(h, fi, fi, &factor.omega);
            add_block(h, ti, ti, &factor.omega);
            let neg = -factor.omega;
            add_block(h, fi, ti, &neg);
            add_block(h, ti, fi, &neg);
            let oe = factor.omega * e;
            add_grad(g, fi, &oe);
            add_grad(g, ti, &(-oe));
        }
        let mut dropped = false;
        for &(a, b, length, omega) in &self.lengths {
            let xa = EnuPosition::from_vector(Self::antenna_positions(x, a));
            let xb = EnuPosition::from_vector(Self::antenna_positions(x, b));
            let (e, (ja, jb)) = match (
                baseline_length_residual(xa, xb, length),
                baseline_length_jacobian(xa, xb),
            ) {
                (Ok(e), Ok(j)) => (e, j),
                _ => {
                    dropped = true;
                    continue;
                }
            };
            let ua = ja.transpose();
            let ub = jb.transpose();
            add_block(h, a, a, &(omega * ua * ua.transpose()));
            add_block(h, b, b, &(omega * ub * ub.transpose()));
            add_block(h, a, b, &(omega * ua * ub.transpose()));
            add_block(h, b, a, &(omega * ub * ua.transpose()));
            add_grad(g, a, &(ua * (omega * e)));
            add_grad(g, b, &(ub * (omega * e)));
        }
        dropped
    }
}

fn add_block(h: &mut SMatrix<f64, 12, 12>, bi: usize, bj: usize, block: &Matrix3<f64>) {
    let mut view = h.fixed_view_mut::<3, 3>(3 * bi, 3 * bj);
    view += block;
}

fn add_grad(g: &mut SVector<f64, 12>, bi: usize, v: &Vector3<f64>) {
    let mut view = g.fixed_rows_mut::<3>(3 * bi);
    view += v;
}

fn availability(problem: &EpochProblem) -> FactorAvailability {
    let mut has_fix = [false; 4];
    let mut has_float = [false; 4];
    for fix in &problem.clas {
        match fix.status {
            ClasStatus::Fix => has_fix[fix.antenna.index()] = true,
            ClasStatus::Float => has_float[fix.antenna.index()] = true,
            ClasStatus::None => {}
        }
    }
    let mut pair_fixed = [[false; 4]; 4];
    for obs in &problem.baselines {
        if obs.fixed && obs.from != obs.to {
            let (a, b) = (obs.from.index().min(obs.to.index()), obs.from.index().max(obs.to.index()));
            pair_fixed[a][b] = true;
        }
    }
    FactorAvailability {
        clas_fix_antennas: has_fix.iter().filter(|&&f| f).count(),
        clas_float_antennas: (0..4).filter(|&i| has_float[i] && !has_fix[i]).count(),
        fixed_baseline_pairs: pair_fixed.iter().flatten().filter(|&&f| f).count(),
    }
}

fn factor_counts(problem: &EpochProblem) -> [usize; 4] {
    let mut counts = [0usize; 4];
    for fix in &problem.clas {
        if fix.status != ClasStatus::None {
            counts[fix.antenna.index()] += 1;
        }
    }
    for obs in &problem.baselines {
        if obs.fixed && obs.from != obs.to {
            counts[obs.from.index()] += 1;
            counts[obs.to.index()] += 1;
        }
    }
    counts
}

/// Solve one epoch by damped Gauss-Newton on the robust weighted objective.
///
/// Non-convergence within the iteration budget is reported through the
/// `converged` flag with the last iterate returned; structural defects
/// (unobservable antennas, singular normal equations) are errors.
pub fn solve_epoch(
    problem: &EpochProblem,
    settings: &SolverSettings,
) -> Result<(AntennaStateVector, SolveReport), SolveError> {
    if let Observability::Underdetermined { free_antennas } = observability_check(problem) {
        return Err(SolveError::Unobservable(free_antennas));
    }
    let counts = factor_counts(problem);
    let starved: Vec<AntennaId> = AntennaId::ALL
        .iter()
        .copied()
        .filter(|a| counts[a.index()] < settings.min_factor_count_per_antenna)
        .collect();
    if !starved.is_empty() {
        return Err(SolveError::InsufficientFactors(starved));
    }

    let workspace = Workspace::prepare(problem)?;
    let initial = build_initial_guess(problem, problem.initial_guess.as_ref())?;
    let mut x = initial.as_svector();

    let mut h = SMatrix::<f64, 12, 12>::zeros();
    let mut g = SVector::<f64, 12>::zeros();
    let mut trace = Vec::with_capacity(settings.max_iterations);
    let mut converged = false;
    let mut dropped_any = false;

    for _ in 0..settings.max_iterations {
        let weights = workspace.clas_weights(&x, settings);
        let cost_before = workspace.cost(&x, &weights);
        dropped_any |= workspace.assemble(&x, &weights, &mut h, &mut g);

        let chol = Cholesky::new(h).ok_or(SolveError::SingularNormalEquations)?;
        let mut step = chol.solve(&(-g));

        let mut halvings = 0;
        let mut candidate = x + step;
        let mut cost_after = workspace.cost(&candidate, &weights);
        let budget = cost_before * (1.0 + COST_SLACK);
        while cost_after > budget && halvings < MAX_STEP_HALVINGS {
            step *= 0.5;
            candidate = x + step;
            cost_after = workspace.cost(&candidate, &weights);
            halvings += 1;
        }
        if cost_after > budget {
            // No acceptable step; keep the current iterate.
            break;
        }
        let step_norm = step.norm();
        x = candidate;
        trace.push(IterationStat { cost_before, cost_after, step_norm, halvings });
        if step_norm < settings.step_tolerance {
            converged = true;
            break;
        }
    }

    let state = AntennaStateVector::from_svector(&x);
    let report = build_report(problem, &workspace, &x, settings, converged, dropped_any, trace);
    Ok((state, report))
}

fn build_report(
    problem: &EpochProblem,
    workspace: &Workspace,
    x: &SVector<f64, 12>,
    settings: &SolverSettings,
    converged: bool,
    dropped_length_factor: bool,
    iteration_trace: Vec<IterationStat>,
) -> SolveReport {
    let clas_residuals = workspace
        .clas
        .iter()
        .map(|factor| {
            let e = Workspace::antenna_positions(x, factor.antenna.index()) - factor.b;
            let s = whitened_norm(&e, &factor.omega);
            let w = if settings.huber_enabled {
                huber_weight(s, settings.huber_delta)
            } else {
                1.0
            };
            (factor.antenna, e.norm(), s, w)
        })
        .collect();
    let mvrtk_residuals = workspace
        .baselines
        .iter()
        .map(|factor| {
            let e = Workspace::antenna_positions(x, factor.from.index())
                - Workspace::antenna_positions(x, factor.to.index())
                - factor.b;
            (factor.from, factor.to, e.norm())
        })
        .collect();
    let mut length_residuals = [None, None];
    for (slot, &(a, b, length, _)) in length_residuals.iter_mut().zip(&workspace.lengths) {
        let xa = EnuPosition::from_vector(Workspace::antenna_positions(x, a));
        let xb = EnuPosition::from_vector(Workspace::antenna_positions(x, b));
        *slot = baseline_length_residual(xa, xb, length).ok();
    }
    SolveReport {
        timestamp: problem.timestamp,
        iterations: iteration_trace.len(),
        converged,
        final_cost: workspace.robust_cost(x, settings),
        clas_residuals,
        mvrtk_residuals,
        length_residuals,
        dropped_length_factor,
        iteration_trace,
        availability: availability(problem),
    }
}
