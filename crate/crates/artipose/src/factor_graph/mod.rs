//! Per-epoch estimation problem: the four-antenna state vector, the three
//! factor types (absolute position, inter-antenna baseline, baseline length
//! prior) with their residuals and information matrices, and the robust
//! Gauss-Newton solver.
//!
//! Each epoch is solved independently; the previous epoch's solution may be
//! supplied as an initial guess but never enters the objective.

mod factors;
mod solver;

pub use factors::{
    baseline_length_jacobian, baseline_length_residual, clas_residual, huber_weight,
    mvrtk_residual, whitened_norm,
};
pub use solver::{
    build_initial_guess, observability_check, solve_epoch, FactorAvailability, IterationStat,
    Observability, SolveReport,
};

use nalgebra::{Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::EnuPosition;

/// Errors from factor residual evaluation and problem validation.
#[derive(Debug, Error, PartialEq)]
pub enum FactorError {
    #[error("CLAS factor for antenna {0} has status 'none'; caller must filter")]
    ExcludedStatus(AntennaId),
    #[error("baseline {0}-{1} is not ambiguity-fixed; caller must filter")]
    NotFixed(AntennaId, AntennaId),
    #[error("degenerate geometry: antennas separated by {separation} m (< {min} m)")]
    DegenerateGeometry { separation: f64, min: f64 },
    #[error("covariance is not symmetric positive-definite ({context})")]
    InvalidCovariance { context: String },
    #[error("antenna id {0} outside 1..=4")]
    InvalidAntennaId(u8),
    #[error("baseline observation connects antenna {0} to itself")]
    SelfBaseline(AntennaId),
}

/// Errors from the per-epoch solve.
#[derive(Debug, Error, PartialEq)]
pub enum SolveError {
    #[error("problem underdetermined: antennas {0:?} not reachable from any absolute fix")]
    Unobservable(Vec<AntennaId>),
    #[error("antennas {0:?} touched by fewer factors than the configured minimum")]
    InsufficientFactors(Vec<AntennaId>),
    #[error("no factor and no previous state can seed antenna {0}")]
    UnseededAntenna(AntennaId),
    #[error("normal equations singular (rank-deficient factor set)")]
    SingularNormalEquations,
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// Antenna identifier, 1..=4. Antennas 1-2 are the front section, 3-4 the
/// rear section.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AntennaId(u8);

impl AntennaId {
    pub const ALL: [AntennaId; 4] = [AntennaId(1), AntennaId(2), AntennaId(3), AntennaId(4)];

    pub fn new(id: u8) -> Result<Self, FactorError> {
        if (1..=4).contains(&id) {
            Ok(Self(id))
        } else {
            Err(FactorError::InvalidAntennaId(id))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based index into state arrays.
    pub fn index(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl std::fmt::Display for AntennaId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The six inter-antenna pairs in canonical order.
pub const BASELINE_PAIRS: [(u8, u8); 6] = [(1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)];

/// The optimization unknowns: the 3-D positions of the four antennas in the
/// local ENU frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntennaStateVector {
    pub antennas: [EnuPosition; 4],
}

impl AntennaStateVector {
    pub fn new(x1: EnuPosition, x2: EnuPosition, x3: EnuPosition, x4: EnuPosition) -> Self {
        Self { antennas: [x1, x2, x3, x4] }
    }

    pub fn antenna(&self, id: AntennaId) -> EnuPosition {
        self.antennas[id.index()]
    }

    pub fn as_svector(&self) -> SVector<f64, 12> {
        let mut v = SVector::<f64, 12>::zeros();
        for (i, a) in self.antennas.iter().enumerate() {
            v.fixed_rows_mut::<3>(3 * i).copy_from(&a.as_vector());
        }
        v
    }

    pub fn from_svector(v: &SVector<f64, 12>) -> Self {
        let mut antennas = [EnuPosition::default(); 4];
        for (i, a) in antennas.iter_mut().enumerate() {
            *a = EnuPosition::from_vector(v.fixed_rows::<3>(3 * i).into_owned());
        }
        Self { antennas }
    }

    pub fn is_finite(&self) -> bool {
        self.antennas.iter().all(EnuPosition::is_finite)
    }
}

/// 3x3 symmetric positive-definite covariance, stored as the six upper
/// triangular entries so symmetry is enforced at the representation level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Covariance3 {
    /// Order: c11, c12, c13, c22, c23, c33 (m^2).
    upper: [f64; 6],
}

impl Covariance3 {
    pub fn from_upper_triangular(upper: [f64; 6]) -> Self {
        Self { upper }
    }

    pub fn from_diagonal_sigmas(sigmas: [f64; 3]) -> Self {
        Self {
            upper: [
                sigmas[0] * sigmas[0],
                0.0,
                0.0,
                sigmas[1] * sigmas[1],
                0.0,
                sigmas[2] * sigmas[2],
            ],
        }
    }

    pub fn isotropic(variance: f64) -> Self {
        Self { upper: [variance, 0.0, 0.0, variance, 0.0, variance] }
    }

    pub fn upper_triangular(&self) -> [f64; 6] {
        self.upper
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        let [c11, c12, c13, c22, c23, c33] = self.upper;
        Matrix3::new(c11, c12, c13, c12, c22, c23, c13, c23, c33)
    }

    /// Information matrix (inverse covariance). Errors unless the covariance
    /// is SPD.
    pub fn information(&self, context: &str) -> Result<Matrix3<f64>, FactorError> {
        nalgebra::Cholesky::new(self.matrix())
            .map(|chol| chol.inverse())
            .ok_or_else(|| FactorError::InvalidCovariance { context: context.to_string() })
    }
}

/// Ambiguity resolution status of an absolute positioning solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClasStatus {
    Fix,
    Float,
    None,
}

/// One antenna's absolute position observation (PPP-RTK solution converted
/// to the local ENU frame). Enters the graph only with fix or float status.
#[derive(Debug, Clone, PartialEq)]
pub struct ClasFix {
    pub antenna: AntennaId,
    pub position: EnuPosition,
    pub status: ClasStatus,
    pub covariance: Covariance3,
}

/// One antenna pair's relative-position observation from moving-base RTK.
/// The baseline vector points from antenna `to` to antenna `from`, i.e. it
/// measures `x_from - x_to`. Enters the graph only when `fixed`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineObservation {
    pub from: AntennaId,
    pub to: AntennaId,
    pub baseline: Vector3<f64>,
    pub fixed: bool,
    pub covariance: Covariance3,
}

impl BaselineObservation {
    pub fn validate(&self) -> Result<(), FactorError> {
        if self.from == self.to {
            return Err(FactorError::SelfBaseline(self.from));
        }
        Ok(())
    }
}

/// Rigid-body prior on the intra-section antenna spacings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselinePrior {
    /// Front section antenna spacing, meters.
    pub l12: f64,
    /// Rear section antenna spacing, meters.
    pub l34: f64,
    /// Variance of the length constraint, m^2.
    #[serde(default = "default_length_variance")]
    pub variance: f64,
}

pub fn default_length_variance() -> f64 {
    1e-4 // (0.01 m)^2
}

impl BaselinePrior {
    pub fn new(l12: f64, l34: f64) -> Self {
        Self { l12, l34, variance: default_length_variance() }
    }
}

/// Gauss-Newton solver settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    pub max_iterations: usize,
    /// Convergence threshold on the step norm, meters.
    pub step_tolerance: f64,
    /// Huber threshold on the whitened residual norm (unitless).
    pub huber_delta: f64,
    /// Disabling the robust kernel reduces the CLAS factors to plain
    /// quadratic terms.
    pub huber_enabled: bool,
    pub min_factor_count_per_antenna: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iterations: 20,
            step_tolerance: 1e-8,
            huber_delta: 1.345,
            huber_enabled: true,
            min_factor_count_per_antenna: 1,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_iterations < 1 {
            return Err("max_iterations: must be >= 1".into());
        }
        if !(self.step_tolerance > 0.0) {
            return Err("step_tolerance: must be > 0".into());
        }
        if !(self.huber_delta > 0.0) {
            return Err("huber_delta: must be > 0".into());
        }
        Ok(())
    }
}

/// A single epoch's measurement set, ready to solve.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochProblem {
    pub timestamp: f64,
    pub clas: Vec<ClasFix>,
    pub baselines: Vec<BaselineObservation>,
    pub prior: BaselinePrior,
    pub initial_guess: Option<AntennaStateVector>,
}

impl EpochProblem {
    /// Section length prior for the pair containing the antennas with the
    /// given zero-based indices, if it is one of the two constrained pairs.
    pub(crate) fn length_pairs(&self) -> [(usize, usize, f64); 2] {
        [(0, 1, self.l12()), (2, 3, self.l34())]
    }

    fn l12(&self) -> f64 {
        self.prior.l12
    }

    fn l34(&self) -> f64 {
        self.prior.l34
    }
}
