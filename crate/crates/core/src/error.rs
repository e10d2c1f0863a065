use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure mode of the library.
///
/// Variants group into three families that front ends map to distinct exit
/// codes: configuration problems, numerical degeneracies of a trajectory, and
/// internal-consistency failures that indicate a bug.
#[derive(Debug, Error)]
pub enum Error {
    #[error("4r = {four_r} must be smaller than the torus side L = {side}")]
    OverlapGeometry { four_r: f64, side: f64 },
    #[error("at least {required} strictly positive masses are required, found {found}")]
    DegenerateMasses { required: usize, found: usize },
    #[error("need N >= 2 balls and dimension >= 2 (got N = {n_balls}, dim = {dim})")]
    BadDimension { n_balls: usize, dim: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("could not place {n_balls} balls without overlap after {attempts} attempts")]
    PackingTimeout { n_balls: usize, attempts: usize },
    #[error("ball {ball} has zero mass; this operation needs strictly positive masses")]
    ZeroMass { ball: usize },
    #[error("balls {i} and {j} both have zero mass and cannot collide")]
    ZeroMassPair { i: usize, j: usize },

    #[error("tangential approach of balls {i} and {j} (discriminant {discriminant:e})")]
    TangentialApproach { i: usize, j: usize, discriminant: f64 },
    #[error("balls {i} and {j} are not in contact (residue {residue:e})")]
    NotInContact { i: usize, j: usize, residue: f64 },
    #[error("balls {i} and {j} are receding and cannot collide")]
    RecedingPair { i: usize, j: usize },
    #[error("simultaneous collisions of {first:?} and {second:?} at t = {time}")]
    SimultaneousCollision {
        first: (usize, usize),
        second: (usize, usize),
        time: f64,
    },
    #[error("more than {limit} collisions within one time unit ending at t = {time}")]
    AccumulationGuard { limit: u64, time: f64 },

    #[error("numerical breakdown at t = {time}: {reason}")]
    NumericalBreakdown { time: f64, reason: String },

    #[error("segment is singular at collision {index}: {reason}")]
    SingularSegment { index: usize, reason: String },
    #[error("finite-difference probe changed the collision scheme at event {index}")]
    SchemeChanged { index: usize },
    #[error("balls {a} and {b} are not connected by the collision graph")]
    NotConnectedPair { a: usize, b: usize },
    #[error("neutral-space methods disagree: {0}")]
    MethodDisagreement(String),

    #[error("configuration error: {0}")]
    Config(String),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Consistency,
    Degeneracy,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            OverlapGeometry { .. }
            | DegenerateMasses { .. }
            | BadDimension { .. }
            | InvalidParameter(_)
            | PackingTimeout { .. }
            | ZeroMass { .. }
            | Config(_)
            | Parse { .. }
            | Io(_) => ErrorClass::Config,
            MethodDisagreement(_) | NotInContact { .. } | RecedingPair { .. } => {
                ErrorClass::Consistency
            }
            ZeroMassPair { .. }
            | TangentialApproach { .. }
            | SimultaneousCollision { .. }
            | AccumulationGuard { .. }
            | NumericalBreakdown { .. }
            | SingularSegment { .. }
            | SchemeChanged { .. }
            | NotConnectedPair { .. } => ErrorClass::Degeneracy,
        }
    }
}
