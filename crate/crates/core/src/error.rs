use thiserror::Error;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("angle is not finite: {0}")]
    NonFiniteAngle(f64),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter {
        name: &'static str,
        reason: &'static str,
    },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("undefined mean: resultant length {resultant:e} is degenerate")]
    UndefinedMean { resultant: f64 },

    #[error("empty trajectory")]
    EmptyTrajectory,

    #[error("empty grid")]
    EmptyGrid,

    #[error("harmonic index must be nonzero")]
    ZeroHarmonic,

    #[error("empty discrete spectrum: cost coefficient C_{0} vanishes")]
    EmptyDiscreteSpectrum(u32),

    #[error("lambda lies on the continuous spectrum (distance {distance:e})")]
    OnContinuousSpectrum { distance: f64 },

    #[error("eigenvalue path lost at R = {r}; last good sample at R = {last_r:?}")]
    PathLost { r: f64, last_r: Option<f64> },

    #[error("no eigenvalue collision found for R in [{r_min}, {r_max}]")]
    NoCollision { r_min: f64, r_max: f64 },

    #[error("unsupported cost: only the first Fourier harmonic may be nonzero")]
    UnsupportedCost,

    #[error("initial perturbation has nonzero θ-mean ({mean:e}) at ω-node {node}")]
    NonZeroMean { node: usize, mean: f64 },

    #[error("unsupported density: value {value:e} at grid point {index} is below the floor")]
    UnsupportedDensity { index: usize, value: f64 },

    #[error("CFL violation: σ²Δt/Δθ² = {ratio:.4} exceeds 0.5; use at most M = {max_grid} grid points")]
    CflViolation { ratio: f64, max_grid: usize },

    #[error("lambda is within {distance:e} of an integrand pole")]
    PoleProximity { distance: f64 },

    #[error("adaptive quadrature did not reach tolerance (error estimate {estimate:e})")]
    QuadratureFailed { estimate: f64 },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(&'static str),
}
