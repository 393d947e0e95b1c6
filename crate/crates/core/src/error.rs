use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("anisotropy beta = {0} outside the supported range [0.5, 1.7321]")]
    BetaOutOfRange(f64),

    #[error("nearest-neighbour distance d0 = {0} must be positive and finite")]
    InvalidSpacing(f64),

    #[error("unknown k-point label `{0}`")]
    UnknownLabel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("Green dyadic evaluated at zero displacement")]
    ZeroDisplacement,

    #[error("k = ({kx}, {ky}) lies on a Rayleigh anomaly (||k+g| - k0| = {distance:e})")]
    RayleighAnomaly { kx: f64, ky: f64, distance: f64 },

    #[error("lattice sum did not converge after {shells} shells (estimated error {est_error:e})")]
    NonConvergent { shells: usize, est_error: f64 },

    #[error("eigensolver failed: residual {residual:e} exceeds bound {bound:e}")]
    EigenFailure { residual: f64, bound: f64 },

    #[error("least-squares fit is degenerate (condition number {0:e})")]
    FitDegenerate(f64),

    #[error("gap never drops below {eps:e} in beta bracket [{lo}, {hi}] (smallest gap {min_gap:e})")]
    NoClosure {
        lo: f64,
        hi: f64,
        eps: f64,
        min_gap: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
