use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate line: (c1, c2) must not both vanish")]
    DegenerateLine,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("non-finite state at t = {t}: {what}")]
    NonFinite { t: f64, what: String },
    #[error("phi_v must be nonzero on a phi_omega-singular arc")]
    ZeroPhiV,
    #[error("singular control saturated at the start of the arc (|omega| = {0})")]
    InitialSaturation(f64),
    #[error("inconsistent singular arc: radicand {0} is negative")]
    InconsistentArc(f64),
    #[error("sin(beta0) vanishes while lambda_theta0 = {0}: no finite phi_v")]
    NoFinitePhiV(f64),
    #[error("beta = {0} lies outside the merging band |sin beta| <= 1/2")]
    InfeasibleMerge(f64),
    #[error("merging manifold drift {drift:e} exceeds 1e-4 for sigma = {sigma}, v = {v}")]
    BranchInconsistent { drift: f64, sigma: f64, v: f64 },
    #[error("script directive {index} failed: {reason}")]
    Directive { index: usize, reason: String },
    #[error("unknown check name `{0}`")]
    UnknownCheck(String),
    #[error("malformed trajectory file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
