use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("kernel singular: divisor polynomial vanishes at m={m}")]
    KernelSingular { m: f64 },

    #[error("outside strip H_beta: |Im z| = {imz} >= beta = {beta}")]
    OutsideStrip { imz: f64, beta: f64 },

    #[error("mismatched shapes: {0}")]
    ShapeMismatch(String),

    #[error("resonant index: divisor vanishes at (n1,n2)=({n1},{n2}), m={m}")]
    ResonantIndex { n1: usize, n2: usize, m: f64 },

    #[error("ill-founded recursion: source index ({s1},{s2}) exceeds target ({t1},{t2})")]
    IllFounded { s1: i64, s2: i64, t1: usize, t2: usize },

    #[error("invalid Laplace direction: cos(k(gamma - arg T)) = {cosv} < delta1 = {delta1}")]
    InvalidDirection { cosv: f64, delta1: f64 },

    #[error("outside certified domain: tail bound {tail} exceeds tolerance {tol}")]
    OutsideCertifiedDomain { tail: f64, tol: f64 },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no admissible covering: {0}")]
    NoAdmissibleCovering(String),

    #[error("non-stabilization: fixed point not reached after {0} sweeps")]
    NonStabilization(usize),

    #[error("empty sample set")]
    EmptySampleSet,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
