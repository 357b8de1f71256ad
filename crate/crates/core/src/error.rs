use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("projection dimension {d} exceeds ambient dimension {dim}")]
    ProjectionDim { d: usize, dim: usize },
    #[error("grid mismatch: {0}")]
    Grid(String),
    #[error("{what} = {value} exceeds declared bound {bound} at t = {t}")]
    BoundViolation {
        what: &'static str,
        value: f64,
        bound: f64,
        t: f64,
    },
    #[error("picard iteration is not contracting (ratios {ratios:?})")]
    NonContraction { ratios: Vec<f64> },
    #[error("picard iteration did not reach tolerance {tol} in {iters} iterations")]
    PicardStalled { tol: f64, iters: usize },
    #[error("budget exceeded: {needed} > {budget} ({what})")]
    Budget {
        what: &'static str,
        needed: u128,
        budget: u128,
    },
    #[error("time {0} is not on the tree grid")]
    OffGrid(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
