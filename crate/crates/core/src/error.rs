use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("signal has zero norm ({modality})")]
    ZeroSignal { modality: &'static str },
    #[error("sparsity {sparsity} is outside 1..={atoms}")]
    BadSparsity { sparsity: usize, atoms: usize },
    #[error("coherence needs at least two columns, got {cols}")]
    SingleColumn { cols: usize },
    #[error("support index {index} has zero coefficient in both modalities")]
    ZeroOnSupport { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("problem is infeasible (minimal slack {slack:.3e})")]
    Infeasible { slack: f64 },
    #[error("bound is vacuous: denominator {denominator:.6e} is not positive")]
    DegenerateDenominator { denominator: f64 },
    #[error("mask has no observed pixel")]
    EmptyMask,
    #[error("image is {rows}x{cols}, need at least {min}x{min}")]
    TooSmall { rows: usize, cols: usize, min: usize },
    #[error("only {found} valid patches after {attempts} draws, needed {wanted}")]
    Exhausted {
        found: usize,
        wanted: usize,
        attempts: usize,
    },
    #[error("atom count mismatch: {left} vs {right}")]
    SizeMismatch { left: usize, right: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
