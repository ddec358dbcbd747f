use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("metric is degenerate at ({t}, {x}): determinant {det:e} is not negative")]
    Degenerate { t: f64, x: f64, det: f64 },

    #[error("not class A: {0}")]
    NotClassA(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("curve is not causal: chord {index} is spacelike")]
    SpacelikeChord { index: usize },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("no maximizer found: {0}")]
    NoMaximizer(String),

    #[error("homology class ({0}, {1}) has no causal representative")]
    NotInCone(i64, i64),

    #[error("point lies outside the grid window")]
    OutsideWindow,

    #[error("not implemented: {0}")]
    NotImplemented(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
