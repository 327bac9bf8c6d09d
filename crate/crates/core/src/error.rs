use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Residual achieved by the best candidate path length for one arm of an
/// infeasible N-path design.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArmResidual {
    pub path: usize,
    /// max over species of the distance (in cycles) to the target phase lattice.
    pub min_residual_cycles: f64,
    /// Path length (m) that achieved `min_residual_cycles`.
    pub best_delta_l: f64,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("state is not normalised (norm = {0})")]
    NotNormalized(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("mass ratio {ratio} of species {index} has no rational approximation with denominator <= {denom_bound}")]
    NonCommensurableMasses {
        index: usize,
        ratio: f64,
        denom_bound: u64,
    },

    #[error("no two-species solution with k <= {max_k}; best approximation 2*{best_k1}/(2*{best_k2}+1) has relative error {relative_error:e}")]
    TwoSpeciesInfeasible {
        max_k: u64,
        best_k1: u64,
        best_k2: u64,
        relative_error: f64,
    },

    #[error("no sorter design within bounds")]
    Infeasible { residuals: Vec<ArmResidual> },

    #[error("leakage matrix is not invertible (condition number {condition:e})")]
    Unidentifiable { condition: f64 },

    #[error("species is neutral; the Lorentz force cannot separate it")]
    NeutralSpecies,
}
