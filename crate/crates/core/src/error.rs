use thiserror::Error;

pub type Result<T> = std::result::Result<T, MitError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MitError {
    #[error("grid dimensions {nx}x{ny} too small: need at least 2x2 cells")]
    DimensionTooSmall { nx: usize, ny: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("resistivity must be strictly positive and finite, got {value} ({context})")]
    NonPositiveResistivity { value: f64, context: String },

    #[error("cell index {index} out of range for a grid with {count} cells")]
    CellOutOfRange { index: usize, count: usize },

    #[error("duplicate cell index {0}")]
    DuplicateCell(usize),

    #[error("resistivity map has {got} entries, grid has {expected} cells")]
    MapLengthMismatch { expected: usize, got: usize },

    #[error("wire radius {radius} must lie in (0, {limit})")]
    InvalidRadius { radius: f64, limit: f64 },

    #[error("invalid coil {index}: {reason}")]
    InvalidCoil { index: usize, reason: String },

    #[error("coil {index} intersects the conductor plate")]
    CoilIntersectsConductor { index: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    #[error("lambda = {lambda} is outside the validity domain (pole at {pole})")]
    OutOfDomain { lambda: f64, pole: f64 },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix asymmetry {asymmetry:e} exceeds the relative limit {limit:e}")]
    Asymmetric { asymmetry: f64, limit: f64 },

    #[error("resistivities are not ordered entrywise: {0}")]
    NotOrdered(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

impl MitError {
    /// True for errors that describe a point outside the validity domain
    /// or a violated ordering precondition, as opposed to numeric failure.
    pub fn is_domain(&self) -> bool {
        matches!(
            self,
            MitError::OutOfDomain { .. } | MitError::NotOrdered(_)
        )
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            MitError::NotSpd(_) | MitError::Singular(_) | MitError::Asymmetric { .. }
        )
    }
}
