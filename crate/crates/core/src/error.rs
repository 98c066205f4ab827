use thiserror::Error;

/// Errors raised by the stress pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate cell: cell vectors are linearly dependent (det = {det:e})")]
    DegenerateCell { det: f64 },

    #[error("cell too small: perpendicular width {width:.6} A is below the required {required:.6} A")]
    CellTooSmall { width: f64, required: f64 },

    #[error("force-constant aliasing: supercell width {width:.6} A is below {required:.6} A needed for shell radius {shell_radius:.6} A")]
    Aliasing {
        width: f64,
        required: f64,
        shell_radius: f64,
    },

    #[error("soft mode at xi = [{:.6}, {:.6}, {:.6}]: min eigenvalue {eigenvalue:e} eV/A^2", xi[0], xi[1], xi[2])]
    SoftMode { xi: [f64; 3], eigenvalue: f64 },

    #[error("mechanical instability: {0}")]
    Instability(String),

    #[error("invalid scalar field: {0}")]
    InvalidField(String),

    #[error("integration domain too small: boundary weight {weight:e} exceeds 1e-16")]
    DomainTooSmall { weight: f64 },

    #[error("degenerate fit: estimate is exact at lambda = {lambda}")]
    DegenerateFit { lambda: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
