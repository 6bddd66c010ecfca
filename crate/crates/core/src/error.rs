//! Error type shared by every stage of the toolkit.

use thiserror::Error;

/// Errors raised by signal generation, simulation, estimation, fitting,
/// structure detection and experiment design.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("pole on excitation grid (bin {bin})")]
    PoleOnGrid { bin: usize },

    #[error("loop diverged: {0}")]
    LoopDiverged(String),

    #[error("integration blew up at sample {sample}")]
    IntegrationBlewUp { sample: usize },

    #[error("unexcited bin in record (realization {realization}, bin index {bin})")]
    UnexcitedBin { realization: usize, bin: usize },

    #[error("unidentifiable orders: {0}")]
    UnidentifiableOrders(String),

    #[error("inconsistent fit orders across sweep")]
    InconsistentFitOrders,

    #[error("design degenerate")]
    DesignDegenerate,

    #[error("degenerate surface: no isolated extremum")]
    DegenerateSurface,

    #[error("no preferred direction (eigenvalues {eigenvalues:?})")]
    NoPreferredDirection {
        eigenvalues: [f64; 2],
        eigenvectors: [[f64; 2]; 2],
    },

    #[error("region too wide for axial points")]
    RegionTooWide,

    #[error("eigen-path does not cross the experiment region")]
    PathOutsideRegion,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error in {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    /// A pipeline stage failed for one sweep level or plan row.
    #[error("{stage} failed for {unit} {index}: {source}")]
    Stage {
        stage: &'static str,
        unit: &'static str,
        index: usize,
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by bad configuration or arguments rather than
    /// by the numerics.
    pub fn is_config(&self) -> bool {
        if let Error::Stage { source, .. } = self {
            return source.is_config();
        }
        matches!(
            self,
            Error::InvalidInput(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Dimension(_)
                | Error::Io(_)
        )
    }
}
