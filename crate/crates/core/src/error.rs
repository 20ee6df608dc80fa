use thiserror::Error;

pub type Result<T> = std::result::Result<T, IcpcError>;

#[derive(Debug, Error)]
pub enum IcpcError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("stability condition violated: {0}")]
    Stability(String),

    #[error("insufficient sample: {0}")]
    InsufficientSample(String),

    #[error("rank deficient design: {0}")]
    RankDeficient(String),

    #[error("misaligned data: {0}")]
    Misaligned(String),

    #[error("{path}: missing column `{column}`")]
    MissingColumn { path: String, column: String },

    #[error("{path}: row {row}, column `{column}`: cannot parse `{value}` as a number")]
    NonNumeric {
        path: String,
        row: usize,
        column: String,
        value: String,
    },

    #[error("{path}: row {row}: duplicate period `{period}`")]
    DuplicatePeriod {
        path: String,
        row: usize,
        period: String,
    },

    #[error("panel gap: country `{country}` is missing period `{period}`")]
    PanelGap { country: String, period: String },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl IcpcError {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        IcpcError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// True for errors caused by bad user input (as opposed to numerical or
    /// runtime failures during a run).
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            IcpcError::InvalidParameter { .. }
                | IcpcError::Misaligned(_)
                | IcpcError::MissingColumn { .. }
                | IcpcError::NonNumeric { .. }
                | IcpcError::DuplicatePeriod { .. }
                | IcpcError::PanelGap { .. }
                | IcpcError::Config(_)
        )
    }
}
