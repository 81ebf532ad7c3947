use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("expression error at offset {offset}: {message}")]
    Expression { offset: usize, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid system: {0}")]
    Validation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("trajectory diverged at t = {last_good_time}")]
    Diverged { last_good_time: f64 },

    #[error("zeno-suspect chattering: {switches} switches within {window} time units ending at t = {time}")]
    ZenoSuspect { switches: usize, window: f64, time: f64 },

    #[error("degenerate reward: reward term {term} did not change over [{t1}, {t2}]")]
    DegenerateReward { term: usize, t1: f64, t2: f64 },

    #[error("degenerate schedule: {0}")]
    DegenerateSchedule(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("sample is not linearly separable: {misclassified} points still misclassified after {updates} updates")]
    NonSeparable { misclassified: usize, updates: usize },

    #[error("learning sample needs both labels: {0}")]
    OneSidedSample(String),

    #[error("unknown named system `{0}`")]
    UnknownSystem(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
