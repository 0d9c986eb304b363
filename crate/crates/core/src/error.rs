use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("max_threads must be at least 1")]
    InvalidMaxThreads,

    #[error("expected_elements must be at least 1")]
    InvalidCapacity,

    #[error("all {max} thread slots are registered")]
    ThreadPoolExhausted { max: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown yield point `{0}`")]
    UnknownYieldPoint(String),

    #[error("schedule step {step} names thread {thread}, but only {threads} threads exist")]
    UnknownThread { step: usize, thread: usize, threads: usize },

    #[error("history line {line}: {msg}")]
    HistoryParse { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
