//! Library-wide error type.

/// Errors produced anywhere in the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("syntax error at byte {offset}: {msg}")]
    Syntax { offset: usize, msg: String },

    #[error("unknown function `{name}` at byte {offset}")]
    UnknownFunction { name: String, offset: usize },

    #[error("empty expression")]
    EmptyExpression,

    #[error("unbound variable `{name}`")]
    UnboundVariable { name: String },

    #[error("domain error: {msg} in `{subexpr}`")]
    Domain { msg: String, subexpr: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("name collision: {0}")]
    NameCollision(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("{what} did not converge after {iters} iterations (residual {residual:.3e})")]
    NoConvergence {
        what: String,
        iters: usize,
        residual: f64,
    },

    #[error("integration failure at t = {t}: {msg}")]
    Integration { t: f64, msg: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
