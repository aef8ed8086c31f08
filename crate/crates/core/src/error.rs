use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain of the model or formula.
    #[error("domain error: {0}")]
    Domain(String),

    /// A quadrature or root-finding stage failed to reach its tolerance.
    #[error("numerical failure in {stage}: {detail} (error estimate {estimate:e})")]
    Numerical {
        stage: String,
        detail: String,
        estimate: f64,
    },

    /// A time requested outside the range covered by a rate table.
    #[error("time {t} is outside the tabulated range [0, {t_max}]")]
    Range { t: f64, t_max: f64 },

    /// Adaptive stepping collapsed below the minimum step.
    #[error("step size underflow at t = {t} (h = {h:e})")]
    Stiffness { t: f64, h: f64 },

    /// A structural invariant was violated during a computation.
    #[error("invariant violated: {0}")]
    Invariant(String),

    /// A sample grid that does not satisfy the required layout.
    #[error("grid error: {0}")]
    Grid(String),

    /// The failure happened while tabulating at a particular time.
    #[error("at t = {t}: {source}")]
    AtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub fn at_time(self, t: f64) -> Self {
        Error::AtTime {
            t,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
