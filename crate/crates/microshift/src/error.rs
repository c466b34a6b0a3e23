//! Crate-wide error type and the CLI exit-code mapping.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("trap light is blue-detuned ({0:.3} nm is short of the D1 line); only red-detuned traps are modeled")]
    BlueDetuned(f64),
    #[error("trap wavelength coincides with an atomic line; detuning is singular")]
    ZeroDetuning,
    #[error("potential depth {0:.3e} J is not trapping (must be negative)")]
    NotTrapping(f64),
    #[error("invalid species data: {0}")]
    InvalidSpecies(String),
    #[error("species file line {line}: {message}")]
    SpeciesParse { line: usize, message: String },
    #[error("site ({row}, {col}) lies outside the {rows}x{cols} lens grid")]
    SiteOutOfGrid { row: usize, col: usize, rows: usize, cols: usize },
    #[error("tilt {tilt:.4} rad displaces the foci beyond one lens pitch (limit {limit:.4} rad); out of model range")]
    TiltOutOfModel { tilt: f64, limit: f64 },
    #[error("{cycles} cycles exceed the usable array extent of {capacity} rows")]
    Capacity { cycles: usize, capacity: usize },
    #[error("time step unstable: dt * radial frequency = {0:.3} rad (must stay below 0.15)")]
    UnstableTimeStep(f64),
    #[error("ensemble at {temperature:.2e} K cannot be bound-sampled in a {depth:.2e} K deep well")]
    UnboundSampling { temperature: f64, depth: f64 },
    #[error("too few surviving atoms ({0}) for a statistical estimate")]
    InsufficientAtoms(usize),
    #[error("non-finite force on atom {atom} at t = {time:.6e} s")]
    NonFiniteForce { atom: usize, time: f64 },
    #[error("pulse sequence needs {needed:.3e} s of free evolution but the protocol occupies {available:.3e} s")]
    SequenceTooShort { needed: f64, available: f64 },
    #[error("fit is degenerate: {0}")]
    FitDegenerate(String),
    #[error("fit failed to converge after {iterations} iterations (residual {residual:.3e})")]
    FitDiverged { iterations: usize, residual: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("config parse: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("missing artifact: {0}")]
    MissingArtifact(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 1 for physics/validation failures, 2 for I/O and config failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Toml(_) | Error::Io(_) | Error::MissingArtifact(_) => 2,
            Error::SpeciesParse { .. } => 2,
            _ => 1,
        }
    }
}
