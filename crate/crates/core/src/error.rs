use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised by the spectral engines, the skin-mode builder and the
/// integrator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid symbol: {0}")]
    InvalidSymbol(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("beta = 0 is a pole of the Laurent symbol")]
    ZeroBeta,

    #[error("eigensolver did not converge at E = {energy}")]
    EigenSolver { energy: Complex64 },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("lattice size N = {n} too small, need N > {min}")]
    LatticeTooSmall { n: usize, min: usize },

    #[error("E = {energy} lies on the PBC loop (root modulus {modulus} within {tol} of 1)")]
    OnPbcLoop {
        energy: Complex64,
        modulus: f64,
        tol: f64,
    },

    #[error("phase unwrap ambiguous at E = {energy}: refine K beyond {k}")]
    RefineK { energy: Complex64, k: usize },

    #[error("winding integral residual {residual} from nearest integer exceeds 0.05 at E = {energy}")]
    NonIntegerWinding { energy: Complex64, residual: f64 },

    #[error("GBZ scan found no level-set crossings (gap field range [{f_min}, {f_max}])")]
    EmptyGbz { f_min: f64, f_max: f64 },

    #[error("E = {energy} is not a left-edge skin energy (W = {winding})")]
    NotSkinEnergy { energy: Complex64, winding: i32 },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("amplitudes blew up at step {step} (t = {time})")]
    BlowUp { step: usize, time: f64 },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl Error {
    /// Short stable identifier used in machine-readable error output.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidSymbol(_) => "invalid_symbol",
            Error::InvalidModel(_) => "invalid_model",
            Error::ZeroBeta => "zero_beta",
            Error::EigenSolver { .. } => "eigensolver",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::LatticeTooSmall { .. } => "lattice_too_small",
            Error::OnPbcLoop { .. } => "on_pbc_loop",
            Error::RefineK { .. } => "refine_k",
            Error::NonIntegerWinding { .. } => "non_integer_winding",
            Error::EmptyGbz { .. } => "empty_gbz",
            Error::NotSkinEnergy { .. } => "not_skin_energy",
            Error::Degenerate(_) => "degenerate",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::BlowUp { .. } => "blow_up",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
        }
    }
}
