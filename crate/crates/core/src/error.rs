use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("series order mismatch: {left} vs {right}")]
    OrderMismatch { left: usize, right: usize },

    #[error("product chain needs 2 to 4 factors, got {0}")]
    Arity(usize),

    #[error("index ({m},{n}) exceeds series order {order}")]
    Range { m: usize, n: usize, order: usize },

    #[error("degenerate scale factors ({s1}, {s2})")]
    DegenerateScale { s1: f64, s2: f64 },

    #[error("step size underflow at t = {t} (state {state:?})")]
    StepUnderflow { t: f64, state: Vec<f64> },

    #[error("invalid integrator tolerance {0}; expected a value in [1e-14, 1e-3]")]
    Tolerance(f64),

    #[error("no section crossing within {budget} time units")]
    NoCrossing { budget: f64 },

    #[error("grazing section crossing (|x'| = {0:e})")]
    Grazing(f64),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("homological equation ill-conditioned at order ({m},{n})")]
    IllConditioned { m: usize, n: usize },

    #[error("resonance m*l1 + n*l2 = l3 at order ({m},{n})")]
    Resonance { m: usize, n: usize },

    #[error("no complex eigenvalue pair of the requested stability at this equilibrium")]
    NoComplexPair,

    #[error("decay fit underflow: all high-order coefficients below 1e-15")]
    UnderflowFit,

    #[error("chart order {0} too low for a decay fit (need at least 8)")]
    FitOrder(usize),

    #[error("chart symmetry violated: imaginary residue {0:e}")]
    SymmetryViolation(f64),

    #[error("multipliers at the solution are real (trace {trace}); not a Neimark-Sacker point")]
    NotNeimarkSacker { trace: f64 },

    #[error("resolution exhausted: more than {0} points/vertices required")]
    ResolutionExhausted(usize),

    #[error("stable-chart parameter left the unit disk (|sigma| = {0})")]
    ChartExit(f64),

    #[error("integration failed for seed ({}, {}) at generation {generation}: {message}", seed[0], seed[1])]
    SeedFailure {
        seed: [f64; 2],
        generation: usize,
        message: String,
    },

    #[error("cycle is not a saddle")]
    NotSaddle,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
