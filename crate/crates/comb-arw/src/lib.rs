//! Simulation laboratory for activated random walk (ARW) driven by per-site
//! instruction stacks, on interval and comb graphs, together with the layer
//! percolation processes whose infection paths encode stable ARW odometers.
//!
//! The crate is organised by role:
//!
//! - [`graph`] — site addressing for combs `C_n` (spine `[1, n]` with sinks at
//!   `0` and `n + 1`, one tooth per spine site) and intervals (the tooth-free
//!   degenerate case);
//! - [`instr`] — lazily evaluated two-sided instruction stacks with signed
//!   prefix counts;
//! - [`arw`] — the toppling engine: stabilization under pluggable scheduling
//!   policies, exact stationary sampling, driven-dissipative chains, and the
//!   two-phase spine-first stabilization used by the upper density bound;
//! - [`laws`] — shape laws for layer percolation (a fixed six-cell glyph, the
//!   two-cell domino law, the interval law, the comb law, and its
//!   three-dimensional refinement) plus the coupled comb/interval sampler;
//! - [`perc`] — the layer percolation engine: infection sets over
//!   `ℕ^d × ℕ`, per-step diagonal bookkeeping, exact uniform greedy paths via
//!   big-integer path counts, and growth-rate estimation;
//! - [`bridge`] — the correspondence between stable odometers and infection
//!   paths: minimal odometers, stability verification, slot/chunk parsing of
//!   stacks into shapes, and the path ↔ odometer maps;
//! - [`bounds`] — Monte Carlo experiments sandwiching the comb's stationary
//!   density between a renewal-based lower series and a spine-coupling upper
//!   estimate, plus the figure-style density experiments;
//! - [`stats`] — small statistics toolbox (chi-square tests, two-phase fits);
//! - [`report`] — deterministic CSV/JSON emission with provenance.

pub mod arw;
pub mod bounds;
pub mod bridge;
pub mod cli;
pub mod graph;
pub mod instr;
pub mod laws;
pub mod perc;
pub mod report;
pub mod stats;

pub use graph::{Graph, SiteId, SiteKind};
pub use instr::{count_kind, Instruction, InstructionSource, ScriptedStacks, SeededStacks};

/// Default master seed used by the CLI when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 271_828;

/// Default instruction budget for a single stabilization (guards divergence).
pub const DEFAULT_BUDGET: u64 = 1_000_000_000;

/// Default cap on stored percolation cells (guards memory).
pub const DEFAULT_CELL_CAP: usize = 50_000_000;

/// Default guard on stack scan depth for odometer searches and parsing.
pub const DEFAULT_SCAN_GUARD: i64 = 10_000_000;

/// Crate-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("site {0} is a sink and has no instruction stack")]
    SinkSite(SiteId),
    #[error("site {0} does not exist on this graph")]
    InvalidSite(SiteId),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("instruction budget exhausted after {executed} executions")]
    BudgetExhausted { executed: u64 },
    #[error("cell cap exceeded at step {step}: {stored} cells stored (cap {cap})")]
    CellCapExceeded { step: usize, stored: usize, cap: usize },
    #[error("stack scan guard exceeded at {site} (|index| > {guard})")]
    ScanGuardExceeded { site: SiteId, guard: i64 },
    #[error("replayed shape sequence exhausted at step {step}, diagonal {diagonal}")]
    ReplayExhausted { step: usize, diagonal: u64 },
    #[error("odometer is not stable: {0}")]
    NotStable(String),
    #[error("invalid infection path at step {step}: {reason}")]
    InvalidPath { step: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI maps this error to: `2` for resource guards,
    /// `1` for validation failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExhausted { .. }
            | Error::CellCapExceeded { .. }
            | Error::ScanGuardExceeded { .. } => 2,
            _ => 1,
        }
    }
}
