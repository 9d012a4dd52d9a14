//! Error type shared by every module of the core crate.

use alloc::string::String;

/// Errors raised by trace construction, metric evaluation, compression and
/// the toy model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A value violated a structural invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// An index or parameter was outside its admissible range.
    #[error("range error: {0}")]
    Range(String),

    /// A modality received zero attention mass (or has zero tokens), so a
    /// ratio metric would be infinite or undefined.
    #[error("degenerate mass: {0}")]
    DegenerateMass(String),

    /// The retention budget rounds down to zero tokens.
    #[error("budget exhausted: {0}")]
    BudgetExhausted(String),

    /// Tied scores make every observed threshold exceed the budget.
    #[error("infeasible ties: {0}")]
    InfeasibleTies(String),

    /// A forward pass produced a non-finite value.
    #[error("numeric error at layer {layer}, step {step}: {detail}")]
    Numeric {
        /// Decoder layer where the value appeared.
        layer: usize,
        /// Generation step where the value appeared.
        step: usize,
        /// What went wrong.
        detail: String,
    },
}

/// Convenience alias.
pub type Result<T, E = Error> = core::result::Result<T, E>;
