//! Exact evaluation and numeric certification for the augmented tripartite
//! GHZ game.
//!
//! The crate is organised around five layers:
//!
//! - [`tensor`]: dense complex matrices and state vectors, tensor products,
//!   subsystem embedding, standard gates, Bell states, controlled unitaries.
//! - [`diagram`]: a minimal string-diagram engine over finite-dimensional
//!   Hilbert spaces: typed boxes wired into a DAG, evaluated to a matrix.
//! - [`game`]: the augmented GHZ game: input distribution, win predicate,
//!   classical brute force, and the ideal quantum strategy.
//! - [`strategy`]: the quantum strategy model: validation, exact per-input
//!   losing probabilities, noise models, and Monte Carlo simulation.
//! - [`rigidity`]: swap isometries, the GHZ eigenbasis, state extraction,
//!   and numeric checkers for the approximate operator relations that drive
//!   the rigidity argument.
//!
//! All values are immutable after construction and all operations are pure,
//! so everything here can be shared freely across threads.

pub mod diagram;
pub mod error;
pub mod game;
pub mod rigidity;
pub mod strategy;
pub mod tensor;

pub use error::{Error, Result};
