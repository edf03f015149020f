//! Solvers for regularized box-simplex games and the problems built on them.
//!
//! * [`numkit`]: sparse kernels and entropic primitives.
//! * [`bsgame`]: the mirror-prox solver for entropy/quadratic regularized
//!   box-simplex games, with padding, cost truncation and certified gaps.
//! * [`ddbm`]: decremental bipartite matching on top of canonical regularized
//!   objectives.
//! * [`sinkhorn`]: entropic optimal transport, both by Sinkhorn iteration and by
//!   reduction to a box-simplex game.
//! * [`oracle`]: slow reference implementations used for auditing.
//! * [`cli`]: file formats and the command-line front end.

pub mod bsgame;
pub mod cli;
pub mod ddbm;
mod error;
pub mod numkit;
pub mod oracle;
pub mod sinkhorn;

pub use error::{Error, Result};
