//! Set-oriented computation of attractors, attractor blocks, basins, dual
//! repellers and chain-recurrent sets for iterated function systems on
//! compact metric spaces, plus code-space diagnostics and a scenario runner.
//!
//! Everything is computed on a finite cell grid: a [`geometry::Grid`] covers
//! the space, a [`relation::TransitionRelation`] over-approximates the maps at
//! cell resolution, and the [`conley`] and [`chain`] modules operate on the
//! resulting directed graph.

// NaN must fail range checks, so negated comparisons are deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chain;
pub mod coding;
pub mod conley;
pub mod dynamics;
pub mod error;
#[cfg(test)]
mod fixtures;
pub mod geometry;
mod graph;
pub mod relation;
pub mod toolkit;

pub use error::{Error, Result};
