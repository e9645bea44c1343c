//! Hierarchical comment cascades as a multi-dimensional Hawkes process over
//! (hierarchy level × sentiment class) cells, with maximum-likelihood fitting,
//! thinning simulation, count forecasting and a small message-passing network
//! that predicts per-comment sentiment and reply structure.

// `!(x > 0.0)` style checks are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod error;
pub mod estimation;
pub mod eval;
pub mod gnn;
pub mod graph;
pub mod hawkes;
pub mod io;
pub mod prediction;
pub mod simulation;

pub use error::{Error, ErrorFamily, Result};
