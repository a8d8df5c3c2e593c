//! Discrete Carleson-measure laboratory.
//!
//! Trees and their summation operators, Bergman trees on the unit ball, the
//! testing conditions for Carleson measures, the tree operators they control,
//! and exact small-scale kernel oracles.

pub mod ball;
pub mod bergman;
pub mod conditions;
pub mod disk;
pub mod error;
pub mod kernels;
pub mod linalg;
pub mod measures;
pub mod operators;
pub mod qmc;
pub mod repro;
pub mod tree;
pub mod two_weight;

pub use error::{Error, Result};
pub use tree::{BoundaryMeasure, ConditionReport, NodeId, Tree, TreeMeasure};
