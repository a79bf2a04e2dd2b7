//! Stable arcs between polar gradient-like diffeomorphisms of the 2-torus.
//!
//! The crate builds the 1-D model lifts, the torus maps assembled from them,
//! saddle-node arcs joining `f0` to its conjugates `f_J`, the invariant
//! matrix of a gradient-like map, and a planner that splits an arbitrary
//! unimodular target into elementary arc segments.

pub mod arc_engine;
pub mod arc_planner;
pub mod bifurcation_lab;
pub mod cli;
pub mod config;
pub mod error;
pub mod linalg;
pub mod model_maps_1d;
pub mod torus_dynamics;

pub use error::{Error, Result};
