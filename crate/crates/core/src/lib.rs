//! Random-turn tug-of-war games on graphs and sampled length spaces.
//!
//! The crate is organised bottom-up: [`game`] holds boards and the dynamic
//! programming operator, [`solvers`] computes values, [`simulator`] plays the
//! game under explicit strategies, [`space`] builds ε-step games on point
//! clouds, and [`continuum`] carries closed-form references.

pub mod boards;
pub mod continuum;
pub mod error;
pub mod fit;
pub mod game;
pub mod scenario;
pub mod simulator;
pub mod solvers;
pub mod space;

pub use error::{Error, Result};
pub use game::{build_game, discrete_inf_laplacian, dp_operator, GameGraph, GameSpec, ValueField};
pub use solvers::{
    residual, solve_f0_exact, value_iteration, Direction, IterOptions, Method, SolveReport, Sweep,
};
