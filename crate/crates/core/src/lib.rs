//! Exact modelling, reformulation, solving and certificate verification for
//! near-optimal robust bilevel and multilevel optimization problems.

pub mod cli;
pub mod model;
pub mod rational;
pub mod reformulate;
pub mod solve;
pub mod subsolver;
pub mod verify;

pub use model::{Assignment, LinearExpr, MultilevelInstance, Variable};
pub use rational::Rational;
