//! Online algorithm selection for process optimization: a knowledge base of
//! optimizers, GP-simulated test functions, tune-then-benchmark campaigns,
//! resource-aware rating and the closed cognition loop around a plant.

pub mod benchmark;
pub mod bounds;
pub mod cognition;
pub mod gp;
pub mod knowledge;
pub mod optimizers;
pub mod plant;
pub mod rating;
pub mod rng;
