//! Deterministic 6-DoF underwater-vehicle attitude-control lab.

pub mod actuation;
pub mod cli;
pub mod config;
pub mod control;
pub mod env;
pub mod eval;
pub mod hydro;
pub mod mathcore;
pub mod plot;
pub mod ppo;
pub mod tuner;
