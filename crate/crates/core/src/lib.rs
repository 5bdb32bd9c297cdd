#![allow(clippy::needless_range_loop)]

pub mod cli;
pub mod control;
pub mod dynamics;
pub mod environment;
pub mod geo_planner;
pub mod metaplanner;
pub mod reachability;
pub mod simulator;
pub mod suite;
