//! Repository access, tools, model backends, batch runs and evaluation.

pub mod backend;
pub mod baselines;
pub mod case_prep;
pub mod config;
pub mod evaluation;
pub mod fixture;
pub mod gateway;
pub mod pipeline;
pub mod runner;
pub mod toolkit;
