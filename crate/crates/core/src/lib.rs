//! Dual-lane meeting agent with a learned routing head, offline
//! conservative policy refinement, sentinel-gated orchestration and a
//! calibrated evaluation toolkit.

pub mod cli;
pub mod corpus;
pub mod evalkit;
pub mod nn;
pub mod orchestrator;
pub mod policy;
pub mod router;
pub mod taxonomy;
pub mod text;
pub mod tools;
