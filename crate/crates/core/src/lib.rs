//! Core library of the support bot: corpus tooling, the post classifier,
//! response generators, the community boundary and simulator, the control
//! pipeline, and all evaluation statistics.

#![allow(clippy::needless_range_loop)]

pub mod classifier;
pub mod community;
pub mod corpus;
pub mod evaluation;
pub mod generator;
pub mod nn;
pub mod pipeline;
pub mod text;
