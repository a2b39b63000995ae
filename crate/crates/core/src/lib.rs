//! Cooperative multi-agent reinforcement learning for whole-page content ranking.

pub mod agents;
pub mod envs;
pub mod error;
pub mod eval;
pub mod numerics;
pub mod offline;
pub mod replay;
pub mod train;

pub use error::{Error, Result};
