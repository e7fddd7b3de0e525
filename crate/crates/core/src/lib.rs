//! Closed-loop reinforcement learning on a noisy spiking neural network
//! substrate playing a single-paddle Pong game.

pub mod agent;
pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod noise;
pub mod plasticity;
pub mod pong;
pub mod rng;
pub mod snn;

pub use error::{Error, Result};
