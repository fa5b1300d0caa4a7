pub mod autodiff;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod doe;
pub mod error;
pub mod heatmap;
pub mod losses;
pub mod manifest;
pub mod physics;
pub mod rng;
pub mod selfcheck;
pub mod sim;
pub mod tracker;
pub mod vec2;
pub mod video;

pub use error::{Error, Result};
