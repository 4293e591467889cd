pub mod attention;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod encoder;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod numerics;
pub mod par;
pub mod rng;
pub mod run;
pub mod synthetic;
pub mod text;
pub mod training;

pub use error::{Error, Result};
