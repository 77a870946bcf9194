pub mod error;
pub mod eval;
pub mod matrix;
pub mod model;
pub mod nn;
pub mod objective;
pub mod rng;
pub mod theory;
pub mod trainer;
pub mod worlds;

pub use error::{Error, ErrorKind, Result};
pub use matrix::Matrix;
pub use rng::Rng;
