//! Semiclassical fixed-energy Green functions in position, momentum and mixed
//! position–momentum representations.

pub mod amplitude;
pub mod bench;
pub mod dynamics;
pub mod error;
pub mod greens;
pub mod pathfinder;
pub mod trajectory;
pub mod transforms;

pub use error::{Error, Result};
