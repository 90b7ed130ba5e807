pub mod error;
pub mod kernels;
pub mod measures;
pub mod processes;
pub mod quad;
pub mod specfun;

pub use error::{Error, Result};
pub mod verify;
