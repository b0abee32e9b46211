pub mod cli;
pub mod commutator;
pub mod corrections;
pub mod error;
pub mod kernels;
pub mod quad;
pub mod massless_modes;
pub mod mathieu;
pub mod oracle;
pub mod precise;
pub mod specfun;

pub use error::{Error, Result};
