pub mod bench;
pub mod cli;
pub mod detect;
pub mod error;
pub mod io;
pub mod moments;
pub mod oracle;
pub mod solver;
pub mod tuning;

pub use error::{Error, Result};
