pub mod cli_io;
pub mod error;
pub mod line_search;
pub mod objectives;
pub mod path_problems;
pub mod scalar_kernels;
pub mod solvers;

pub use error::{Error, Result};
