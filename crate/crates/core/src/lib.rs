pub mod cli;
pub mod design;
pub mod diagnostics;
pub mod eda;
pub mod error;
pub mod io;
pub mod krige;
pub mod linalg;
pub mod mcmc;
pub mod records;
pub mod rng;
pub mod samplers;
pub mod stats;

pub use cli::cli_dispatch;
pub use error::{Error, Result};
