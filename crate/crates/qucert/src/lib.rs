//! File formats, SimBench import, reports and the command-line front end
//! around [`qucert_core`].

pub mod cli;
pub mod error;
pub mod report;
pub mod schema;
pub mod simbench;

pub use error::Error;
