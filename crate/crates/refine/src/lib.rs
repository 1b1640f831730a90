//! Pipeline driver: configuration, file formats, HTTP and mock backends, and
//! the `refine` command line.

pub mod backends;
pub mod cli;
pub mod config;
pub mod http;
pub mod io;
pub mod manifest;

pub use cli::run;
