//! File formats, run manifests and the command implementations behind the
//! `ctrbias` binary. The numerical work lives in `ctrbias-core`; this crate
//! reads and writes CSV/JSON/model files around it.

pub mod commands;
pub mod csv_io;
pub mod error;
pub mod manifest;
pub mod pipeline;
pub mod reports;
pub mod schema_file;

pub use error::{CliError, CliResult};
