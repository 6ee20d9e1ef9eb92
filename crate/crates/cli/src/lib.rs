//! Library side of the `velo-attn` binary: configuration handling and one
//! function per subcommand, usable from tests and scripts.

pub mod commands;
pub mod config;

pub use commands::{exit_code, run, Cli, Command};
pub use config::{Preset, RunConfig};
