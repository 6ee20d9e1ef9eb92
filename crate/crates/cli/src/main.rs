use clap::Parser;
use velo_attn_cli::{exit_code, run, Cli};

fn main() {
    if let Err(err) = run(Cli::parse()) {
        eprintln!("error: {err}");
        std::process::exit(exit_code(&err));
    }
}
