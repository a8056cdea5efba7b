//! Command-line harness for butterfly Legendre transforms: benchmarks,
//! the verification suite and plan files.

pub mod args;
pub mod bench;
pub mod error;
pub mod format;
pub mod plan;
pub mod quad;
pub mod vectors;
pub mod verify;

use std::io::Write;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

pub fn run(cli: &Cli, out: &mut dyn Write) -> CliResult<()> {
    match &cli.command {
        Command::Bench(a) => bench::run_bench(a, out),
        Command::Verify(a) => verify::run_verify(a, out),
        Command::Plan(c) => plan::run_plan(c, out),
        Command::Quad(a) => quad::run_quad(a, out),
    }
}
