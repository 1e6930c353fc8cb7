use std::process::ExitCode;

use clap::Parser;
use partsim_cli::{execute, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    execute(cli, &mut stdout.lock(), &mut stderr.lock()).into()
}
