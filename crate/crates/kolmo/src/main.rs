use std::process::ExitCode;

use clap::Parser;
use kolmo::cli::{run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = std::io::stdout().lock();
    match run(cli, &mut stdout) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("kolmo: {e}");
            ExitCode::from(2)
        }
    }
}
