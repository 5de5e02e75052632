use std::io::Write;

use clap::Parser;

use slipsense::cli::{exit_code, run, Cli, EXIT_OK};

fn main() {
    let cli = Cli::parse();
    match run(cli) {
        Ok(outcome) => {
            // a closed pipe on stdout is not a failure of the command
            let mut out = std::io::stdout().lock();
            let _ = out.write_all(outcome.summary.as_bytes());
            for p in &outcome.written {
                let _ = writeln!(out, "wrote {}", p.display());
            }
            std::process::exit(EXIT_OK);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(exit_code(&e));
        }
    }
}
