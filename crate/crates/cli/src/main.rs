use std::process::ExitCode;

use clap::Parser;
use recpipe_cli::{error_json, run, Cli};

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(o) => {
            for w in &o.warnings {
                eprintln!("{}", serde_json::json!({ "warning": w }));
            }
            if !o.summary.is_empty() {
                println!("{}", o.summary);
            }
            println!("wrote {}", cli.command.common().out.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", error_json(&e));
            ExitCode::FAILURE
        }
    }
}
