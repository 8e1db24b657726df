use std::process::ExitCode;

use adapter_mpc_cli::{run, Cli};
use clap::Parser;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&out.json).expect("json values serialize"));
            } else {
                println!("{}", out.text);
            }
            if let Some(msg) = &out.failure {
                eprintln!("error: {msg}");
            }
            ExitCode::from(out.exit_code())
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
