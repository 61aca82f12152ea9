mod args;
mod commands;
mod input;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, LibraryCommand};

fn run(cli: &Cli) -> anyhow::Result<u8> {
    let settings = cli.config.resolve()?;
    match &cli.command {
        Command::Synth(a) => commands::synth(a),
        Command::Disassemble(a) => commands::disassemble(a, &settings),
        Command::Library {
            command: LibraryCommand::Build(a),
        } => commands::library_build(a, &settings),
        Command::Plan(a) => commands::plan_cmd(a, &settings),
        Command::Replay(a) => commands::replay(a, &settings),
        Command::Validate(a) => commands::validate(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
