mod cli;
mod commands;
mod config;
mod exit;
mod output;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = cli::Cli::parse();
    if let Err(e) = commands::run(&cli) {
        eprintln!("epiforecast {}: {e}", cli.command.name());
        std::process::exit(e.code());
    }
}
