use std::io::IsTerminal;

use clap::Parser;
use creditlens::args::Cli;
use tracing::Level;

fn main() {
    let cli = Cli::parse();
    let level = if cli.quiet { Level::WARN } else { Level::INFO };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .with_ansi(std::io::stderr().is_terminal())
        .with_target(false)
        .init();
    if let Err(e) = creditlens::run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(creditlens::exit_code(&e));
    }
}
