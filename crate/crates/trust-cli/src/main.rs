use clap::Parser;
use trust_cli::{commands, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(error) = commands::run(&cli.command) {
        eprintln!("error: {error:#}");
        std::process::exit(1);
    }
}
