use clap::Parser;

use forgelens_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    if let Err(e) = run(&cli, &argv) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
