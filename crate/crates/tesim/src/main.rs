use clap::Parser;
use tesim::cli::{run_cli, Cli};

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run_cli(cli) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
