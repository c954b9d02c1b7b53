use clap::Parser;

use epifit_cli::Cli;

fn main() {
    let cli = Cli::parse();
    if let Err(e) = epifit_cli::run(cli.command) {
        eprintln!("epifit: {e}");
        std::process::exit(e.exit_code());
    }
}
