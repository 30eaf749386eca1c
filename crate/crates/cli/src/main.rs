use clap::Parser;

use deconv_cli::{args::Cli, run};

fn main() {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(false) => {}
        Ok(true) => {
            eprintln!("warning: some grid cells failed (see failures.csv)");
            std::process::exit(2);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(1);
        }
    }
}
