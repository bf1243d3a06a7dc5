use clap::Parser;

use divrange::cli::{self, Cli, Outcome};

fn main() {
    cli::init_threads();
    let args = Cli::parse();
    match cli::run(args) {
        Ok(Outcome::Success) => {}
        Ok(Outcome::OutsideFound) => {
            eprintln!("verification found points outside the region");
            std::process::exit(1);
        }
        Err(e) => {
            eprintln!("error: {e}");
            std::process::exit(e.exit_code());
        }
    }
}
