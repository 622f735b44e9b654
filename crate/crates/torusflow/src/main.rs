use clap::Parser;
use torusflow::{init_threads, run, Cli};

fn main() {
    let cli = Cli::parse();
    let code = match init_threads().and_then(|_| run(&cli)) {
        Ok((outcome, msg)) => {
            if !cli.common.quiet {
                eprintln!("{msg}");
            }
            outcome.exit_code()
        }
        Err(e) => {
            eprintln!("torusflow: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
