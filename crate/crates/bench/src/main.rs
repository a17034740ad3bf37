use clap::Parser;
use tcq_bench::cli::{execute, Cli};

fn main() {
    let cli = Cli::parse();
    let stdout = std::io::stdout();
    if let Err(e) = execute(&cli, &mut stdout.lock()) {
        eprintln!("tcq-bench: {e}");
        std::process::exit(e.exit_code());
    }
}
