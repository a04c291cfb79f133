use std::io::Write;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = nafsim::cli::Cli::parse();
    let outcome = nafsim::cli::run(cli);
    // a closed pipe is not worth a panic
    if outcome.exit_code == 0 {
        let _ = writeln!(std::io::stdout(), "{}", outcome.summary);
    } else {
        let _ = writeln!(std::io::stderr(), "{}", outcome.summary);
    }
    let mut out = std::io::stdout().lock();
    for p in &outcome.artifacts {
        let _ = writeln!(out, "  {}", p.display());
    }
    std::process::exit(outcome.exit_code);
}
