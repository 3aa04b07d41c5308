use clap::Parser;
use env_logger::Env;
use tabitd_cli::{run, Cli, EXIT_USAGE};

fn main() {
    env_logger::Builder::from_env(Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    if let Ok(raw) = std::env::var("TABITD_THREADS") {
        match raw.trim().parse::<usize>() {
            Ok(n) if n > 0 => {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot size the thread pool: {e}");
                    std::process::exit(EXIT_USAGE);
                }
            }
            _ => {
                eprintln!("error: TABITD_THREADS must be a positive integer, got `{raw}`");
                std::process::exit(EXIT_USAGE);
            }
        }
    }
    std::process::exit(run(Cli::parse()));
}
