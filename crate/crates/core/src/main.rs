use clap::Parser;

use surveygen::cli::{run, Cli, Environment};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let outcome = run(cli, &Environment::from_process());
    if outcome.exit_code == 2 {
        eprintln!("{}", outcome.summary);
    } else {
        println!("{}", outcome.summary);
    }
    std::process::exit(outcome.exit_code);
}
