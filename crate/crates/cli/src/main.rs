use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = matchrep_cli::Cli::parse();
    if let Err(e) = matchrep_cli::run(cli) {
        eprintln!("error: {e}");
        std::process::exit(matchrep_cli::exit_code(&e));
    }
}
