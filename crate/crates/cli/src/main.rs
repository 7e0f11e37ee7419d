mod config;
mod report;
mod run;

use clap::Parser;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let args = config::Args::parse();
    let cfg = match args.resolve() {
        Ok(cfg) => cfg,
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(2);
        }
    };
    if let Err(err) = run::execute(&cfg) {
        eprintln!("error: {err:#}");
        std::process::exit(1);
    }
}
