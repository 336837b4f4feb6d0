use clap::Parser;
use momask_cli::{run, Cli};

fn init_logging() -> Result<(), String> {
    let level = match std::env::var("MOMASK_LOG") {
        Ok(v) => match v.as_str() {
            "error" => log::LevelFilter::Error,
            "info" => log::LevelFilter::Info,
            "debug" => log::LevelFilter::Debug,
            other => return Err(format!("MOMASK_LOG must be error, info or debug, got {other:?}")),
        },
        Err(_) => log::LevelFilter::Error,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();
    Ok(())
}

fn main() {
    if let Err(msg) = init_logging() {
        eprintln!("config error: {msg}");
        std::process::exit(2);
    }
    let cli = Cli::parse();
    if let Err(e) = run(&cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
