use clap::Parser;
use supportbot_service::commands::{run, Cli};

fn main() {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).parse_default_env().init();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
