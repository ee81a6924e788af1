use clap::Parser;
use polyfuse_cli::{run, Cli};

fn main() {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("POLYFUSE_LOG", level)).init();
    let stdout = std::io::stdout();
    if let Err(e) = run(cli, std::env::vars(), &mut stdout.lock()) {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
