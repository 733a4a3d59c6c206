use clap::Parser;
use fluxnoise_cli::{run, Cli};

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
        }
        Err(e) => {
            eprintln!(
                "fluxnoise: error command={} kind={} message={:?}",
                cli.command.name(),
                e.kind(),
                e.to_string()
            );
            std::process::exit(e.exit_code());
        }
    }
}
