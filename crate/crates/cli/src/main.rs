use clap::Parser;

fn main() {
    if let Err(e) = steermine_cli::run(steermine_cli::Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
