use std::path::PathBuf;

use clap::Parser;
use steermine_service::{router, AppState, ServiceConfig};

/// Serves the steering API.
#[derive(Parser)]
#[command(version)]
struct Args {
    /// TOML config file; `STEERMINE_*` environment variables override it.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    tracing_subscriber::fmt().with_max_level(tracing::Level::INFO).init();
    let args = Args::parse();
    let config = ServiceConfig::from_env(args.config.as_deref())?;
    let listen = config.listen;
    let state = AppState::open(config)?;
    let listener = tokio::net::TcpListener::bind(listen).await?;
    tracing::info!(%listen, "listening");
    axum::serve(listener, router(state)).await?;
    Ok(())
}
