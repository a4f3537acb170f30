use std::net::SocketAddr;
use std::path::PathBuf;

use clap::Parser;
use torq_service::{router, AppState};

#[derive(Parser)]
#[command(name = "torq-service", version, about = "HTTP service for torq runs")]
struct Args {
    /// Listen address.
    #[arg(long, env = "TORQ_ADDR", default_value = "127.0.0.1:8080")]
    addr: SocketAddr,
    /// Directory for scenarios stored through `POST /scenarios`.
    #[arg(long, env = "TORQ_SCENARIO_DIR", default_value = "scenarios")]
    scenario_dir: PathBuf,
    /// Runs executed at once; further requests wait.
    #[arg(long, env = "TORQ_MAX_CONCURRENT", default_value_t = 4)]
    max_concurrent: usize,
}

#[tokio::main]
async fn main() -> std::io::Result<()> {
    let args = Args::parse();
    let app = router(AppState::new(args.scenario_dir, args.max_concurrent));
    let listener = tokio::net::TcpListener::bind(args.addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await
}
