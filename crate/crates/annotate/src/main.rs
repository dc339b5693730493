use std::fs::File;
use std::io::BufReader;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use tower_http::trace::TraceLayer;
use tracing_subscriber::EnvFilter;

use gapcheck_annotate::{router, AppState, Store};
use gapcheck_core::corpus::load_records;

#[derive(Parser)]
#[command(
    name = "gapcheck-annotate",
    version,
    about = "Serve the gap annotation workflow"
)]
struct Args {
    /// Records to annotate (JSONL).
    #[arg(long)]
    records: PathBuf,
    /// Directory holding the annotation log.
    #[arg(long, default_value = "annotation-data")]
    data_dir: PathBuf,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    host: std::net::IpAddr,
    /// Built UI bundle served at `/`.
    #[arg(long)]
    ui_dir: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_env("GAPCHECK_LOG").unwrap_or_else(|_| EnvFilter::new("info")),
        )
        .init();
    let args = Args::parse();
    let records = match File::open(&args.records).map(BufReader::new) {
        Ok(f) => match load_records(f) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("{}: {e}", args.records.display());
                return ExitCode::from(1);
            }
        },
        Err(e) => {
            eprintln!("{}: {e}", args.records.display());
            return ExitCode::from(2);
        }
    };
    let store = match Store::open(&args.data_dir, records) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("{}: {e}", args.data_dir.display());
            return ExitCode::from(2);
        }
    };
    let app =
        router(AppState::new(store), args.ui_dir.as_deref()).layer(TraceLayer::new_for_http());
    let addr = SocketAddr::new(args.host, args.port);
    let listener = match tokio::net::TcpListener::bind(addr).await {
        Ok(l) => l,
        Err(e) => {
            eprintln!("bind {addr}: {e}");
            return ExitCode::from(2);
        }
    };
    tracing::info!(%addr, "listening");
    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    match axum::serve(listener, app)
        .with_graceful_shutdown(shutdown)
        .await
    {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("server error: {e}");
            ExitCode::from(1)
        }
    }
}
