//! Elicitation sessions over HTTP.
//!
//! Sessions live as JSON documents in a data directory. Fits run as
//! background jobs that can be polled or cancelled.

pub mod api;
pub mod error;
pub mod session;
pub mod store;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{router, AppState};
pub use error::{Result, ServiceError};
pub use session::{Session, Status, Submission};
pub use store::{resolve_data_dir, Store, DATA_DIR_ENV};

/// Runs the service until the process is stopped.
pub async fn serve(addr: SocketAddr, data_dir: PathBuf) -> std::io::Result<()> {
    let store = Store::open(&data_dir).map_err(|e| std::io::Error::other(e.to_string()))?;
    let app = router(AppState::new(store));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(%addr, dir = %data_dir.display(), "listening");
    axum::serve(listener, app).await
}
