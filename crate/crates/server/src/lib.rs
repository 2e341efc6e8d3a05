//! HTTP annotation service over weaklab project directories, and the client
//! for external model servers.
//!
//! Every response is JSON except `GET /export`, which returns a zip of the
//! `.ann` layers. Errors look like
//! `{"error": "NotFound", "message": "...", ...}`; validation failures add a
//! `violations` list.

pub mod api;
pub mod bridge;
pub mod error;
pub mod jobs;
pub mod store;
pub mod stub;

use std::future::Future;
use std::net::SocketAddr;

pub use api::{open_root, router, AppState, Shared};
pub use bridge::{bridge_predict, BridgeError, ModelServerConfig};
pub use error::ApiError;
pub use store::{FlushError, FlushReport, ProjectStore, StoreError};

/// Serves `state` on `listener` until `shutdown` resolves.
pub async fn serve<F>(listener: tokio::net::TcpListener, state: Shared, shutdown: F) -> std::io::Result<()>
where
    F: Future<Output = ()> + Send + 'static,
{
    axum::serve(listener, router(state)).with_graceful_shutdown(shutdown).await
}

/// Binds `addr` and serves in a background task. Returns the bound address
/// (useful with port 0) and the task handle.
pub async fn spawn(
    state: Shared,
    addr: SocketAddr,
) -> std::io::Result<(SocketAddr, tokio::task::JoinHandle<std::io::Result<()>>)> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    let bound = listener.local_addr()?;
    let handle = tokio::spawn(async move { axum::serve(listener, router(state)).await });
    Ok((bound, handle))
}

/// Resolves on Ctrl-C.
pub async fn ctrl_c() {
    let _ = tokio::signal::ctrl_c().await;
}
