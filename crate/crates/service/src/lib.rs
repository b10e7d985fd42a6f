//! Review service: an HTTP session around the ITAR loop where a person can
//! inspect each iteration's topics, override automatic labels and trigger
//! the next iteration.

pub mod api;
pub mod session;

use std::net::SocketAddr;
use std::path::PathBuf;

pub use api::{router, AppState};
pub use session::{Session, SessionError, SessionSpec, SessionState};

#[derive(Debug, Clone)]
pub struct ServeOptions {
    pub port: u16,
    pub session_dir: PathBuf,
    /// Starts a new session when `session_dir` has none.
    pub new_session: Option<SessionSpec>,
    pub static_dir: Option<PathBuf>,
}

/// Opens (or creates) the session and serves it until ctrl-c.
pub async fn serve(opts: ServeOptions) -> anyhow::Result<()> {
    let dir = opts.session_dir.clone();
    let spec = opts.new_session.clone();
    let session = tokio::task::spawn_blocking(move || match Session::open(&dir) {
        Err(SessionError::Missing(_)) => match spec {
            Some(spec) => Session::create(&dir, spec).map(Some),
            None => Ok(None),
        },
        other => other.map(Some),
    })
    .await??;
    if session.is_none() {
        log::warn!("no session in {}; API calls will return 404", opts.session_dir.display());
    }
    let app = router(AppState { session }, opts.static_dir);
    let addr = SocketAddr::from(([127, 0, 0, 1], opts.port));
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
