//! HTTP service and operator CLI on top of `surveystat-core`.

pub mod cli;
pub mod config;
pub mod http;
pub mod notify;
pub mod session;

use anyhow::Context;

pub use config::ServiceConfig;
pub use http::{router, AppState};

/// Validates `config`, opens the store and serves until Ctrl-C.
pub fn serve(config: ServiceConfig) -> anyhow::Result<()> {
    config.validate()?;
    let runtime = tokio::runtime::Runtime::new().context("starting runtime")?;
    runtime.block_on(async move {
        let store = surveystat_core::Store::open(&config.store)?;
        let transport = notify::transport_for(&config.transport);
        let bind = config.bind;
        let state = AppState::new(config, store, transport);
        let listener = tokio::net::TcpListener::bind(bind)
            .await
            .with_context(|| format!("binding {bind}"))?;
        tracing::info!("listening on http://{}", listener.local_addr()?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(())
    })
}
