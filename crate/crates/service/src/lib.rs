//! Service side of the support bot: configuration, the live pipeline loop and
//! the operator console API.

pub mod api;
pub mod commands;
pub mod config;
pub mod service;

use anyhow::Context;
use config::ServiceConfig;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

/// Wall-clock pause between due checks of the polling loop.
const LOOP_PAUSE: Duration = Duration::from_millis(100);

/// Runs the pipeline loop and the API until Ctrl-C or SIGTERM, then flushes
/// the event log.
pub async fn run_service(config: ServiceConfig) -> anyhow::Result<()> {
    let service = service::build_service(&config)?;
    let shared = Arc::new(Mutex::new(service));
    let listener = tokio::net::TcpListener::bind(&config.bind).await.with_context(|| format!("cannot bind {}", config.bind))?;
    log::info!("serving on {}", listener.local_addr()?);

    let stop = Arc::new(AtomicBool::new(false));
    let worker = {
        let (shared, stop) = (shared.clone(), stop.clone());
        std::thread::spawn(move || {
            while !stop.load(Ordering::SeqCst) {
                let result = shared.lock().unwrap_or_else(|p| p.into_inner()).step();
                match result {
                    Ok(Some(r)) if r.port_errors > 0 => log::warn!("{} community requests failed", r.port_errors),
                    Ok(_) => {}
                    Err(e) => log::error!("pipeline tick failed: {e}"),
                }
                std::thread::sleep(LOOP_PAUSE);
            }
        })
    };

    let token = config.console_token.clone().unwrap_or_default();
    let served = axum::serve(listener, api::router(shared.clone(), &token)).with_graceful_shutdown(shutdown_signal()).await;
    stop.store(true, Ordering::SeqCst);
    let _ = worker.join();
    shared.lock().unwrap_or_else(|p| p.into_inner()).sync()?;
    served?;
    Ok(())
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
    log::info!("shutting down");
}
