//! HTTP JSON API over the simexplore engine.
//!
//! A session holds one uploaded dataset, its variable mapping and display
//! options. Every endpoint is a thin adapter over `simexplore_core`; the
//! command-line tool goes through the same `query` functions, so both
//! produce identical bytes for identical requests.
//!
//! Endpoints (all under `/api/datasets`):
//!
//! | method | path | body / reply |
//! |---|---|---|
//! | POST | `/` | multipart file, `{"url"}` or `{"pasted"}` → `{session_id, columns, n_rows}` |
//! | GET, DELETE | `/{id}` | session summary |
//! | PUT | `/{id}/mapping` | mapping → echo plus strata |
//! | GET | `/{id}/preview?offset&limit` | a page of raw rows |
//! | GET | `/{id}/performance?dgm&measures` | tidy estimates |
//! | GET | `/{id}/missing[/bar,heat,shadow,matrix]` | missingness |
//! | GET | `/{id}/plots/{kind}?…` | plot data |
//! | POST | `/{id}/plots/{kind}/render?format` | svg, or converted bytes |
//! | GET | `/{id}/export?what&format` | table, estimates, missing or data |
//! | GET, PUT | `/{id}/options` | table style, default measures, alpha |
//!
//! Errors are `{code, message, detail}` JSON with a matching status.

use std::sync::Arc;

use axum::extract::DefaultBodyLimit;
use axum::routing::{get, post, put};
use axum::Router;
use tokio::net::TcpListener;
use tower_http::services::{ServeDir, ServeFile};

pub mod config;
pub mod error;
pub mod routes;
pub mod session;

pub use config::ServiceConfig;
pub use error::ApiError;
use session::SessionStore;

pub struct AppState {
    pub config: ServiceConfig,
    pub store: SessionStore,
}

impl AppState {
    pub fn new(config: ServiceConfig) -> std::io::Result<Self> {
        let store = SessionStore::open(
            config.session_ttl,
            config.max_sessions,
            config.spill_dir.clone(),
        )?;
        Ok(Self { config, store })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    let limit = state.config.max_upload.saturating_add(routes::BODY_SLACK);
    let api = Router::new()
        .route("/datasets", post(routes::upload))
        .route(
            "/datasets/{id}",
            get(routes::summary).delete(routes::delete),
        )
        .route("/datasets/{id}/mapping", put(routes::put_mapping))
        .route("/datasets/{id}/preview", get(routes::preview))
        .route("/datasets/{id}/performance", get(routes::performance))
        .route("/datasets/{id}/missing", get(routes::missing))
        .route("/datasets/{id}/missing/{view}", get(routes::missing_view))
        .route("/datasets/{id}/plots/{kind}", get(routes::plot))
        .route("/datasets/{id}/plots/{kind}/render", post(routes::render))
        .route("/datasets/{id}/export", get(routes::export))
        .route(
            "/datasets/{id}/options",
            get(routes::get_options).put(routes::put_options),
        )
        .fallback(routes::api_not_found);
    let app = Router::new()
        .route("/health", get(routes::health))
        .nest("/api", api);
    let app = match &state.config.static_dir {
        Some(dir) => app.fallback_service(
            ServeDir::new(dir).not_found_service(ServeFile::new(dir.join("index.html"))),
        ),
        None => app.route("/", get(routes::placeholder)),
    };
    app.layer(DefaultBodyLimit::max(limit)).with_state(state)
}

/// Binds the configured address. Failing here (port in use, bad address)
/// is reported separately from serving errors.
pub async fn bind(config: &ServiceConfig) -> std::io::Result<TcpListener> {
    TcpListener::bind(config.addr()).await
}

pub async fn serve(listener: TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
