//! Test harness: a seeded results file and a one-shot request helper.

#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde_json::Value;
use simexplore_service::{router, AppState, ServiceConfig};
use tower::ServiceExt;

pub const THETA: f64 = -0.5;

/// `n_rep` repetitions for 2 DGMs and 3 methods, plus a text column.
pub fn results_csv(seed: u64, n_rep: usize, missing: f64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = Normal::new(0.0, 1.0).unwrap();
    let mut out = String::from("idrep,dgm,method,b,se,note\n");
    for d in 1..=2 {
        for m in 1..=3 {
            let sd = 0.12 + 0.02 * m as f64 + 0.01 * d as f64;
            for r in 1..=n_rep {
                let b = THETA + 0.01 * (m as f64 - 1.0) + sd * z.sample(&mut rng);
                let se = sd * (1.0 + 0.05 * z.sample(&mut rng));
                let b = if rng.random::<f64>() < missing {
                    "NA".to_string()
                } else {
                    format!("{b}")
                };
                out.push_str(&format!("{r},{d},{m},{b},{se},run{r}\n"));
            }
        }
    }
    out
}

pub fn mapping_json() -> Value {
    serde_json::json!({
        "estimate": "b",
        "se": "se",
        "truth": { "fixed": THETA },
        "method": "method",
        "dgm": ["dgm"],
        "rep": "idrep"
    })
}

pub fn app_with(config: ServiceConfig) -> (Router, Arc<AppState>) {
    let state = Arc::new(AppState::new(config).unwrap());
    (router(state.clone()), state)
}

pub fn app() -> Router {
    app_with(ServiceConfig::default()).0
}

pub struct Reply {
    pub status: StatusCode,
    pub content_type: String,
    pub body: Vec<u8>,
}

impl Reply {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body)
            .unwrap_or_else(|e| panic!("not json ({e}): {}", String::from_utf8_lossy(&self.body)))
    }

    pub fn text(&self) -> String {
        String::from_utf8(self.body.clone()).unwrap()
    }

    pub fn code(&self) -> String {
        self.json()["code"].as_str().unwrap_or_default().to_string()
    }
}

pub async fn send(
    app: &Router,
    method: Method,
    uri: &str,
    content_type: Option<&str>,
    body: Vec<u8>,
) -> Reply {
    let mut req = Request::builder().method(method).uri(uri);
    if let Some(ct) = content_type {
        req = req.header("content-type", ct);
    }
    let resp = app
        .clone()
        .oneshot(req.body(Body::from(body)).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let content_type = resp
        .headers()
        .get("content-type")
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    Reply {
        status,
        content_type,
        body,
    }
}

pub async fn get(app: &Router, uri: &str) -> Reply {
    send(app, Method::GET, uri, None, Vec::new()).await
}

pub async fn put_json(app: &Router, uri: &str, body: &Value) -> Reply {
    send(
        app,
        Method::PUT,
        uri,
        Some("application/json"),
        serde_json::to_vec(body).unwrap(),
    )
    .await
}

pub async fn post_json(app: &Router, uri: &str, body: &Value) -> Reply {
    send(
        app,
        Method::POST,
        uri,
        Some("application/json"),
        serde_json::to_vec(body).unwrap(),
    )
    .await
}

pub fn multipart(file_name: &str, content: &[u8]) -> (String, Vec<u8>) {
    let boundary = "simexploreboundary7MA4YWxk";
    let mut body = Vec::new();
    body.extend_from_slice(
        format!(
            "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{file_name}\"\r\nContent-Type: application/octet-stream\r\n\r\n"
        )
        .as_bytes(),
    );
    body.extend_from_slice(content);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    (format!("multipart/form-data; boundary={boundary}"), body)
}

pub async fn upload_file(app: &Router, file_name: &str, content: &[u8]) -> Reply {
    let (ct, body) = multipart(file_name, content);
    send(app, Method::POST, "/api/datasets", Some(&ct), body).await
}

/// Uploads a results file and maps it; returns the session id.
pub async fn mapped_session(app: &Router, csv: &str) -> String {
    let up = upload_file(app, "results.csv", csv.as_bytes()).await;
    assert_eq!(up.status, StatusCode::OK, "{}", up.text());
    let id = up.json()["session_id"].as_str().unwrap().to_string();
    let m = put_json(app, &format!("/api/datasets/{id}/mapping"), &mapping_json()).await;
    assert_eq!(m.status, StatusCode::OK, "{}", m.text());
    id
}
