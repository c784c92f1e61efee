//! Encrypted-inference HTTP server.
//!
//! The server holds only the adapted bundle and a classifier head; it never
//! sees the plaintext vocabulary or the passkey. Logs carry token counts and
//! latencies, never payloads.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Instant;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use cipherlm_core::tokenize::{second_stage_tokenize, CipherTokenStream};
use cipherlm_core::trainer::{argmax, pool_bundle, ClassifierHead};
use cipherlm_core::AdaptedBundle;
use tokio::net::TcpListener;

use crate::error::{Error, Result};
use crate::wire::{ErrorBody, Health, InferRequest, InferResponse};

/// Immutable model state shared by all requests.
#[derive(Debug)]
pub struct Model {
    bundle: AdaptedBundle,
    head: ClassifierHead,
    fingerprint: String,
}

impl Model {
    pub fn new(bundle: AdaptedBundle, head: ClassifierHead) -> Result<Self> {
        head.validate()?;
        if head.dim != bundle.emb().cols() {
            return Err(Error::Startup(format!(
                "head expects {}-dim features, bundle embeddings are {}-dim",
                head.dim,
                bundle.emb().cols()
            )));
        }
        let fingerprint = model_fingerprint(&bundle, &head)?;
        Ok(Self {
            bundle,
            head,
            fingerprint,
        })
    }

    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn bundle(&self) -> &AdaptedBundle {
        &self.bundle
    }

    pub fn head(&self) -> &ClassifierHead {
        &self.head
    }

    /// The whole server-side pipeline for one request.
    pub fn infer(&self, req: &InferRequest) -> std::result::Result<InferResponse, String> {
        req.validate()?;
        let stream = CipherTokenStream {
            tokens: req.cipher_tokens.clone(),
        };
        let seq = second_stage_tokenize(&stream, &self.bundle).map_err(|e| e.to_string())?;
        let features = pool_bundle(&seq.ids, &self.bundle);
        let scores = self.head.scores(&features);
        Ok(InferResponse {
            label: argmax(&scores),
            scores,
            model_fingerprint: self.fingerprint.clone(),
        })
    }

    pub fn health(&self) -> Health {
        Health {
            status: "ok".into(),
            vocab_size: self.bundle.vocab().len(),
            dim: self.bundle.emb().cols(),
        }
    }
}

/// 8-byte Blake2b digest (hex) over the bundle vocabulary, matrix and head parameters.
pub fn model_fingerprint(bundle: &AdaptedBundle, head: &ClassifierHead) -> Result<String> {
    let mut state = blake2b_simd::Params::new().hash_length(8).to_state();
    state.update(bundle.vocab().to_text().as_bytes());
    state.update(&bundle.emb().to_clm1_bytes()?);
    let head_json = serde_json::to_vec(head).map_err(|e| Error::json("head", e))?;
    state.update(&head_json);
    Ok(state.finalize().to_hex().to_string())
}

fn bad_request(message: String) -> Response {
    (StatusCode::BAD_REQUEST, Json(ErrorBody { error: message })).into_response()
}

async fn infer_handler(State(model): State<Arc<Model>>, body: Bytes) -> Response {
    let started = Instant::now();
    let req: InferRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => {
            log::info!("rejected malformed request body ({} bytes)", body.len());
            return bad_request(format!("malformed request body: {e}"));
        }
    };
    match model.infer(&req) {
        Ok(resp) => {
            log::info!(
                "infer tokens={} latency_us={}",
                req.cipher_tokens.len(),
                started.elapsed().as_micros()
            );
            Json(resp).into_response()
        }
        Err(message) => {
            log::info!("rejected request with {} tokens", req.cipher_tokens.len());
            bad_request(message)
        }
    }
}

async fn health_handler(State(model): State<Arc<Model>>) -> Json<Health> {
    Json(model.health())
}

pub fn router(model: Arc<Model>) -> Router {
    Router::new()
        .route("/v1/infer", post(infer_handler))
        .route("/v1/health", get(health_handler))
        .with_state(model)
}

pub async fn bind(addr: &str) -> Result<TcpListener> {
    TcpListener::bind(addr)
        .await
        .map_err(|e| Error::Startup(format!("cannot bind {addr}: {e}")))
}

/// Serves until the future `shutdown` resolves.
pub async fn serve_with_shutdown(
    listener: TcpListener,
    model: Arc<Model>,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> Result<()> {
    axum::serve(listener, router(model))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::Startup(e.to_string()))
}

/// Handle to a server running on a background thread with its own runtime.
pub struct BackgroundServer {
    pub addr: SocketAddr,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<Result<()>>>,
}

impl BackgroundServer {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn stop(mut self) -> Result<()> {
        self.shutdown_now()
    }

    fn shutdown_now(&mut self) -> Result<()> {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        match self.thread.take() {
            Some(t) => t
                .join()
                .map_err(|_| Error::Startup("server thread panicked".into()))?,
            None => Ok(()),
        }
    }
}

impl Drop for BackgroundServer {
    fn drop(&mut self) {
        let _ = self.shutdown_now();
    }
}

/// Binds `addr` (use port 0 for an ephemeral port) and serves in the background.
pub fn spawn(model: Model, addr: &str) -> Result<BackgroundServer> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .worker_threads(2)
        .enable_all()
        .build()
        .map_err(|e| Error::Startup(e.to_string()))?;
    let listener = rt.block_on(bind(addr))?;
    let local = listener
        .local_addr()
        .map_err(|e| Error::Startup(e.to_string()))?;
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    let model = Arc::new(model);
    let thread = std::thread::spawn(move || {
        rt.block_on(serve_with_shutdown(listener, model, async {
            let _ = rx.await;
        }))
    });
    Ok(BackgroundServer {
        addr: local,
        shutdown: Some(tx),
        thread: Some(thread),
    })
}
