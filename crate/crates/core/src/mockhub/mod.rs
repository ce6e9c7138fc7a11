//! Offline stand-in for the hub: the same JSON API served from memory over
//! local HTTP, preloaded with a fixed fixture.
//!
//! Every API request is counted per endpoint (`GET data/{id}` and so on) so
//! tests can observe caching. Two control endpoints sit outside the API and
//! are not counted: `POST /_control/reset` restores the fixture and zeroes
//! the counters, `GET /_control/counts` returns the counters.

pub mod fixture;
mod state;

pub use state::{HubRequest, HubResponse, HubState, StoredData, StoredRun, User};

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, OnceLock};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use thiserror::Error;

use crate::client::API_PREFIX;

const WORKERS: usize = 4;
const POLL: Duration = Duration::from_millis(100);

#[derive(Debug, Error)]
pub enum HubError {
    #[error("cannot listen on {bind}: {message}")]
    Bind { bind: String, message: String },
}

/// The bundled fixture, built once per process.
pub fn fixture_state() -> &'static HubState {
    static FIXTURE: OnceLock<HubState> = OnceLock::new();
    FIXTURE.get_or_init(fixture::build)
}

/// `GET data/15` becomes `GET data/{id}`.
pub fn endpoint_key(method: &str, path: &str) -> String {
    let path: Vec<&str> =
        path.trim_matches('/').split('/').map(|s| if s.parse::<u64>().is_ok() { "{id}" } else { s }).collect();
    format!("{method} {}", path.join("/"))
}

struct Shared {
    initial: HubState,
    state: Mutex<HubState>,
    counts: Mutex<BTreeMap<String, u64>>,
    stop: AtomicBool,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Shared {
    fn reset(&self) {
        *lock(&self.state) = self.initial.clone();
        lock(&self.counts).clear();
    }

    fn respond(&self, mut request: tiny_http::Request) {
        let method = request.method().as_str().to_ascii_uppercase();
        let parsed = url::Url::parse(&format!("http://hub{}", request.url()));
        let mut body = String::new();
        let reply = match parsed {
            Err(_) => HubResponse { status: 400, body: String::new() },
            Ok(_) if request.as_reader().read_to_string(&mut body).is_err() => {
                HubResponse { status: 400, body: "unreadable body".into() }
            }
            Ok(url) => {
                let path = url.path().trim_start_matches('/');
                match (method.as_str(), path) {
                    ("POST", "_control/reset") => {
                        self.reset();
                        HubResponse { status: 200, body: "{}".into() }
                    }
                    ("GET", "_control/counts") => HubResponse {
                        status: 200,
                        body: serde_json::to_string(&*lock(&self.counts)).expect("serializable"),
                    },
                    _ => {
                        let api_path = path.strip_prefix(API_PREFIX).map(|p| p.trim_start_matches('/'));
                        let api_path = api_path.unwrap_or(path);
                        *lock(&self.counts).entry(endpoint_key(&method, api_path)).or_default() += 1;
                        let req = HubRequest {
                            method: method.clone(),
                            path: api_path.to_string(),
                            query: url.query_pairs().map(|(k, v)| (k.into_owned(), v.into_owned())).collect(),
                            body,
                        };
                        if path.starts_with(API_PREFIX) {
                            lock(&self.state).handle(&req)
                        } else {
                            HubResponse { status: 404, body: format!("{{\"code\":404,\"message\":\"not an API path: /{path}\"}}") }
                        }
                    }
                }
            }
        };
        log::debug!("{method} {} -> {}", request.url(), reply.status);
        let header = tiny_http::Header::from_bytes("Content-Type", "application/json").expect("valid header");
        let response = tiny_http::Response::from_string(reply.body).with_status_code(reply.status).with_header(header);
        if let Err(e) = request.respond(response) {
            log::warn!("mock hub could not send a response: {e}");
        }
    }
}

/// A running mock hub. Stops when dropped.
pub struct MockHub {
    addr: SocketAddr,
    shared: Arc<Shared>,
    server: Arc<tiny_http::Server>,
    workers: Vec<JoinHandle<()>>,
}

impl MockHub {
    /// Serves the fixture on a free local port.
    pub fn start() -> Result<Self, HubError> {
        Self::start_on("127.0.0.1:0", fixture_state().clone())
    }

    pub fn start_on(bind: &str, state: HubState) -> Result<Self, HubError> {
        let server = tiny_http::Server::http(bind)
            .map_err(|e| HubError::Bind { bind: bind.to_string(), message: e.to_string() })?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| HubError::Bind { bind: bind.to_string(), message: "not an IP socket".into() })?;
        let server = Arc::new(server);
        let shared = Arc::new(Shared {
            initial: state.clone(),
            state: Mutex::new(state),
            counts: Mutex::new(BTreeMap::new()),
            stop: AtomicBool::new(false),
        });
        let workers = (0..WORKERS)
            .map(|i| {
                let server = Arc::clone(&server);
                let shared = Arc::clone(&shared);
                thread::Builder::new()
                    .name(format!("mockhub-{i}"))
                    .spawn(move || {
                        while !shared.stop.load(Ordering::SeqCst) {
                            match server.recv_timeout(POLL) {
                                Ok(Some(req)) => shared.respond(req),
                                Ok(None) => {}
                                Err(e) => {
                                    log::warn!("mock hub accept failed: {e}");
                                    break;
                                }
                            }
                        }
                    })
                    .expect("spawn mock hub worker")
            })
            .collect();
        log::info!("mock hub listening on http://{addr}");
        Ok(MockHub { addr, shared, server, workers })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Base URL suitable for `Config::server_url`.
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Total API requests served since start or the last reset.
    pub fn request_count(&self) -> u64 {
        lock(&self.shared.counts).values().sum()
    }

    pub fn request_counts(&self) -> BTreeMap<String, u64> {
        lock(&self.shared.counts).clone()
    }

    pub fn count(&self, endpoint: &str) -> u64 {
        lock(&self.shared.counts).get(endpoint).copied().unwrap_or(0)
    }

    /// Restores the initial state and zeroes the counters.
    pub fn reset(&self) {
        self.shared.reset();
    }

    /// Runs `f` with exclusive access to the live state.
    pub fn with_state<R>(&self, f: impl FnOnce(&mut HubState) -> R) -> R {
        f(&mut lock(&self.shared.state))
    }

    /// Blocks until the hub is stopped from another thread or the process ends.
    pub fn wait(mut self) {
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }

    pub fn stop(self) {}
}

impl Drop for MockHub {
    fn drop(&mut self) {
        self.shared.stop.store(true, Ordering::SeqCst);
        self.server.unblock();
        for w in self.workers.drain(..) {
            let _ = w.join();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_keys_generalize_ids() {
        assert_eq!(endpoint_key("GET", "data/15"), "GET data/{id}");
        assert_eq!(endpoint_key("GET", "/data/qualities/15"), "GET data/qualities/{id}");
        assert_eq!(endpoint_key("POST", "run"), "POST run");
    }
}
