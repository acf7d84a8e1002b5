use std::collections::HashMap;
use std::convert::Infallible;
use std::future::Future;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use bytes::Bytes;
use http_body_util::combinators::BoxBody;
use http_body_util::{BodyExt, Empty, Full};
use hyper::body::Incoming;
use hyper::header::{HeaderName, HeaderValue, CONNECTION, CONTENT_TYPE, HOST};
use hyper::server::conn::http1;
use hyper::service::service_fn;
use hyper::{HeaderMap, Method, Request, Response, StatusCode, Uri};
use hyper_util::client::legacy::connect::HttpConnector;
use hyper_util::client::legacy::Client;
use hyper_util::rt::{TokioExecutor, TokioIo};
use spotex_core::Fingerprint;
use thiserror::Error;
use tokio::net::{TcpListener, TcpStream};

use crate::header::{encode_fingerprint_header, FINGERPRINT_HEADER, SESSION_HEADER};

pub type ProxyBody = BoxBody<Bytes, hyper::Error>;

/// Headers that describe one connection and are never forwarded.
const HOP_BY_HOP: &[&str] = &[
    "connection",
    "keep-alive",
    "proxy-authenticate",
    "proxy-authorization",
    "proxy-connection",
    "te",
    "trailer",
    "transfer-encoding",
    "upgrade",
];

#[derive(Debug, Error)]
pub enum ProxyError {
    #[error("data server URL must be http://host[:port][/prefix], got {0:?}")]
    DpiUrl(String),
}

#[derive(Debug, Clone)]
pub struct ProxyConfig {
    /// Base URL of the data server.
    pub dpi: Uri,
    /// How long a fetched fingerprint may be reused; zero disables caching.
    pub cache_ttl: Duration,
    /// Budget for one fingerprint fetch before forwarding without it.
    pub dpi_timeout: Duration,
    pub connect_timeout: Duration,
}

impl ProxyConfig {
    pub fn new(dpi: &str) -> Result<Self, ProxyError> {
        let uri: Uri = dpi.parse().map_err(|_| ProxyError::DpiUrl(dpi.into()))?;
        if uri.scheme_str() != Some("http") || uri.authority().is_none() || uri.query().is_some() {
            return Err(ProxyError::DpiUrl(dpi.into()));
        }
        Ok(ProxyConfig {
            dpi: uri,
            cache_ttl: Duration::ZERO,
            dpi_timeout: Duration::from_millis(500),
            connect_timeout: Duration::from_secs(10),
        })
    }
}

pub struct Proxy {
    config: ProxyConfig,
    upstream: Client<HttpConnector, Incoming>,
    dpi: Client<HttpConnector, Empty<Bytes>>,
    cache: Mutex<HashMap<String, (Instant, Fingerprint)>>,
}

impl Proxy {
    pub fn new(config: ProxyConfig) -> Self {
        let mut connector = HttpConnector::new();
        connector.set_connect_timeout(Some(config.connect_timeout));
        connector.set_nodelay(true);
        let upstream = Client::builder(TokioExecutor::new())
            .http1_preserve_header_case(true)
            .http1_title_case_headers(true)
            .build(connector.clone());
        let dpi = Client::builder(TokioExecutor::new())
            .pool_idle_timeout(Duration::from_secs(5))
            .build(connector);
        Proxy {
            config,
            upstream,
            dpi,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub async fn handle(
        self: Arc<Self>,
        req: Request<Incoming>,
    ) -> Result<Response<ProxyBody>, Infallible> {
        if req.method() == Method::CONNECT {
            return Ok(self.tunnel(req).await);
        }
        Ok(self.forward(req).await)
    }

    async fn forward(&self, req: Request<Incoming>) -> Response<ProxyBody> {
        let (mut parts, body) = req.into_parts();
        let target = match target_uri(&parts.uri, &parts.headers) {
            Ok(uri) => uri,
            Err(msg) => return text_response(StatusCode::BAD_REQUEST, msg.to_string()),
        };
        strip_hop_by_hop(&mut parts.headers);
        let session = parts
            .headers
            .get(SESSION_HEADER)
            .and_then(|v| v.to_str().ok())
            .filter(|s| is_session_token(s))
            .map(str::to_string);
        if let Some(session) = session {
            // the proxy owns this header for sessioned requests
            parts.headers.remove(FINGERPRINT_HEADER);
            if let Some(fp) = self.fingerprint(&session).await.filter(|fp| !fp.is_empty()) {
                let value = HeaderValue::from_str(&encode_fingerprint_header(&fp))
                    .expect("base64 is a valid header value");
                parts
                    .headers
                    .insert(HeaderName::from_static("x-network-fingerprint"), value);
            }
        }
        parts.uri = target;
        let target_desc = parts.uri.to_string();
        match self
            .upstream
            .request(Request::from_parts(parts, body))
            .await
        {
            Ok(resp) => {
                let (mut parts, body) = resp.into_parts();
                strip_hop_by_hop(&mut parts.headers);
                Response::from_parts(parts, body.boxed())
            }
            Err(e) => {
                tracing::warn!(target = %target_desc, error = %error_chain(&e), "upstream failed");
                text_response(
                    StatusCode::BAD_GATEWAY,
                    format!(
                        "upstream unreachable: {}: {}\n",
                        target_desc,
                        error_chain(&e)
                    ),
                )
            }
        }
    }

    /// Relays bytes for `CONNECT host:port` without looking inside.
    async fn tunnel(&self, mut req: Request<Incoming>) -> Response<ProxyBody> {
        let Some(authority) = req.uri().authority().map(|a| a.to_string()) else {
            return text_response(StatusCode::BAD_REQUEST, "CONNECT needs host:port\n".into());
        };
        let connect =
            tokio::time::timeout(self.config.connect_timeout, TcpStream::connect(&authority));
        let mut upstream = match connect.await {
            Ok(Ok(stream)) => stream,
            Ok(Err(e)) => {
                return text_response(
                    StatusCode::BAD_GATEWAY,
                    format!("upstream unreachable: {authority}: {e}\n"),
                )
            }
            Err(_) => {
                return text_response(
                    StatusCode::GATEWAY_TIMEOUT,
                    format!("upstream timed out: {authority}\n"),
                )
            }
        };
        let on_upgrade = hyper::upgrade::on(&mut req);
        tokio::spawn(async move {
            match on_upgrade.await {
                Ok(upgraded) => {
                    let mut client = TokioIo::new(upgraded);
                    if let Err(e) = tokio::io::copy_bidirectional(&mut client, &mut upstream).await
                    {
                        tracing::debug!(%authority, error = %e, "tunnel closed");
                    }
                }
                Err(e) => tracing::debug!(%authority, error = %e, "upgrade failed"),
            }
        });
        Response::new(empty())
    }

    /// The session's fingerprint, or `None` when the data server cannot be
    /// reached in time.
    async fn fingerprint(&self, session: &str) -> Option<Fingerprint> {
        let ttl = self.config.cache_ttl;
        if !ttl.is_zero() {
            let cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            if let Some((at, fp)) = cache.get(session) {
                if at.elapsed() < ttl {
                    return Some(fp.clone());
                }
            }
        }
        let fetched = tokio::time::timeout(self.config.dpi_timeout, self.fetch(session)).await;
        let fp = match fetched {
            Ok(Ok(fp)) => fp,
            Ok(Err(e)) => {
                tracing::warn!(error = %e, "fingerprint fetch failed; forwarding without it");
                return None;
            }
            Err(_) => {
                tracing::warn!("fingerprint fetch timed out; forwarding without it");
                return None;
            }
        };
        if !ttl.is_zero() {
            let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
            cache.retain(|_, (at, _)| at.elapsed() < ttl);
            cache.insert(session.to_string(), (Instant::now(), fp.clone()));
        }
        Some(fp)
    }

    async fn fetch(&self, session: &str) -> Result<Fingerprint, String> {
        let base = self.config.dpi.to_string();
        let uri: Uri = format!(
            "{}/getNetworks?session={session}",
            base.trim_end_matches('/')
        )
        .parse()
        .map_err(|e| format!("{e}"))?;
        let resp = self.dpi.get(uri).await.map_err(|e| error_chain(&e))?;
        if resp.status() != StatusCode::OK {
            return Err(format!("data server answered {}", resp.status()));
        }
        let body = resp
            .into_body()
            .collect()
            .await
            .map_err(|e| e.to_string())?
            .to_bytes();
        let text = std::str::from_utf8(&body).map_err(|e| e.to_string())?;
        Fingerprint::from_json(text, 0).map_err(|e| e.to_string())
    }
}

fn is_session_token(s: &str) -> bool {
    (16..=128).contains(&s.len())
        && s.bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
}

/// Absolute-form targets are used as given; origin-form ones are resolved
/// against `Host`.
fn target_uri(uri: &Uri, headers: &HeaderMap) -> Result<Uri, &'static str> {
    if uri.authority().is_some() {
        return match uri.scheme_str() {
            Some("http") => Ok(uri.clone()),
            _ => Err("only http:// targets are proxied; use CONNECT for TLS\n"),
        };
    }
    let host = headers
        .get(HOST)
        .and_then(|h| h.to_str().ok())
        .ok_or("request has neither an absolute URI nor a Host header\n")?;
    let path = uri.path_and_query().map(|p| p.as_str()).unwrap_or("/");
    format!("http://{host}{path}")
        .parse()
        .map_err(|_| "malformed Host header\n")
}

fn strip_hop_by_hop(headers: &mut HeaderMap) {
    let named: Vec<HeaderName> = headers
        .get_all(CONNECTION)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(','))
        .filter_map(|name| HeaderName::from_bytes(name.trim().as_bytes()).ok())
        .collect();
    for name in named {
        headers.remove(name);
    }
    for name in HOP_BY_HOP {
        headers.remove(*name);
    }
}

fn error_chain(e: &(dyn std::error::Error + 'static)) -> String {
    let mut out = e.to_string();
    let mut source = e.source();
    while let Some(s) = source {
        out.push_str(": ");
        out.push_str(&s.to_string());
        source = s.source();
    }
    out
}

fn empty() -> ProxyBody {
    Empty::new().map_err(|never| match never {}).boxed()
}

fn text_response(status: StatusCode, body: String) -> Response<ProxyBody> {
    let mut resp = Response::new(
        Full::new(Bytes::from(body))
            .map_err(|never| match never {})
            .boxed(),
    );
    *resp.status_mut() = status;
    resp.headers_mut().insert(
        CONTENT_TYPE,
        HeaderValue::from_static("text/plain; charset=utf-8"),
    );
    resp
}

/// Accepts connections until `shutdown` resolves. Connections already open
/// are left to finish on their own.
pub async fn serve(
    listener: TcpListener,
    proxy: Arc<Proxy>,
    shutdown: impl Future<Output = ()>,
) -> std::io::Result<()> {
    tokio::pin!(shutdown);
    loop {
        let stream = tokio::select! {
            accepted = listener.accept() => match accepted {
                Ok((stream, _)) => stream,
                Err(e) => {
                    tracing::warn!(error = %e, "accept failed");
                    tokio::time::sleep(Duration::from_millis(50)).await;
                    continue;
                }
            },
            () = &mut shutdown => return Ok(()),
        };
        let proxy = Arc::clone(&proxy);
        tokio::spawn(async move {
            let service = service_fn(move |req| Arc::clone(&proxy).handle(req));
            let conn = http1::Builder::new()
                .preserve_header_case(true)
                .title_case_headers(true)
                .serve_connection(TokioIo::new(stream), service)
                .with_upgrades();
            if let Err(e) = conn.await {
                tracing::debug!(error = %e, "connection ended with error");
            }
        });
    }
}
