use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::sync::Arc;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::Parser;
use spotex_proxy::{serve, Proxy, ProxyConfig};

#[derive(Parser)]
#[command(
    name = "spotex-proxy",
    version,
    about = "Forward proxy adding X-Network-Fingerprint"
)]
struct Cli {
    /// Port to listen on.
    #[arg(long)]
    listen: u16,
    #[arg(long, default_value_t = IpAddr::V4(Ipv4Addr::LOCALHOST))]
    bind: IpAddr,
    /// Data server base URL, e.g. http://127.0.0.1:8080
    #[arg(long)]
    dpi: String,
    /// Reuse fetched fingerprints for this long; 0 disables the cache.
    #[arg(long, default_value_t = 0)]
    cache_ttl_ms: u64,
    #[arg(long, default_value_t = 500)]
    dpi_timeout_ms: u64,
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let mut config = ProxyConfig::new(&cli.dpi)?;
    config.cache_ttl = Duration::from_millis(cli.cache_ttl_ms);
    config.dpi_timeout = Duration::from_millis(cli.dpi_timeout_ms);
    let addr = SocketAddr::new(cli.bind, cli.listen);
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    tracing::info!(%addr, dpi = %cli.dpi, "proxying");
    serve(listener, Arc::new(Proxy::new(config)), async {
        let _ = tokio::signal::ctrl_c().await;
    })
    .await?;
    Ok(())
}
