use std::net::{IpAddr, Ipv4Addr, SocketAddr};
use std::path::PathBuf;
use std::time::Duration;

use simexplore_core::ingest::DEFAULT_MAX_BYTES;

pub const DEFAULT_PORT: u16 = 8080;
pub const DEFAULT_TTL: Duration = Duration::from_secs(24 * 60 * 60);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub bind: IpAddr,
    pub port: u16,
    /// Largest accepted dataset payload, compressed or not.
    pub max_upload: usize,
    /// Idle time after which a session is dropped.
    pub session_ttl: Duration,
    pub max_sessions: usize,
    /// Sessions are mirrored here and reloaded on start when set.
    pub spill_dir: Option<PathBuf>,
    /// Command turning SVG on stdin into another format on stdout;
    /// `{format}` and `{dpi}` are substituted.
    pub converter: Option<String>,
    /// Web UI assets served under `/`. A placeholder page is served when
    /// unset.
    pub static_dir: Option<PathBuf>,
    pub fetch_timeout: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: IpAddr::V4(Ipv4Addr::LOCALHOST),
            port: DEFAULT_PORT,
            max_upload: DEFAULT_MAX_BYTES,
            session_ttl: DEFAULT_TTL,
            max_sessions: 64,
            spill_dir: None,
            converter: None,
            static_dir: None,
            fetch_timeout: Duration::from_secs(60),
        }
    }
}

impl ServiceConfig {
    pub fn addr(&self) -> SocketAddr {
        SocketAddr::new(self.bind, self.port)
    }
}
