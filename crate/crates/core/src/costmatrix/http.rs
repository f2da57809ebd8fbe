//! Generic HTTP distance-matrix client.
//!
//! Requests look like
//! `{endpoint}?origins=lat,lon|lat,lon&destinations=...&mode=transit&departure_time=<unix>&key=<token>`
//! and the response follows the common distance-matrix JSON layout:
//! `{"status":"OK","rows":[{"elements":[{"status":"OK","distance":{"value":..},"duration":{"value":..}}]}]}`.
//! The element field names for distance and duration are configurable.

use std::time::{Duration, Instant};

use chrono::{FixedOffset, NaiveDateTime, TimeZone};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{CostCell, CostProvider, PartialMatrix};
use crate::error::{Error, Result};
use crate::geo::GeoPoint;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HttpProviderConfig {
    pub endpoint: String,
    /// Name of the environment variable holding the API key.
    pub token_env: String,
    pub max_origins: usize,
    pub max_destinations: usize,
    pub requests_per_second: f64,
    /// Requests allowed back to back before throttling starts.
    pub burst: u32,
    pub mode: String,
    /// Offset of the departure's local civil time from UTC.
    pub utc_offset_minutes: i32,
    pub distance_field: String,
    pub duration_field: String,
    pub timeout_s: u64,
}

impl Default for HttpProviderConfig {
    fn default() -> Self {
        HttpProviderConfig {
            endpoint: "https://maps.googleapis.com/maps/api/distancematrix/json".into(),
            token_env: "MHCLOC_DISTANCE_API_KEY".into(),
            max_origins: 10,
            max_destinations: 10,
            requests_per_second: 5.0,
            burst: 1,
            mode: "transit".into(),
            utc_offset_minutes: 180,
            distance_field: "distance".into(),
            duration_field: "duration".into(),
            timeout_s: 30,
        }
    }
}

impl HttpProviderConfig {
    pub fn validate(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.endpoint.is_empty() {
            v.push("costs.http.endpoint is empty".into());
        }
        if self.max_origins == 0 || self.max_destinations == 0 {
            v.push("costs.http batch sizes must be >= 1".into());
        }
        if !(self.requests_per_second.is_finite() && self.requests_per_second > 0.0) {
            v.push("costs.http.requests_per_second must be > 0".into());
        }
        if self.burst == 0 {
            v.push("costs.http.burst must be >= 1".into());
        }
        v
    }
}

/// Monotonic time source; swapped for a fake in tests.
pub trait Clock {
    fn now(&self) -> Duration;
    fn sleep(&mut self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    start: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        SystemClock { start: Instant::now() }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.start.elapsed()
    }
    fn sleep(&mut self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Token bucket: `burst` tokens, refilled at `rate` tokens per second.
#[derive(Debug, Clone)]
pub struct TokenBucket {
    rate: f64,
    capacity: f64,
    tokens: f64,
    last: Option<Duration>,
}

impl TokenBucket {
    pub fn new(rate: f64, burst: u32) -> Self {
        let capacity = f64::from(burst.max(1));
        TokenBucket {
            rate,
            capacity,
            tokens: capacity,
            last: None,
        }
    }

    /// Blocks (via `clock.sleep`) until a token is available, then takes it.
    pub fn acquire(&mut self, clock: &mut dyn Clock) {
        loop {
            let now = clock.now();
            if let Some(last) = self.last {
                let dt = now.saturating_sub(last).as_secs_f64();
                self.tokens = (self.tokens + dt * self.rate).min(self.capacity);
            }
            self.last = Some(now);
            if self.tokens >= 1.0 {
                self.tokens -= 1.0;
                return;
            }
            let wait = (1.0 - self.tokens) / self.rate;
            clock.sleep(Duration::from_secs_f64(wait));
        }
    }
}

pub trait Transport {
    fn get(&mut self, url: &str) -> Result<String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        UreqTransport {
            agent: ureq::AgentBuilder::new().timeout(timeout).build(),
        }
    }
}

impl Transport for UreqTransport {
    fn get(&mut self, url: &str) -> Result<String> {
        let resp = self.agent.get(url).call().map_err(|e| {
            // The URL carries the key; report the status only.
            match e {
                ureq::Error::Status(code, _) => Error::Provider(format!("HTTP status {code}")),
                ureq::Error::Transport(t) => Error::Provider(format!("transport error: {}", t.kind())),
            }
        })?;
        resp.into_string().map_err(|e| Error::Provider(format!("reading body: {e}")))
    }
}

pub struct HttpProvider<T: Transport, C: Clock> {
    cfg: HttpProviderConfig,
    token: String,
    transport: T,
    clock: C,
    bucket: TokenBucket,
}

impl HttpProvider<UreqTransport, SystemClock> {
    /// Reads the API key from `cfg.token_env`.
    pub fn from_env(cfg: HttpProviderConfig) -> Result<Self> {
        let token = std::env::var(&cfg.token_env)
            .map_err(|_| Error::validation(format!("environment variable {} is not set", cfg.token_env)))?;
        let transport = UreqTransport::new(Duration::from_secs(cfg.timeout_s));
        Self::new(cfg, token, transport, SystemClock::default())
    }
}

impl<T: Transport, C: Clock> HttpProvider<T, C> {
    pub fn new(cfg: HttpProviderConfig, token: String, transport: T, clock: C) -> Result<Self> {
        if let Some(issue) = cfg.validate().into_iter().next() {
            return Err(Error::Validation(issue));
        }
        let bucket = TokenBucket::new(cfg.requests_per_second, cfg.burst);
        Ok(HttpProvider {
            cfg,
            token,
            transport,
            clock,
            bucket,
        })
    }

    pub fn clock(&self) -> &C {
        &self.clock
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn encode_points(points: &[GeoPoint]) -> String {
        points
            .iter()
            .map(|p| format!("{},{}", p.lat, p.lon))
            .collect::<Vec<_>>()
            .join("%7C")
    }

    pub fn request_url(&self, origins: &[GeoPoint], destinations: &[GeoPoint], departure: NaiveDateTime) -> Result<String> {
        let offset = FixedOffset::east_opt(self.cfg.utc_offset_minutes * 60)
            .ok_or_else(|| Error::validation("utc offset out of range"))?;
        let unix = offset
            .from_local_datetime(&departure)
            .single()
            .ok_or_else(|| Error::validation("ambiguous departure time"))?
            .timestamp();
        Ok(format!(
            "{}?origins={}&destinations={}&mode={}&departure_time={}&key={}",
            self.cfg.endpoint,
            Self::encode_points(origins),
            Self::encode_points(destinations),
            self.cfg.mode,
            unix,
            self.token
        ))
    }

    fn parse_response(&self, body: &str, rows: usize, cols: usize) -> Result<PartialMatrix> {
        let doc: Value = serde_json::from_str(body).map_err(|e| Error::Provider(format!("invalid JSON: {e}")))?;
        if let Some(status) = doc.get("status").and_then(Value::as_str) {
            if status != "OK" {
                return Err(Error::Provider(format!("service status {status}")));
            }
        }
        let row_values = doc
            .get("rows")
            .and_then(Value::as_array)
            .ok_or_else(|| Error::Provider("response has no rows".into()))?;
        let mut out = vec![vec![None; cols]; rows];
        for (i, row) in row_values.iter().take(rows).enumerate() {
            let Some(elements) = row.get("elements").and_then(Value::as_array) else {
                continue;
            };
            for (j, el) in elements.iter().take(cols).enumerate() {
                let ok = el.get("status").and_then(Value::as_str).is_none_or(|s| s == "OK");
                let value = |field: &str| el.get(field).and_then(|f| f.get("value").or(Some(f))).and_then(Value::as_f64);
                if let (true, Some(d), Some(t)) = (ok, value(&self.cfg.distance_field), value(&self.cfg.duration_field)) {
                    out[i][j] = Some(CostCell {
                        distance_m: d,
                        duration_s: t,
                    });
                }
            }
        }
        Ok(out)
    }
}

impl<T: Transport, C: Clock> CostProvider for HttpProvider<T, C> {
    fn label(&self) -> String {
        format!("http({},mode={})", self.cfg.endpoint, self.cfg.mode)
    }

    fn max_block(&self) -> (usize, usize) {
        (self.cfg.max_origins, self.cfg.max_destinations)
    }

    fn query(&mut self, origins: &[GeoPoint], destinations: &[GeoPoint], departure: NaiveDateTime) -> Result<PartialMatrix> {
        let url = self.request_url(origins, destinations, departure)?;
        self.bucket.acquire(&mut self.clock);
        let body = self.transport.get(&url)?;
        self.parse_response(&body, origins.len(), destinations.len())
    }
}
