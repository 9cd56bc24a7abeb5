//! HTTP front end: drive commands, pose, footprint, processed sensor data,
//! a server-sent event stream, and the cockpit assets at `/`.
//!
//! One simulator behind a mutex. The runner task is the only thing that
//! advances it; drive requests write their serial bytes under the same lock,
//! so two requests never interleave on the link.

use std::convert::Infallible;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast;
use tokio::sync::broadcast::error::RecvError;
use tower_http::services::ServeDir;
use webrover_core::daps::{aggregate, apply_filter, FilterKind, FilterSpec, Stat};
use webrover_core::drive::DriveRequest;
use webrover_core::sim::{Simulator, TelemetryEvent};

/// Ticks advanced per lock acquisition in max-speed mode.
const MAX_SPEED_CHUNK: u64 = 1000;
const REAL_PERIOD: Duration = Duration::from_millis(10);

const INDEX_HTML: &str = include_str!("index.html");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Speed {
    /// Simulated time follows the wall clock.
    #[default]
    Real,
    /// As fast as the CPU allows.
    Max,
}

impl FromStr for Speed {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "real" => Ok(Speed::Real),
            "max" => Ok(Speed::Max),
            other => Err(format!("unknown speed `{other}` (expected real or max)")),
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    sim: Arc<Mutex<Simulator>>,
    events: broadcast::Sender<TelemetryEvent>,
    running: Arc<AtomicBool>,
    stop: Arc<AtomicBool>,
    assets_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(sim: Simulator) -> Self {
        let backlog = sim.config().stream_backlog.max(1);
        let assets_dir = sim.config().assets_dir.clone();
        let (events, _) = broadcast::channel(backlog);
        Self {
            sim: Arc::new(Mutex::new(sim)),
            events,
            running: Arc::new(AtomicBool::new(false)),
            stop: Arc::new(AtomicBool::new(false)),
            assets_dir,
        }
    }

    pub fn lock(&self) -> MutexGuard<'_, Simulator> {
        self.sim.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn is_running(&self) -> bool {
        self.running.load(Ordering::SeqCst)
    }

    pub fn subscribe(&self) -> broadcast::Receiver<TelemetryEvent> {
        self.events.subscribe()
    }

    pub fn subscriber_count(&self) -> usize {
        self.events.receiver_count()
    }

    /// Asks the runner to return after its current chunk.
    pub fn request_stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    /// Advances to `t_us` and publishes the events produced on the way.
    fn advance_to(&self, t_us: u64) -> Result<(), String> {
        let mut sim = self.lock();
        sim.run_until(t_us).map_err(|e| e.to_string())?;
        // publish under the lock so /api/pose never runs ahead of the stream
        for ev in sim.drain_events() {
            let _ = self.events.send(ev);
        }
        Ok(())
    }

    /// Drives the simulator until [`AppState::request_stop`].
    pub async fn run(&self, speed: Speed) {
        {
            let mut sim = self.lock();
            sim.collect_events(true);
        }
        self.running.store(true, Ordering::SeqCst);
        let (tick_us, sim0) = {
            let sim = self.lock();
            (sim.clock().tick_us(), sim.now_us())
        };
        let wall0 = tokio::time::Instant::now();
        let mut ticker = tokio::time::interval(REAL_PERIOD);
        ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Skip);
        while !self.stop.load(Ordering::SeqCst) {
            let target = match speed {
                Speed::Real => {
                    ticker.tick().await;
                    sim0 + wall0.elapsed().as_micros() as u64
                }
                Speed::Max => {
                    tokio::task::yield_now().await;
                    self.lock().now_us() + MAX_SPEED_CHUNK * tick_us
                }
            };
            if let Err(e) = self.advance_to(target) {
                eprintln!("simulation stopped: {e}");
                break;
            }
        }
        self.running.store(false, Ordering::SeqCst);
    }

    /// Flushes the bus log and syncs the sample store.
    pub fn flush(&self) -> std::io::Result<()> {
        let mut sim = self.lock();
        sim.traffic_mut().flush()?;
        let store = sim.store().clone();
        let mut store = store.write().unwrap_or_else(|p| p.into_inner());
        store.sync()
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/api/drive", post(drive))
        .route("/api/pose", get(pose))
        .route("/api/footprint", get(footprint))
        .route("/api/data/{channel}", get(data))
        .route("/api/stream", get(stream))
        .route("/api/status", get(status));
    let app = match &state.assets_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(INDEX_HTML) })),
    };
    app.with_state(state)
}

fn error(code: StatusCode, msg: impl Into<String>) -> Response {
    (code, Json(json!({ "error": msg.into() }))).into_response()
}

async fn drive(State(st): State<AppState>, body: Bytes) -> Response {
    let req: DriveRequest = match serde_json::from_slice(&body) {
        Ok(r) => r,
        Err(e) => return error(StatusCode::BAD_REQUEST, format!("malformed body: {e}")),
    };
    if let Err(e) = req.validate() {
        return error(StatusCode::BAD_REQUEST, e.to_string());
    }
    if !st.is_running() {
        return error(StatusCode::SERVICE_UNAVAILABLE, "simulator not running");
    }
    let mut sim = st.lock();
    match sim.send_drive(&req) {
        Ok(()) => (
            StatusCode::ACCEPTED,
            Json(json!({ "accepted": true, "t_us": sim.now_us(), "wire": String::from_utf8_lossy(&req.to_wire()) })),
        )
            .into_response(),
        Err(e) => error(StatusCode::SERVICE_UNAVAILABLE, e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseResponse {
    pub x_m: f64,
    pub y_m: f64,
    pub heading_deg: f64,
    pub t_us: u64,
}

async fn pose(State(st): State<AppState>) -> Json<PoseResponse> {
    let est = st.lock().estimate();
    Json(PoseResponse {
        x_m: est.pose.x_m,
        y_m: est.pose.y_m,
        heading_deg: est.pose.heading_deg,
        t_us: est.updated_us,
    })
}

#[derive(Debug, Deserialize)]
struct FootprintQuery {
    limit: Option<usize>,
}

async fn footprint(State(st): State<AppState>, Query(q): Query<FootprintQuery>) -> Response {
    let limit = match q.limit {
        Some(0) => return error(StatusCode::BAD_REQUEST, "limit must be at least 1"),
        Some(n) => n,
        None => usize::MAX,
    };
    Json(st.lock().footprint(limit)).into_response()
}

#[derive(Debug, Deserialize)]
struct DataQuery {
    from: Option<u64>,
    to: Option<u64>,
    filter: Option<String>,
    window: Option<usize>,
    /// Seconds.
    bucket: Option<f64>,
    stat: Option<String>,
}

async fn data(State(st): State<AppState>, Path(channel): Path<u8>, Query(q): Query<DataQuery>) -> Response {
    let from = q.from.unwrap_or(0);
    let to = q.to.unwrap_or(u64::MAX);
    if from > to {
        return error(StatusCode::BAD_REQUEST, format!("from {from} is after to {to}"));
    }
    let filter = match &q.filter {
        None => None,
        Some(name) => {
            let spec = FilterKind::from_str(name).and_then(|k| FilterSpec::new(k, q.window.unwrap_or(3)));
            match spec {
                Ok(s) => Some(s),
                Err(e) => return error(StatusCode::BAD_REQUEST, e),
            }
        }
    };
    let bucket_us = match q.bucket {
        None => None,
        Some(b) if b.is_finite() && b > 0.0 && (b * 1e6).round() >= 1.0 => Some((b * 1e6).round() as u64),
        Some(b) => return error(StatusCode::BAD_REQUEST, format!("bad bucket {b}")),
    };
    let stat_name = q.stat.as_deref().unwrap_or("mean");
    let stat = match Stat::from_str(stat_name) {
        Ok(s) => s,
        Err(e) => return error(StatusCode::BAD_REQUEST, e),
    };

    let mut series = {
        let sim = st.lock();
        if !sim.config().channels.iter().any(|c| c.id == channel) {
            return error(StatusCode::NOT_FOUND, format!("unknown channel {channel}"));
        }
        sim.daps().series(channel, from, to)
    };
    if let Some(spec) = filter {
        series = apply_filter(&series, spec);
    }
    match bucket_us {
        None => Json(series).into_response(),
        Some(bucket_us) => Json(json!({
            "channel": series.channel,
            "unit": series.unit,
            "bucket_us": bucket_us,
            "stat": stat_name,
            "rows": aggregate(&series.points, bucket_us, stat),
        }))
        .into_response(),
    }
}

async fn status(State(st): State<AppState>) -> Json<serde_json::Value> {
    let sim = st.lock();
    Json(json!({
        "running": st.is_running(),
        "t_us": sim.now_us(),
        "stats": sim.stats(),
        "subscribers": st.events.receiver_count(),
    }))
}

async fn stream(State(st): State<AppState>) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    Sse::new(event_stream(st.subscribe())).keep_alive(KeepAlive::default())
}

/// `telemetry` events until the subscriber falls more than the backlog
/// behind; then one `overflow` event and the stream ends.
fn event_stream(rx: broadcast::Receiver<TelemetryEvent>) -> impl Stream<Item = Result<Event, Infallible>> {
    futures::stream::unfold(Some(rx), |rx| async move {
        let mut rx = rx?;
        match rx.recv().await {
            Ok(ev) => {
                let data = serde_json::to_string(&ev).unwrap_or_default();
                Some((Ok(Event::default().event("telemetry").data(data)), Some(rx)))
            }
            Err(RecvError::Lagged(n)) => {
                let data = json!({ "dropped": n }).to_string();
                Some((Ok(Event::default().event("overflow").data(data)), None))
            }
            Err(RecvError::Closed) => None,
        }
    })
}

/// Runs the simulator and serves `listener` until `shutdown` resolves, then
/// stops the runner and flushes persistence.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: AppState,
    speed: Speed,
    shutdown: impl std::future::Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    let runner = {
        let st = state.clone();
        tokio::spawn(async move { st.run(speed).await })
    };
    let app = router(state.clone());
    let result = axum::serve(listener, app).with_graceful_shutdown(shutdown).await;
    state.request_stop();
    let _ = runner.await;
    state.flush()?;
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use futures::StreamExt;
    use webrover_core::config::Config;

    #[test]
    fn speed_parse() {
        assert_eq!("max".parse::<Speed>(), Ok(Speed::Max));
        assert_eq!("real".parse::<Speed>(), Ok(Speed::Real));
        assert!("fast".parse::<Speed>().is_err());
    }

    #[tokio::test]
    async fn slow_subscriber_gets_overflow_then_eof() {
        let cfg = Config {
            stream_backlog: 2,
            ..Config::default()
        };
        let mut sim = Simulator::new(cfg).unwrap();
        sim.collect_events(true);
        let st = AppState::new(sim);
        let rx = st.subscribe();
        st.advance_to(1_000_000).unwrap();
        let items: Vec<_> = event_stream(rx).collect().await;
        assert_eq!(items.len(), 1);
        let text = format!("{:?}", items[0].as_ref().unwrap());
        assert!(text.contains("overflow"), "{text}");
    }

    #[tokio::test]
    async fn closed_channel_ends_stream() {
        let (tx, rx) = broadcast::channel::<TelemetryEvent>(4);
        drop(tx);
        assert_eq!(event_stream(rx).count().await, 0);
    }
}
