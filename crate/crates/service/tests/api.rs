use std::sync::{Arc, RwLock};
use std::time::Duration;

use futures::StreamExt;
use serde_json::{json, Value};
use webrover_core::config::Config;
use webrover_core::daps::{Record, SampleStore};
use webrover_core::sim::{Simulator, TelemetryEvent};
use webrover_core::simkernel::{BusId, TrafficDir, TrafficLog};
use webrover_service::{router, AppState, PoseResponse, Speed};

struct Server {
    base: String,
    state: AppState,
    client: reqwest::Client,
}

async fn start(sim: Simulator, speed: Option<Speed>) -> Server {
    let state = AppState::new(sim);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let app = router(state.clone());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    if let Some(speed) = speed {
        let st = state.clone();
        tokio::spawn(async move { st.run(speed).await });
        while !state.is_running() {
            tokio::time::sleep(Duration::from_millis(1)).await;
        }
    }
    Server {
        base,
        state,
        client: reqwest::Client::new(),
    }
}

fn sim_with_log() -> Simulator {
    let store = Arc::new(RwLock::new(SampleStore::memory()));
    Simulator::with_store(Config::default(), store, TrafficLog::in_memory()).unwrap()
}

impl Server {
    async fn get(&self, path: &str) -> reqwest::Response {
        self.client.get(format!("{}{path}", self.base)).send().await.unwrap()
    }

    async fn post(&self, body: Value) -> reqwest::Response {
        self.client
            .post(format!("{}/api/drive", self.base))
            .json(&body)
            .send()
            .await
            .unwrap()
    }

    async fn pose(&self) -> PoseResponse {
        self.get("/api/pose").await.json().await.unwrap()
    }

    /// Waits until the control MCU has gone idle and a frame reported it.
    async fn settle(&self) {
        for _ in 0..2000 {
            let (idle, t) = {
                let sim = self.state.lock();
                (sim.control().is_idle(), sim.now_us())
            };
            if idle {
                let target = t + 300_000;
                while self.state.lock().now_us() < target {
                    tokio::time::sleep(Duration::from_millis(2)).await;
                }
                return;
            }
            tokio::time::sleep(Duration::from_millis(2)).await;
        }
        panic!("motion never finished");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn pose_at_start() {
    let s = start(Simulator::new(Config::default()).unwrap(), None).await;
    let p = s.pose().await;
    assert_eq!(
        p,
        PoseResponse {
            x_m: 0.0,
            y_m: 0.0,
            heading_deg: 0.0,
            t_us: 0
        }
    );
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn drive_rejected_when_not_running() {
    let s = start(Simulator::new(Config::default()).unwrap(), None).await;
    let r = s.post(json!({"direction": "forward", "steps": 200})).await;
    assert_eq!(r.status(), 503);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn bad_drive_bodies() {
    let s = start(Simulator::new(Config::default()).unwrap(), Some(Speed::Max)).await;
    for body in [
        json!({"direction": "forward", "steps": 0}),
        json!({"direction": "stop", "steps": 3}),
        json!({"direction": "sideways"}),
        json!({"steps": 3}),
    ] {
        let r = s.post(body.clone()).await;
        assert_eq!(r.status(), 400, "{body}");
    }
    let r = s
        .client
        .post(format!("{}/api/drive", s.base))
        .body("not json")
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 400);
    s.state.request_stop();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn forward_then_right_through_api() {
    let s = start(Simulator::new(Config::default()).unwrap(), Some(Speed::Max)).await;
    let r = s.post(json!({"direction": "forward", "steps": 200})).await;
    assert_eq!(r.status(), 202);
    s.settle().await;
    let p = s.pose().await;
    assert!((p.y_m - 0.200).abs() < 1e-9, "{p:?}");
    assert!(p.x_m.abs() < 1e-9);

    s.post(json!({"direction": "right", "steps": 100})).await;
    s.settle().await;
    let p = s.pose().await;
    assert!((p.heading_deg - 90.0).abs() < 1e-9, "{p:?}");
    s.state.request_stop();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn stop_halts_motion() {
    let s = start(Simulator::new(Config::default()).unwrap(), Some(Speed::Max)).await;
    s.post(json!({"direction": "forward"})).await;
    tokio::time::sleep(Duration::from_millis(20)).await;
    assert_eq!(s.post(json!({"direction": "stop"})).await.status(), 202);
    s.settle().await;
    let a = s.state.lock().chassis().left_steps();
    tokio::time::sleep(Duration::from_millis(20)).await;
    assert_eq!(s.state.lock().chassis().left_steps(), a);
    s.state.request_stop();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_drives_never_interleave() {
    let s = Arc::new(start(sim_with_log(), Some(Speed::Max)).await);
    let mut tasks = Vec::new();
    for i in 0..40u64 {
        let s = s.clone();
        tasks.push(tokio::spawn(async move {
            let dir = ["forward", "backward", "left", "right"][i as usize % 4];
            s.post(json!({"direction": dir, "steps": 1000 + i})).await.status()
        }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), 202);
    }
    s.state.request_stop();
    let sent: Vec<u8> = s
        .state
        .lock()
        .traffic()
        .records()
        .iter()
        .filter(|r| r.bus == BusId::Serial && r.dir == TrafficDir::HostToMcu)
        .map(|r| r.byte)
        .collect();
    let text = String::from_utf8(sent).unwrap();
    let mut steps: Vec<u64> = text
        .split_terminator('\n')
        .map(|frame| {
            assert!(frame.len() >= 3 && frame.starts_with('M'), "torn frame {frame:?}");
            frame[2..].parse().unwrap()
        })
        .collect();
    steps.sort();
    assert_eq!(steps, (1000..1040).collect::<Vec<_>>());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn footprint_limits() {
    let s = start(Simulator::new(Config::default()).unwrap(), Some(Speed::Max)).await;
    tokio::time::sleep(Duration::from_millis(50)).await;
    assert_eq!(s.get("/api/footprint?limit=0").await.status(), 400);
    let one: Vec<Value> = s.get("/api/footprint?limit=1").await.json().await.unwrap();
    assert_eq!(one.len(), 1);
    let all: Vec<Value> = s.get("/api/footprint?limit=100000000").await.json().await.unwrap();
    assert!(all.len() > 1);
    let ts: Vec<u64> = all.iter().map(|p| p["t_us"].as_u64().unwrap()).collect();
    assert!(ts.windows(2).all(|w| w[0] < w[1]));
    s.state.request_stop();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn data_queries() {
    let store = Arc::new(RwLock::new(SampleStore::memory()));
    {
        let mut st = store.write().unwrap();
        for (i, v) in [1.0, 2.0, 3.0, 4.0, 5.0].into_iter().enumerate() {
            st.persist(Record {
                t_us: (i as u64 + 1) * 60_000_000,
                channel: 1,
                gain: 4,
                raw: 0,
                value: v,
            })
            .unwrap();
        }
    }
    let sim = Simulator::with_store(Config::default(), store, TrafficLog::discard()).unwrap();
    let s = start(sim, None).await;

    let raw: Value = s.get("/api/data/1?from=0&to=300000000").await.json().await.unwrap();
    let vals: Vec<f64> = raw["points"].as_array().unwrap().iter().map(|p| p["value"].as_f64().unwrap()).collect();
    assert_eq!(vals, [1.0, 2.0, 3.0, 4.0, 5.0]);
    assert_eq!(raw["unit"], "°C");

    let ma: Value = s
        .get("/api/data/1?to=300000000&filter=moving_average&window=3")
        .await
        .json()
        .await
        .unwrap();
    let vals: Vec<f64> = ma["points"].as_array().unwrap().iter().map(|p| p["value"].as_f64().unwrap()).collect();
    assert_eq!(vals, [1.0, 1.5, 2.0, 3.0, 4.0]);

    let agg: Value = s
        .get("/api/data/1?to=300000000&bucket=120&stat=mean")
        .await
        .json()
        .await
        .unwrap();
    let rows = agg["rows"].as_array().unwrap();
    // buckets [0,120) [120,240) [240,360) seconds
    let means: Vec<f64> = rows.iter().map(|r| r["value"].as_f64().unwrap()).collect();
    assert_eq!(means, [1.0, 2.5, 4.5]);

    assert_eq!(s.get("/api/data/9").await.status(), 404);
    assert_eq!(s.get("/api/data/1?from=10&to=5").await.status(), 400);
    assert_eq!(s.get("/api/data/1?filter=bogus").await.status(), 400);
    assert_eq!(s.get("/api/data/1?filter=median&window=0").await.status(), 400);
    assert_eq!(s.get("/api/data/1?bucket=0").await.status(), 400);
    assert_eq!(s.get("/api/data/1?stat=mode&bucket=1").await.status(), 400);
    assert_eq!(s.get("/api/data/1?from=abc").await.status(), 400);
}

async fn read_events(s: &Server, n: usize) -> Vec<TelemetryEvent> {
    let resp = s.get("/api/stream").await;
    assert_eq!(resp.status(), 200);
    let mut body = resp.bytes_stream();
    let mut buf = String::new();
    let mut out = Vec::new();
    while out.len() < n {
        let chunk = body.next().await.unwrap().unwrap();
        buf.push_str(std::str::from_utf8(&chunk).unwrap());
        while let Some(end) = buf.find("\n\n") {
            let block: String = buf.drain(..end + 2).collect();
            if block.contains("event: telemetry") {
                let data = block.lines().find_map(|l| l.strip_prefix("data: ")).unwrap();
                out.push(serde_json::from_str(data).unwrap());
            }
        }
    }
    out.truncate(n);
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn stream_is_broadcast_in_order() {
    let s = Arc::new(start(Simulator::new(Config::default()).unwrap(), None).await);
    let a = {
        let s = s.clone();
        tokio::spawn(async move { read_events(&s, 30).await })
    };
    let b = {
        let s = s.clone();
        tokio::spawn(async move { read_events(&s, 30).await })
    };
    while s.state.subscriber_count() < 2 {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let st = s.state.clone();
    tokio::spawn(async move { st.run(Speed::Real).await });
    let (a, b) = (a.await.unwrap(), b.await.unwrap());
    assert_eq!(a, b);
    assert!(a.windows(2).all(|w| w[0].t_us <= w[1].t_us && w[0].seq + 1 == w[1].seq));
    // /api/pose is the snapshot behind the newest event
    s.state.request_stop();
    while s.state.is_running() {
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    let latest = s.state.lock().latest_event().cloned().unwrap();
    let p = s.pose().await;
    assert_eq!((p.x_m, p.y_m, p.heading_deg), (latest.pose.x_m, latest.pose.y_m, latest.pose.heading_deg));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn index_served() {
    let s = start(Simulator::new(Config::default()).unwrap(), None).await;
    let r = s.get("/").await;
    assert_eq!(r.status(), 200);
    assert!(r.text().await.unwrap().contains("/api/pose"));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn assets_dir_served_at_root() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("index.html"), "<p>cockpit</p>").unwrap();
    let cfg = Config {
        assets_dir: Some(dir.path().to_path_buf()),
        ..Config::default()
    };
    let s = start(Simulator::new(cfg).unwrap(), None).await;
    assert_eq!(s.get("/").await.text().await.unwrap(), "<p>cockpit</p>");
    assert_eq!(s.get("/api/pose").await.status(), 200);
}
