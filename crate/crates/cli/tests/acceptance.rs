//! Acceptance gate. One PASS/FAIL line per criterion; exits nonzero if any
//! criterion fails.

use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use webrover_core::config::{ChannelSpec, Config};
use webrover_core::control_fw::{ControlFirmware, Motion};
use webrover_core::daps::{calibrate, decode_frame, Calibration, FrameDecoder, SampleStore};
use webrover_core::daq_fw::{frame_sample, Sample, FRAME_LEN};
use webrover_core::hw::adc::ideal_code;
use webrover_core::hw::compass::{bearing_byte, decode_bearing_byte, decode_pwm, encode_pwm};
use webrover_core::hw::{heading_error, AdcPga, Chassis, Gain, Geometry, Pose, SensorKind, ADC_MAX};
use webrover_core::scenario::{square_path_script, Scenario};
use webrover_core::sim::Simulator;
use webrover_core::simkernel::{BusId, SerialLink, TrafficDir, TrafficLog};
use webrover_service::{AppState, Speed};

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_time(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    ensure(took < limit, || format!("took {took:.2?}, limit {limit:?}"))
}

fn square_path() -> Verdict {
    let t0 = Instant::now();
    let scenario = Scenario::parse(&square_path_script()).map_err(|e| e.to_string())?;
    let store = Arc::new(RwLock::new(SampleStore::memory()));
    let mut sim = Simulator::with_store(Config::default(), store, TrafficLog::discard()).map_err(|e| e.to_string())?;
    let report = scenario.run_on(&mut sim).map_err(|e| e.to_string())?;
    within_time(t0, Duration::from_secs(5))?;

    let end = sim.estimate().pose;
    let d = end.distance_to(&Pose::default());
    let dh = heading_error(end.heading_deg, 0.0).abs();
    ensure(d <= 1e-6 && dh <= 0.05, || format!("final pose off by {d:e} m, {dh} deg"))?;
    let checks = sim.frame_checks();
    let worst = checks.iter().map(|c| c.estimated.distance_to(&c.truth)).fold(0.0, f64::max);
    ensure(worst <= 1e-6, || format!("frame error {worst:e} m"))?;
    ensure(report.passed(), || report.to_string())?;
    Ok(format!(
        "closure {d:.1e} m / {dh:.1e} deg, {} frames worst {worst:.1e} m, {:.2?}",
        checks.len(),
        t0.elapsed()
    ))
}

fn compass_round_trip() -> Verdict {
    let t0 = Instant::now();
    let (mut worst_pwm, mut worst_i2c) = (0.0_f64, 0.0_f64);
    for k in 0..3600 {
        let h = k as f64 * 0.1;
        worst_pwm = worst_pwm.max(heading_error(decode_pwm(encode_pwm(h)), h).abs());
        worst_i2c = worst_i2c.max(heading_error(decode_bearing_byte(bearing_byte(h)), h).abs());
    }
    within_time(t0, Duration::from_secs(1))?;
    ensure(worst_pwm <= 0.05, || format!("pwm error {worst_pwm}"))?;
    ensure(worst_i2c <= 360.0 / 256.0, || format!("register 1 error {worst_i2c}"))?;
    Ok(format!("pwm worst {worst_pwm:.1e} deg, register 1 worst {worst_i2c:.4} deg"))
}

fn adc_contract() -> Verdict {
    let t0 = Instant::now();
    let vref = 5.0;
    let adc_at = |g: Gain| {
        let mut a = AdcPga::new(vref);
        a.latch(g, 0, 1000);
        a
    };
    let mut worst = 0.0_f64;
    for g in Gain::ALL {
        let adc = adc_at(g);
        let mut prev = 0u16;
        for i in 0..10_000 {
            let v = vref * 1.1 * i as f64 / 9_999.0;
            let code = adc.convert(v);
            ensure(code >= prev, || format!("gain {} not monotone at {v} V", g.factor()))?;
            prev = code;
            let ideal = ideal_code(v, g, vref);
            if ideal <= ADC_MAX as f64 {
                worst = worst.max((code as f64 - ideal).abs());
            }
        }
    }
    ensure(worst <= 0.5, || format!("|code - ideal| reached {worst}"))?;
    let golden = [
        (adc_at(Gain::X1).convert(0.0), 0),
        (adc_at(Gain::X1).convert(2.5), 512),
        (adc_at(Gain::X4).convert(1.0), 818),
    ];
    for (got, want) in golden {
        ensure(got == want, || format!("golden {want} got {got}"))?;
    }
    within_time(t0, Duration::from_secs(1))?;
    Ok(format!("4 x 10000 points monotone, worst {worst:.3} LSB, goldens 0/512/818"))
}

fn drive_chassis(motion: Motion, steps: u64) -> Result<Chassis, String> {
    let mut fw = ControlFirmware::default();
    let mut link = SerialLink::new(0);
    let mut chassis = Chassis::new(Geometry::default(), Pose::default());
    fw.bounded_move(motion, steps, 0).map_err(|e| e.to_string())?;
    let mut now = 0;
    while !fw.is_idle() {
        let out = fw.command_loop_step(now, &mut link).map_err(|e| e.to_string())?;
        if let Some(b) = out.port_byte {
            chassis.stepper_apply(b);
        }
        now += 1000;
    }
    Ok(chassis)
}

fn stepper_odometry() -> Verdict {
    let g = Geometry::default();
    let fwd = drive_chassis(Motion::Forward, 200)?;
    let p = fwd.true_pose();
    ensure(fwd.left_steps() == g.steps_per_rev as i64, || "left wheel did not turn once".into())?;
    ensure(fwd.right_steps() == g.steps_per_rev as i64, || "right wheel did not turn once".into())?;
    let circumference = std::f64::consts::PI * g.wheel_diameter_m;
    ensure((p.y_m - 0.200).abs() <= 1e-9 && (circumference - 0.2).abs() <= 1e-9, || {
        format!("forward distance {} m", p.y_m)
    })?;
    let turn = drive_chassis(Motion::TurnRight, 100)?;
    let dh = turn.true_pose().heading_deg;
    ensure((dh - 90.0).abs() <= 1e-9, || format!("turn {dh} deg"))?;
    ensure(turn.true_pose().distance_to(&Pose::default()) <= 1e-9, || "spin translated".into())?;
    Ok(format!("200 pairs -> {:.12} m, 100 pairs -> {dh:.12} deg", p.y_m))
}

fn scheduler_cadence() -> Verdict {
    let t0 = Instant::now();
    let mut sim = Simulator::new(Config::default()).map_err(|e| e.to_string())?;
    // a little past the end so the conversions due at 10000 s complete
    sim.run_until(10_001_000_000).map_err(|e| e.to_string())?;
    within_time(t0, Duration::from_secs(10))?;

    let tick = sim.config().tick_us;
    let conv: Vec<_> = sim.conversions().into_iter().filter(|c| c.due_us <= 10_000_000_000).collect();
    for w in conv.windows(2) {
        ensure(w[1].start_us >= w[0].end_us, || format!("overlap {:?} / {:?}", w[0], w[1]))?;
    }
    let mut by_ch: BTreeMap<u8, Vec<_>> = BTreeMap::new();
    for c in &conv {
        by_ch.entry(c.channel).or_default().push(*c);
    }
    let mut worst_spacing = 0i64;
    for spec in &sim.config().channels {
        let interval = (spec.interval_s * 1e6).round() as u64;
        let list = by_ch.get(&spec.id).ok_or(format!("channel {} never converted", spec.id))?;
        let expected = 10_000_000_000 / interval + 1;
        ensure(list.len() as u64 == expected, || {
            format!("channel {} ran {} conversions, expected {expected}", spec.id, list.len())
        })?;
        for (k, c) in list.iter().enumerate() {
            ensure(c.due_us == k as u64 * interval, || format!("channel {} drifted at #{k}: {c:?}", spec.id))?;
        }
        for w in list.windows(2) {
            let dev = (w[1].start_us - w[0].start_us) as i64 - interval as i64;
            worst_spacing = worst_spacing.max(dev.abs());
        }
    }
    ensure(worst_spacing <= tick as i64, || format!("spacing off by {worst_spacing} us"))?;
    Ok(format!(
        "{} conversions, 0 overlaps, spacing dev {worst_spacing} us, no drift, {:.2?}",
        conv.len(),
        t0.elapsed()
    ))
}

fn frame_integrity() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut corpus = Vec::new();
    for _ in 0..1000 {
        let s = if rng.random_bool(0.25) {
            Sample { channel: 0, t_us: 0, gain: None, raw: rng.random_range(0..3600) }
        } else {
            Sample {
                channel: rng.random_range(1..8),
                t_us: 0,
                gain: Some(Gain::ALL[rng.random_range(0..4)]),
                raw: rng.random_range(0..=ADC_MAX),
            }
        };
        corpus.push(s);
    }
    let mut stream = FrameDecoder::new();
    let mut corruptions = 0u64;
    for s in &corpus {
        let f = frame_sample(s);
        let p = decode_frame(&f).map_err(|e| format!("{s:?}: {e}"))?;
        ensure(p.channel == s.channel && p.gain == s.gain && p.raw == s.raw, || format!("{s:?} -> {p:?}"))?;
        for b in &f {
            stream.push(*b);
        }
        for pos in 0..FRAME_LEN {
            for x in 1..=255u8 {
                let mut bad = f;
                bad[pos] ^= x;
                corruptions += 1;
                ensure(decode_frame(&bad).is_err(), || format!("undetected: {bad:02X?}"))?;
            }
        }
    }
    ensure(stream.accepted() == 1000 && stream.errors() == 0, || "stream decode mismatch".into())?;
    Ok(format!("1000 frames exact, {corruptions} single-byte corruptions all detected"))
}

fn calibration_ramp() -> Verdict {
    let mut channels = vec![ChannelSpec::compass(0, 10.0)];
    let mut temp = ChannelSpec::analog(1, SensorKind::Temperature, Gain::X4, 10.0, 20.0);
    temp.noise_sd_v = 0.0;
    channels.push(temp);
    let cfg = Config {
        sensor_script_inline: Some("0 1 20\n600 1 30\n".into()),
        channels,
        ..Config::default()
    };
    let script = cfg.physical_script().map_err(|e| e.to_string())?;
    let vref = cfg.vref_v;
    let mut sim = Simulator::new(cfg).map_err(|e| e.to_string())?;
    sim.run_until(601_000_000).map_err(|e| e.to_string())?;
    // records carry the host receive time, slightly after the conversion
    let recs = sim.store().read().unwrap().query(1, 0, 601_000_000);
    ensure(recs.len() == 61, || format!("{} samples", recs.len()))?;
    let bound = vref / ADC_MAX as f64 / 0.01 / 4.0;
    let mut worst = 0.0_f64;
    for r in &recs {
        let truth = script.value_at(1, r.t_us).ok_or("script gap")?;
        let again = calibrate(r.raw, Some(Gain::X4), &Calibration::Temperature { volts_per_degc: 0.01 }, vref);
        ensure(again == r.value, || "stored value is not the calibrated raw code".into())?;
        worst = worst.max((r.value - truth).abs());
    }
    ensure(worst <= bound, || format!("error {worst:.4} degC above bound {bound:.4}"))?;
    Ok(format!("{} samples, worst {worst:.4} degC, bound {bound:.4} degC", recs.len()))
}

async fn api_coherence_async() -> Verdict {
    let store = Arc::new(RwLock::new(SampleStore::memory()));
    let sim = Simulator::with_store(Config::default(), store, TrafficLog::in_memory()).map_err(|e| e.to_string())?;
    let state = AppState::new(sim);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.map_err(|e| e.to_string())?;
    let base = format!("http://{}", listener.local_addr().unwrap());
    let (stop_tx, stop_rx) = tokio::sync::oneshot::channel::<()>();
    let server = tokio::spawn(webrover_service::serve(listener, state.clone(), Speed::Max, async {
        let _ = stop_rx.await;
    }));
    let http = reqwest::Client::new();
    let err = |e: reqwest::Error| e.to_string();

    let get = |path: &str| http.get(format!("{base}{path}")).send();
    let pose0: Value = get("/api/pose").await.map_err(err)?.json().await.map_err(err)?;
    let y0 = pose0["y_m"].as_f64().ok_or("pose has no y_m")?;
    let r = http
        .post(format!("{base}/api/drive"))
        .json(&json!({"direction": "forward", "steps": 200}))
        .send()
        .await
        .map_err(err)?;
    ensure(r.status() == 202, || format!("drive answered {}", r.status()))?;
    let deadline = Instant::now() + Duration::from_secs(10);
    let mut dy = 0.0;
    while Instant::now() < deadline {
        let p: Value = get("/api/pose").await.map_err(err)?.json().await.map_err(err)?;
        dy = p["y_m"].as_f64().unwrap_or(0.0) - y0;
        if (dy - 0.2).abs() <= 1e-9 {
            break;
        }
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
    ensure((dy - 0.2).abs() <= 1e-9, || format!("pose advanced {dy} m"))?;

    // concurrent writers
    let mut tasks = Vec::new();
    for i in 0..32u64 {
        let http = http.clone();
        let url = format!("{base}/api/drive");
        tasks.push(tokio::spawn(async move {
            let dir = ["forward", "backward", "left", "right"][i as usize % 4];
            http.post(url).json(&json!({"direction": dir, "steps": 5000 + i})).send().await.map(|r| r.status())
        }));
    }
    for t in tasks {
        let status = t.await.map_err(|e| e.to_string())?.map_err(err)?;
        ensure(status == 202, || format!("concurrent drive answered {status}"))?;
    }

    // the rest of the surface, with nothing but an HTTP client
    for path in [
        "/",
        "/api/pose",
        "/api/footprint?limit=5",
        "/api/data/1",
        "/api/data/1?filter=median&window=3",
        "/api/data/0?bucket=60&stat=mean",
        "/api/status",
    ] {
        let r = get(path).await.map_err(err)?;
        ensure(r.status() == 200, || format!("GET {path} -> {}", r.status()))?;
    }
    let mut s = get("/api/stream").await.map_err(err)?;
    let mut buf = String::new();
    while !buf.contains("event: telemetry") {
        let chunk = s.chunk().await.map_err(err)?.ok_or("stream ended")?;
        buf.push_str(&String::from_utf8_lossy(&chunk));
    }
    drop(s);

    let _ = stop_tx.send(());
    server.await.map_err(|e| e.to_string())?.map_err(|e| e.to_string())?;

    let sent: Vec<u8> = state
        .lock()
        .traffic()
        .records()
        .iter()
        .filter(|r| r.bus == BusId::Serial && r.dir == TrafficDir::HostToMcu)
        .map(|r| r.byte)
        .collect();
    let text = String::from_utf8(sent).map_err(|e| e.to_string())?;
    let mut frames: Vec<&str> = text.split_terminator('\n').collect();
    ensure(frames.first() == Some(&"M3200"), || format!("first frame {:?}", frames.first()))?;
    frames.remove(0);
    let mut steps = Vec::new();
    for f in &frames {
        ensure(f.len() > 2 && f.starts_with('M'), || format!("interleaved bytes: {f:?}"))?;
        steps.push(f[2..].parse::<u64>().map_err(|_| format!("interleaved bytes: {f:?}"))?);
    }
    steps.sort();
    ensure(steps == (5000..5032).collect::<Vec<_>>(), || "concurrent frames lost or torn".into())?;
    Ok(format!("pose +{dy:.12} m, 32 concurrent drives intact, 9 endpoints answered"))
}

fn api_coherence() -> Verdict {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(api_coherence_async())
}

fn bus_log_for(seed: u64) -> Result<String, String> {
    let mut cfg = Config {
        seed,
        ..Config::default()
    };
    for c in &mut cfg.channels {
        c.noise_sd_v = 0.002;
    }
    let scenario = Scenario::parse(&format!("{}\n130 drive left 7\n", square_path_script())).map_err(|e| e.to_string())?;
    let store = Arc::new(RwLock::new(SampleStore::memory()));
    let mut sim = Simulator::with_store(cfg, store, TrafficLog::in_memory()).map_err(|e| e.to_string())?;
    scenario.run_on(&mut sim).map_err(|e| e.to_string())?;
    sim.run_until(190_000_000).map_err(|e| e.to_string())?;
    Ok(sim.traffic().render())
}

fn determinism() -> Verdict {
    let a = bus_log_for(7)?;
    let b = bus_log_for(7)?;
    ensure(a == b, || "two runs with the same seed differ".into())?;
    let c = bus_log_for(8)?;
    ensure(a != c, || "seed has no effect on the log".into())?;
    Ok(format!("{} lines byte-identical across runs", a.lines().count()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("square-path closure", square_path),
        ("compass round trips", compass_round_trip),
        ("adc contract", adc_contract),
        ("stepper odometry", stepper_odometry),
        ("scheduler exclusivity and cadence", scheduler_cadence),
        ("frame integrity", frame_integrity),
        ("end-to-end calibration", calibration_ramp),
        ("api coherence", api_coherence),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, run) in criteria {
        match run() {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
