//! Timed command/assertion scripts run headless at full speed.
//!
//! ```text
//! # comment
//! 0    drive forward 1000
//! 11   drive right 100
//! 5    set 1 30.5
//! 52   assert pose 0 0 0 tol 1e-6 htol 0.05
//! 52   assert truth tol 1e-6
//! 52   assert frames tol 1e-6
//! ```
//!
//! `assert truth` compares the estimate to the chassis now; `assert frames`
//! checks every feedback frame seen so far. `htol` defaults to `tol`.

use std::fmt;
use std::path::Path;

use crate::config::Config;
use crate::drive::{DriveDirection, DriveRequest};
use crate::hw::{heading_error, Pose};
use crate::sim::{SimError, Simulator};
use crate::simkernel::TrafficLog;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("line {line}: {msg}")]
pub struct ScenarioParseError {
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Directive {
    Drive(DriveRequest),
    Set { channel: u8, value: f64 },
    AssertPose { x_m: f64, y_m: f64, heading_deg: f64, tol_m: f64, tol_deg: f64 },
    AssertTruth { tol_m: f64 },
    AssertFrames { tol_m: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: usize,
    pub t_us: u64,
    pub text: String,
    pub directive: Directive,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub steps: Vec<Step>,
}

fn num<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T, String> {
    let tok = tok.ok_or_else(|| format!("missing {what}"))?;
    tok.parse().map_err(|_| format!("bad {what} `{tok}`"))
}

fn tolerances(toks: &[&str]) -> Result<(f64, f64), String> {
    let (mut tol, mut htol) = (None, None);
    let mut it = toks.iter();
    while let Some(key) = it.next() {
        let v: f64 = num(it.next().copied(), key)?;
        if v.is_nan() || v < 0.0 {
            return Err(format!("{key} must be >= 0"));
        }
        match *key {
            "tol" => tol = Some(v),
            "htol" => htol = Some(v),
            other => return Err(format!("unknown option `{other}`")),
        }
    }
    let tol = tol.ok_or("missing tol")?;
    Ok((tol, htol.unwrap_or(tol)))
}

fn parse_directive(toks: &[&str]) -> Result<Directive, String> {
    match toks {
        ["drive", dir, rest @ ..] => {
            let direction: DriveDirection = dir.parse().map_err(|e| format!("{e}"))?;
            let steps = match rest {
                [] => None,
                [n] => Some(num(Some(n), "steps")?),
                _ => return Err("too many arguments to drive".into()),
            };
            DriveRequest::new(direction, steps)
                .map(Directive::Drive)
                .map_err(|e| e.to_string())
        }
        ["set", ch, v] => Ok(Directive::Set {
            channel: num(Some(ch), "channel")?,
            value: num(Some(v), "value")?,
        }),
        ["assert", "pose", x, y, h, rest @ ..] => {
            let (tol_m, tol_deg) = tolerances(rest)?;
            Ok(Directive::AssertPose {
                x_m: num(Some(x), "x")?,
                y_m: num(Some(y), "y")?,
                heading_deg: num(Some(h), "heading")?,
                tol_m,
                tol_deg,
            })
        }
        ["assert", "truth", rest @ ..] => Ok(Directive::AssertTruth { tol_m: tolerances(rest)?.0 }),
        ["assert", "frames", rest @ ..] => Ok(Directive::AssertFrames { tol_m: tolerances(rest)?.0 }),
        [other, ..] => Err(format!("unknown directive `{other}`")),
        [] => Err("missing directive".into()),
    }
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioParseError> {
        let mut steps = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let toks: Vec<&str> = body.split_whitespace().collect();
            let err = |msg: String| ScenarioParseError { line, msg };
            let t_s: f64 = num(Some(toks[0]), "time").map_err(err)?;
            if !t_s.is_finite() || t_s < 0.0 {
                return Err(err(format!("bad time `{}`", toks[0])));
            }
            let directive = parse_directive(&toks[1..]).map_err(err)?;
            steps.push(Step {
                line,
                t_us: (t_s * 1e6).round() as u64,
                text: body.to_string(),
                directive,
            });
        }
        // stable: same-time steps keep file order
        steps.sort_by_key(|s| s.t_us);
        Ok(Self { steps })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioParseError> {
        let text = std::fs::read_to_string(path.as_ref()).map_err(|e| ScenarioParseError {
            line: 0,
            msg: format!("{}: {e}", path.as_ref().display()),
        })?;
        Self::parse(&text)
    }

    pub fn assertions(&self) -> usize {
        self.steps
            .iter()
            .filter(|s| !matches!(s.directive, Directive::Drive(_) | Directive::Set { .. }))
            .count()
    }

    /// Runs on a fresh simulator with an in-memory traffic log.
    pub fn run(&self, config: Config) -> Result<ScenarioReport, SimError> {
        let store = std::sync::Arc::new(std::sync::RwLock::new(crate::daps::SampleStore::memory()));
        let mut sim = Simulator::with_store(config, store, TrafficLog::in_memory())?;
        self.run_on(&mut sim)
    }

    pub fn run_on(&self, sim: &mut Simulator) -> Result<ScenarioReport, SimError> {
        sim.record_frame_checks(true);
        let t0 = sim.now_us();
        let mut results = Vec::new();
        for step in &self.steps {
            sim.run_until(t0 + step.t_us)?;
            let outcome = match &step.directive {
                Directive::Drive(req) => {
                    sim.send_drive(req)?;
                    continue;
                }
                Directive::Set { channel, value } => {
                    sim.set_quantity(*channel, *value);
                    continue;
                }
                Directive::AssertPose { x_m, y_m, heading_deg, tol_m, tol_deg } => {
                    let want = Pose::new(*x_m, *y_m, *heading_deg);
                    let got = sim.estimate().pose;
                    let d = got.distance_to(&want);
                    let dh = heading_error(got.heading_deg, want.heading_deg).abs();
                    (
                        d <= *tol_m && dh <= *tol_deg,
                        format!(
                            "estimate ({:.9}, {:.9}, {:.4}) off by {d:.3e} m, {dh:.3e} deg",
                            got.x_m, got.y_m, got.heading_deg
                        ),
                    )
                }
                Directive::AssertTruth { tol_m } => {
                    let d = sim.estimate().pose.distance_to(&sim.true_pose());
                    (d <= *tol_m, format!("estimate vs truth {d:.3e} m"))
                }
                Directive::AssertFrames { tol_m } => {
                    let checks = sim.frame_checks();
                    let worst = checks
                        .iter()
                        .map(|c| c.estimated.distance_to(&c.truth))
                        .fold(0.0_f64, f64::max);
                    (
                        worst <= *tol_m && !checks.is_empty(),
                        format!("{} frames, worst {worst:.3e} m", checks.len()),
                    )
                }
            };
            results.push(AssertionResult {
                line: step.line,
                text: step.text.clone(),
                passed: outcome.0,
                detail: outcome.1,
            });
        }
        Ok(ScenarioReport {
            results,
            end_us: sim.now_us(),
            final_pose: sim.estimate().pose,
            true_pose: sim.true_pose(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssertionResult {
    pub line: usize,
    pub text: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub results: Vec<AssertionResult>,
    pub end_us: u64,
    pub final_pose: Pose,
    pub true_pose: Pose,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn failures(&self) -> usize {
        self.results.iter().filter(|r| !r.passed).count()
    }
}

impl fmt::Display for ScenarioReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            writeln!(f, "{tag} line {}: {} [{}]", r.line, r.text, r.detail)?;
        }
        write!(
            f,
            "{} assertions, {} failed, end t={} us",
            self.results.len(),
            self.failures(),
            self.end_us
        )
    }
}

/// Four legs of `forward 1000` + `right 100` with idle gaps between them.
pub fn square_path_script() -> String {
    let mut s = String::from("# square path, 0.2 m per wheel revolution\n");
    for leg in 0..4 {
        let t = leg * 13;
        s.push_str(&format!("{t} drive forward 1000\n{} drive right 100\n", t + 11));
    }
    s.push_str("52 assert pose 0 0 0 tol 1e-6 htol 0.05\n");
    s.push_str("52 assert truth tol 1e-6\n");
    s.push_str("52 assert frames tol 1e-6\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_script_passes() {
        let s = Scenario::parse("# nothing\n\n").unwrap();
        let r = s.run(Config::default()).unwrap();
        assert!(r.passed());
        assert_eq!(r.results.len(), 0);
    }

    #[test]
    fn unknown_directive_names_line() {
        let e = Scenario::parse("0 drive forward 10\n\n1 jump 3\n").unwrap_err();
        assert_eq!(e.line, 3);
        assert!(e.msg.contains("jump"));
    }

    #[test]
    fn bad_arguments_rejected() {
        assert!(Scenario::parse("0 drive forward 0").is_err());
        assert!(Scenario::parse("0 drive stop 5").is_err());
        assert!(Scenario::parse("0 assert pose 0 0 0").is_err());
        assert!(Scenario::parse("-1 drive stop").is_err());
        assert!(Scenario::parse("x drive stop").is_err());
    }

    #[test]
    fn forward_200_assertion() {
        let s = Scenario::parse("0 drive forward 200\n3 assert pose 0 0.2 0 tol 1e-6\n").unwrap();
        let r = s.run(Config::default()).unwrap();
        assert!(r.passed(), "{r}");
    }

    #[test]
    fn wrong_assertion_fails_with_line() {
        let s = Scenario::parse("0 drive forward 200\n\n3 assert pose 0 0.3 0 tol 1e-6\n").unwrap();
        let r = s.run(Config::default()).unwrap();
        assert!(!r.passed());
        assert_eq!(r.results[0].line, 3);
        assert!(r.to_string().contains("FAIL line 3"));
    }

    #[test]
    fn square_path_closes() {
        let s = Scenario::parse(&square_path_script()).unwrap();
        assert_eq!(s.assertions(), 3);
        let r = s.run(Config::default()).unwrap();
        assert!(r.passed(), "{r}");
    }
}
