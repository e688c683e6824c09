//! Scripted sessions replayed under virtual time with the mock backend.

use std::io::Write;
use std::time::{Duration, Instant};

use pacing_core::memory::Turn;
use pacing_core::session::{create_session, BackendKind, Backends, Phase, Session, SessionConfig, TurnOutput};
use pacing_core::wire::{ControlRecord, WireRecord};
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScriptEvent {
    User(String),
    /// Lets time pass to `at_ms` so idle check-ins due by then fire.
    Tick,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationScript {
    pub config: SessionConfig,
    pub events: Vec<(u64, ScriptEvent)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLine {
    config: Option<Value>,
    at_ms: Option<u64>,
    user_text: Option<String>,
    tick: Option<bool>,
}

/// Parses a script: an optional leading `{"config": {...}}` line, then
/// `{"at_ms": N, "user_text": "..."}` or `{"at_ms": N, "tick": true}` lines
/// with strictly increasing `at_ms`.
pub fn parse_script(text: &str) -> Result<SimulationScript, CliError> {
    let mut config = None;
    let mut events: Vec<(u64, ScriptEvent)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let bad = |message: String| CliError::Input(format!("script line {line_no}: {message}"));
        if raw.trim().is_empty() {
            continue;
        }
        let line: RawLine = serde_json::from_str(raw).map_err(|e| bad(e.to_string()))?;
        if let Some(cfg) = line.config {
            if config.is_some() || !events.is_empty() || line.at_ms.is_some() {
                return Err(bad("config must be the first line and stand alone".into()));
            }
            config = Some(serde_json::from_value::<SessionConfig>(cfg).map_err(|e| bad(e.to_string()))?);
            continue;
        }
        let at = line.at_ms.ok_or_else(|| bad("missing at_ms".into()))?;
        if let Some(&(prev, _)) = events.last() {
            if at <= prev {
                return Err(bad(format!("at_ms {at} does not increase (previous {prev})")));
            }
        }
        let ev = match (line.user_text, line.tick) {
            (Some(t), None) if !t.trim().is_empty() => ScriptEvent::User(t),
            (Some(_), None) => return Err(bad("empty user_text".into())),
            (None, Some(true)) => ScriptEvent::Tick,
            _ => return Err(bad("expected exactly one of user_text or tick: true".into())),
        };
        events.push((at, ev));
    }
    let config = config.unwrap_or_default();
    config.validate().map_err(|e| CliError::Input(format!("script config: {e}")))?;
    Ok(SimulationScript { config, events })
}

/// Wire lines with the session time each one is due at.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SimOutput {
    pub lines: Vec<(u64, String)>,
    pub transcript: Vec<Turn>,
}

impl SimOutput {
    pub fn ndjson(&self) -> String {
        self.lines.iter().map(|(_, l)| l.as_str()).collect()
    }
}

struct Runner {
    session: Session,
    now: u64,
    out: SimOutput,
}

impl Runner {
    fn emit(&mut self, turn: TurnOutput) {
        let start = turn.started_ms;
        self.out.lines.push((start, turn.header().to_line()));
        for e in &turn.plan.events {
            self.out.lines.push((start + e.at_ms(), WireRecord::Event(e.clone()).to_line()));
        }
        self.now = start + turn.plan.total_ms;
        self.out.lines.push((self.now, WireRecord::from(turn.terminator).to_line()));
        self.session.finish_emission(self.now);
    }

    fn run_idle_until(&mut self, t: u64) {
        let deadline = self.session.idle_deadline_ms();
        if self.session.phase() != Phase::Idle || self.session.proactive_sent() || deadline > t {
            return;
        }
        if let Some(turn) = self.session.tick_idle(deadline.max(self.now)) {
            self.emit(turn);
        }
    }
}

/// Runs the script with the mock backend. `seed` overrides the script's.
/// Messages that arrive while a reply is still being delivered are
/// rejected with a BUSY error record, as the gateway would.
pub fn simulate(script: &SimulationScript, seed: Option<u64>) -> Result<SimOutput, CliError> {
    let mut config = script.config.clone();
    if let Some(s) = seed {
        config.seed = s;
    }
    if config.backend != BackendKind::Mock {
        log::warn!("simulate always uses the mock backend");
        config.backend = BackendKind::Mock;
    }
    let session =
        create_session("simulation", config, Backends::mock(), 0).map_err(|e| CliError::Input(e.to_string()))?;
    let mut r = Runner { session, now: 0, out: SimOutput::default() };
    for (at, ev) in &script.events {
        r.run_idle_until(*at);
        match ev {
            ScriptEvent::Tick => r.now = r.now.max(*at),
            ScriptEvent::User(text) if *at < r.now => {
                let rec = ControlRecord::Error {
                    code: "BUSY".into(),
                    message: format!("message at {at} ms arrived while a reply was in flight: {text:?}"),
                };
                r.out.lines.push((*at, WireRecord::from(rec).to_line()));
            }
            ScriptEvent::User(text) => {
                r.now = *at;
                let turn = r.session.handle_user_message(text, *at).map_err(|e| CliError::Input(e.to_string()))?;
                r.emit(turn);
            }
        }
    }
    r.out.transcript = r.session.transcript().to_vec();
    Ok(r.out)
}

/// Prints each line to `w` when its time comes, scaled to wall time.
pub fn replay_realtime(out: &SimOutput, w: &mut dyn Write) -> std::io::Result<()> {
    let epoch = Instant::now();
    for (at, line) in &out.lines {
        let due = Duration::from_millis(*at);
        if let Some(wait) = due.checked_sub(epoch.elapsed()) {
            std::thread::sleep(wait);
        }
        w.write_all(line.as_bytes())?;
        w.flush()?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn script_validation() {
        assert!(parse_script("{\"at_ms\":5,\"user_text\":\"hi\"}\n{\"at_ms\":5,\"tick\":true}").is_err());
        assert!(parse_script("{\"at_ms\":5}").is_err());
        assert!(parse_script("{\"at_ms\":5,\"user_text\":\"hi\",\"tick\":true}").is_err());
        assert!(parse_script("{\"at_ms\":1,\"tick\":true}\n{\"config\":{}}").is_err());
        assert!(parse_script("{\"at_ms\":1,\"text\":\"hi\"}").is_err());
        let s = parse_script("{\"config\":{\"mode\":\"STATIC\"}}\n\n{\"at_ms\":0,\"user_text\":\"hi\"}\n").unwrap();
        assert_eq!(s.events, vec![(0, ScriptEvent::User("hi".into()))]);
        match parse_script("{\"at_ms\":3,\"user_text\":\"a\"}\n{\"at_ms\":2,\"user_text\":\"b\"}") {
            Err(CliError::Input(m)) => assert!(m.starts_with("script line 2"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn busy_message_is_reported() {
        let s = parse_script(
            "{\"at_ms\":0,\"user_text\":\"I'm so overwhelmed, I can't stop crying.\"}\n{\"at_ms\":10,\"user_text\":\"hello?\"}",
        )
        .unwrap();
        let out = simulate(&s, None).unwrap();
        assert!(out.ndjson().contains("\"code\":\"BUSY\""));
        assert_eq!(out.transcript.len(), 2);
    }
}
