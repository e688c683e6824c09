//! Per-session orchestration: classify, build context, generate, plan, and
//! the idle check-in timer.

use std::sync::Arc;

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::{Classifier, ClassifierContext, RuleClassifier};
use crate::generator::{Generator, GeneratorRequest, MockGenerator, Purpose};
use crate::memory::{
    build_context, Budget, CharQuarterEstimator, ContextWindow, ExtractiveSummarizer, Summarizer, TokenEstimator, Turn,
    TurnLabel, DEFAULT_VERBATIM_TAIL,
};
use crate::prompts::Persona;
use crate::scheduler::{EmissionEvent, EmissionPlan, PacingMode, PausePolicy, Planner};
use crate::strategy::{StrategyTable, TableDocument, STATUS_THINKING};
use crate::wire::{ControlRecord, TurnOrigin, WireRecord};

pub const DEFAULT_IDLE_TIMEOUT_MS: u64 = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BackendKind {
    #[default]
    Mock,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub mode: PacingMode,
    pub persona: Persona,
    pub seed: u64,
    pub idle_timeout_ms: u64,
    pub token_budget: usize,
    pub reply_reservation: usize,
    pub verbatim_tail: usize,
    pub backend: BackendKind,
    /// Replaces the canonical strategy table for this session.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy_table: Option<TableDocument>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pause_policy: Option<PausePolicy>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        SessionConfig {
            mode: PacingMode::ContextAware,
            persona: Persona::Generic,
            seed: 0,
            idle_timeout_ms: DEFAULT_IDLE_TIMEOUT_MS,
            token_budget: 4096,
            reply_reservation: 512,
            verbatim_tail: DEFAULT_VERBATIM_TAIL,
            backend: BackendKind::Mock,
            strategy_table: None,
            pause_policy: None,
        }
    }
}

impl SessionConfig {
    pub fn validate(&self) -> Result<(), SessionError> {
        let bad = |m: &str| Err(SessionError::InvalidConfig(m.to_string()));
        if self.idle_timeout_ms == 0 {
            return bad("idle_timeout_ms must be positive");
        }
        if self.reply_reservation == 0 || self.token_budget <= self.reply_reservation {
            return bad("token_budget must exceed reply_reservation > 0");
        }
        if self.verbatim_tail == 0 {
            return bad("verbatim_tail must be positive");
        }
        if let Some(p) = &self.pause_policy {
            if !p.is_valid() {
                return bad("pause policy ranges must have min <= max");
            }
        }
        self.table().map(|_| ())
    }

    fn table(&self) -> Result<StrategyTable, SessionError> {
        match &self.strategy_table {
            None => Ok(StrategyTable::canonical()),
            Some(doc) => {
                StrategyTable::from_document(doc.clone()).map_err(|e| SessionError::InvalidConfig(e.to_string()))
            }
        }
    }

    fn budget(&self) -> Budget {
        Budget {
            total: self.token_budget,
            reply_reservation: self.reply_reservation,
            verbatim_tail: self.verbatim_tail,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SessionError {
    #[error("invalid session config: {0}")]
    InvalidConfig(String),
    #[error("a turn is already in flight")]
    Busy,
    #[error("message is empty")]
    EmptyMessage,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Idle,
    Classifying,
    Generating,
    Emitting,
}

/// The pluggable parts of a session.
#[derive(Clone)]
pub struct Backends {
    pub classifier: Arc<dyn Classifier>,
    pub generator: Arc<dyn Generator>,
    pub summarizer: Arc<dyn Summarizer>,
    pub estimator: Arc<dyn TokenEstimator>,
}

impl Backends {
    /// Rule classifier, template generator, extractive summarizer.
    pub fn mock() -> Self {
        Backends {
            classifier: Arc::new(RuleClassifier::default()),
            generator: Arc::new(MockGenerator),
            summarizer: Arc::new(ExtractiveSummarizer),
            estimator: Arc::new(CharQuarterEstimator),
        }
    }
}

/// A planned assistant turn and the record that terminates it on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TurnOutput {
    pub origin: TurnOrigin,
    pub started_ms: u64,
    pub plan: EmissionPlan,
    pub terminator: ControlRecord,
}

impl TurnOutput {
    pub fn header(&self) -> WireRecord {
        ControlRecord::Turn { at_ms: self.started_ms, origin: self.origin }.into()
    }

    /// Header, every event, terminator.
    pub fn records(&self) -> Vec<WireRecord> {
        let mut out = vec![self.header()];
        out.extend(self.plan.events.iter().cloned().map(WireRecord::from));
        out.push(self.terminator.clone().into());
        out
    }
}

pub struct Session {
    id: String,
    config: SessionConfig,
    planner: Planner,
    backends: Backends,
    turns: Vec<Turn>,
    rng: ChaCha8Rng,
    phase: Phase,
    idle_deadline_ms: u64,
    proactive_sent: bool,
    last_t_ms: u64,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("id", &self.id)
            .field("phase", &self.phase)
            .field("turns", &self.turns.len())
            .field("idle_deadline_ms", &self.idle_deadline_ms)
            .finish()
    }
}

pub fn create_session(
    id: impl Into<String>,
    config: SessionConfig,
    backends: Backends,
    now_ms: u64,
) -> Result<Session, SessionError> {
    config.validate()?;
    let planner = Planner::new(config.table()?, config.pause_policy.unwrap_or_default());
    Ok(Session {
        id: id.into(),
        rng: ChaCha8Rng::seed_from_u64(config.seed),
        idle_deadline_ms: now_ms + config.idle_timeout_ms,
        config,
        planner,
        backends,
        turns: Vec::new(),
        phase: Phase::Idle,
        proactive_sent: false,
        last_t_ms: now_ms,
    })
}

impl Session {
    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn idle_deadline_ms(&self) -> u64 {
        self.idle_deadline_ms
    }

    pub fn proactive_sent(&self) -> bool {
        self.proactive_sent
    }

    pub fn transcript(&self) -> &[Turn] {
        &self.turns
    }

    fn stamp(&mut self, now_ms: u64) -> u64 {
        self.last_t_ms = self.last_t_ms.max(now_ms);
        self.last_t_ms
    }

    fn context(&self, turns: &[Turn]) -> ContextWindow {
        match build_context(
            turns,
            self.config.budget(),
            self.backends.summarizer.as_ref(),
            self.backends.estimator.as_ref(),
        ) {
            Ok(w) => {
                if w.budget_too_small {
                    warn!("session {}: token budget too small for the verbatim tail", self.id);
                }
                w
            }
            // The config is validated at creation, so the budget is sound.
            Err(e) => unreachable!("validated budget rejected: {e}"),
        }
    }

    /// Plans the reply to a user message and moves to `Emitting`. The
    /// caller delivers the plan and then calls [`Session::finish_emission`].
    pub fn handle_user_message(&mut self, text: &str, now_ms: u64) -> Result<TurnOutput, SessionError> {
        if self.phase != Phase::Idle {
            return Err(SessionError::Busy);
        }
        if text.trim().is_empty() {
            return Err(SessionError::EmptyMessage);
        }
        let t = self.stamp(now_ms);
        let context = self.context(&self.turns);
        self.turns.push(Turn::user(text, t));
        self.proactive_sent = false;

        let mode = self.config.mode;
        let signal = match mode {
            PacingMode::ContextAware => {
                self.phase = Phase::Classifying;
                let recent = context.verbatim_turns.iter().map(|t| (t.role, t.text.clone())).collect();
                let ctx = ClassifierContext::new(text, recent, self.config.persona)
                    .map_err(|_| SessionError::EmptyMessage)?;
                Some(self.backends.classifier.classify(&ctx, self.planner.table(), &mut self.rng))
            }
            PacingMode::Static => None,
        };

        self.phase = Phase::Generating;
        let req = GeneratorRequest {
            persona: self.config.persona,
            mode,
            purpose: Purpose::Reply,
            strategy: signal.map(|s| s.strategy),
            context,
            user_message: text.to_string(),
        };
        let generation = match self.backends.generator.generate(&req) {
            Ok(g) => g,
            Err(e) => {
                // Drop the unanswered message so the transcript keeps alternating.
                self.turns.pop();
                self.phase = Phase::Emitting;
                return Ok(TurnOutput {
                    origin: TurnOrigin::User,
                    started_ms: t,
                    plan: EmissionPlan {
                        signal,
                        mode,
                        events: vec![EmissionEvent::Status { at_ms: 0, label: STATUS_THINKING.into() }],
                        total_ms: 0,
                    },
                    terminator: ControlRecord::Error { code: "GENERATOR".into(), message: e.to_string() },
                });
            }
        };

        let plan = self.planner.plan(&generation.text, signal.as_ref(), mode, &mut self.rng);
        let label = signal.map(|s| TurnLabel::Strategy(s.strategy));
        let mut turn = Turn::assistant(plan.text(), t, label);
        turn.degraded = generation.degraded;
        self.turns.push(turn);
        self.phase = Phase::Emitting;
        Ok(TurnOutput {
            origin: TurnOrigin::User,
            started_ms: t,
            plan,
            terminator: ControlRecord::Done { strategy: label, degraded: generation.degraded },
        })
    }

    /// Marks the in-flight turn delivered (or cancelled) and restarts the
    /// idle timer from `now_ms`.
    pub fn finish_emission(&mut self, now_ms: u64) {
        if self.phase == Phase::Idle {
            return;
        }
        let t = self.stamp(now_ms);
        self.phase = Phase::Idle;
        self.idle_deadline_ms = t + self.config.idle_timeout_ms;
    }

    /// Emits at most one check-in per stretch of user silence. Static
    /// sessions never check in.
    pub fn tick_idle(&mut self, now_ms: u64) -> Option<TurnOutput> {
        if self.config.mode == PacingMode::Static
            || self.phase != Phase::Idle
            || self.proactive_sent
            || now_ms < self.idle_deadline_ms
        {
            return None;
        }
        let t = self.stamp(now_ms);
        let req = GeneratorRequest {
            persona: self.config.persona,
            mode: self.config.mode,
            purpose: Purpose::CheckIn,
            strategy: None,
            context: self.context(&self.turns),
            user_message: String::new(),
        };
        let generation = match self.backends.generator.generate(&req) {
            Ok(g) => g,
            Err(e) => {
                warn!("session {}: check-in generation failed: {e}", self.id);
                return None;
            }
        };
        let plan = self.planner.plan(&generation.text, None, self.config.mode, &mut self.rng);
        let mut turn = Turn::assistant(plan.text(), t, Some(TurnLabel::Proactive));
        turn.degraded = generation.degraded;
        self.turns.push(turn);
        self.proactive_sent = true;
        self.phase = Phase::Emitting;
        Some(TurnOutput {
            origin: TurnOrigin::Proactive,
            started_ms: t,
            plan,
            terminator: ControlRecord::Done { strategy: Some(TurnLabel::Proactive), degraded: generation.degraded },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::generator::{GenerateError, Generation, PROACTIVE_TEXT};
    use crate::memory::Role;
    use crate::strategy::Strategy;

    fn session(mode: PacingMode) -> Session {
        let cfg = SessionConfig { mode, seed: 42, ..Default::default() };
        create_session("s", cfg, Backends::mock(), 0).unwrap()
    }

    #[test]
    fn defaults_and_validation() {
        let s = session(PacingMode::ContextAware);
        assert_eq!(s.config().idle_timeout_ms, 60_000);
        assert_eq!(s.idle_deadline_ms(), 60_000);
        let bad = SessionConfig { token_budget: 100, reply_reservation: 100, ..Default::default() };
        assert!(matches!(create_session("x", bad, Backends::mock(), 0), Err(SessionError::InvalidConfig(_))));
        let bad = SessionConfig { idle_timeout_ms: 0, ..Default::default() };
        assert!(create_session("x", bad, Backends::mock(), 0).is_err());
    }

    #[test]
    fn resolve_turn_and_busy() {
        let mut s = session(PacingMode::ContextAware);
        let out = s.handle_user_message("...What should I do?", 1000).unwrap();
        assert_eq!(out.plan.signal.unwrap().strategy, Strategy::Resolve);
        assert_eq!(out.plan.silences().count(), 0);
        assert_eq!(s.phase(), Phase::Emitting);
        assert_eq!(s.handle_user_message("again?", 1001), Err(SessionError::Busy));
        s.finish_emission(1000 + out.plan.total_ms);
        assert_eq!(s.phase(), Phase::Idle);
        assert_eq!(s.transcript().len(), 2);
        assert_eq!(s.transcript()[1].strategy, Some(TurnLabel::Strategy(Strategy::Resolve)));
        assert_eq!(s.transcript()[1].text, out.plan.text());
    }

    #[test]
    fn static_session_never_labels_or_pauses() {
        let mut s = session(PacingMode::Static);
        let mut now = 0;
        for msg in ["I am so angry!", "I just can't stop crying today.", "...What should I do?"] {
            let out = s.handle_user_message(msg, now).unwrap();
            assert_eq!(out.plan.silences().count(), 0);
            assert_eq!(out.terminator, ControlRecord::Done { strategy: None, degraded: false });
            now += 70_000;
            s.finish_emission(now);
            assert!(s.tick_idle(now + 60_000).is_none());
        }
        assert!(s.transcript().iter().all(|t| t.strategy.is_none()));
    }

    #[test]
    fn idle_check_in_once_per_silence() {
        let mut s = session(PacingMode::ContextAware);
        let out = s.handle_user_message("I had a long week at work.", 0).unwrap();
        let end = out.plan.total_ms;
        s.finish_emission(end);
        assert!(s.tick_idle(end + 59_999).is_none());
        let check = s.tick_idle(end + 60_000).unwrap();
        assert_eq!(check.plan.text(), PROACTIVE_TEXT);
        assert_eq!(check.origin, TurnOrigin::Proactive);
        s.finish_emission(end + 60_000 + check.plan.total_ms);
        assert!(s.tick_idle(end + 120_000).is_none());
        assert!(s.tick_idle(end + 600_000).is_none());

        let out = s.handle_user_message("Sorry, I was away.", end + 700_000).unwrap();
        let end2 = end + 700_000 + out.plan.total_ms;
        s.finish_emission(end2);
        assert!(s.tick_idle(end2 + 60_000).is_some());
        let labels: Vec<_> = s.transcript().iter().map(|t| (t.role, t.strategy)).collect();
        assert_eq!(labels[2], (Role::Assistant, Some(TurnLabel::Proactive)));
        assert_eq!(labels.last().unwrap().1, Some(TurnLabel::Proactive));
    }

    #[test]
    fn same_seed_same_stream() {
        let run = || {
            let mut s = session(PacingMode::ContextAware);
            let mut lines = String::new();
            let mut now = 0;
            for msg in
                ["I am so angry! They lied.", "It's complicated, I guess.", "Hmm...", "How do I ask for a raise?"]
            {
                let out = s.handle_user_message(msg, now).unwrap();
                for r in out.records() {
                    lines.push_str(&r.to_line());
                }
                now += out.plan.total_ms + 5_000;
                s.finish_emission(now - 5_000);
            }
            lines
        };
        assert_eq!(run(), run());
    }

    struct Failing;
    impl Generator for Failing {
        fn generate(&self, _: &GeneratorRequest) -> Result<Generation, GenerateError> {
            Err(GenerateError::Unavailable("down".into()))
        }
    }

    #[test]
    fn generator_error_becomes_error_terminator() {
        let backends = Backends { generator: Arc::new(Failing), ..Backends::mock() };
        let mut s = create_session("f", SessionConfig::default(), backends, 0).unwrap();
        let out = s.handle_user_message("hello there friend.", 10).unwrap();
        assert_eq!(out.plan.statuses().collect::<Vec<_>>(), vec![STATUS_THINKING]);
        assert!(matches!(out.terminator, ControlRecord::Error { .. }));
        assert!(s.transcript().is_empty());
        s.finish_emission(10);
        assert_eq!(s.phase(), Phase::Idle);
    }

    #[test]
    fn empty_message_rejected() {
        let mut s = session(PacingMode::ContextAware);
        assert_eq!(s.handle_user_message("   ", 0), Err(SessionError::EmptyMessage));
        assert_eq!(s.phase(), Phase::Idle);
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let cfg: SessionConfig = serde_json::from_str(r#"{"mode":"STATIC","seed":7}"#).unwrap();
        assert_eq!(cfg.mode, PacingMode::Static);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.idle_timeout_ms, 60_000);
        assert_eq!(cfg.verbatim_tail, 8);
    }
}
