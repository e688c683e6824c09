//! Per-turn strategy selection: a deterministic cue-rule classifier, a
//! remote prompt-based classifier with rule fallback, and an accuracy
//! harness against annotated ground truth.

mod cues;
mod remote;

use std::collections::BTreeMap;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::Role;
use crate::prompts::Persona;
use crate::strategy::{sample_silence, Strategy, StrategyTable};

pub use cues::{find_phrase, normalize, CueError, CueKey, CueLexicon, CueMatch};
pub use remote::{parse_classifier_reply, ClassifierReply, RemoteClassifier};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SignalSource {
    Rule,
    Remote,
}

/// Strategy plus the concrete silence for this turn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlSignal {
    pub strategy: Strategy,
    pub silence_ms: u64,
    pub source: SignalSource,
}

impl ControlSignal {
    /// Clamps `silence_ms` into the strategy's range in `table`.
    pub fn new(strategy: Strategy, silence_ms: u64, source: SignalSource, table: &StrategyTable) -> Self {
        ControlSignal { strategy, silence_ms: table.profile(strategy).clamp(silence_ms), source }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ClassifyError {
    #[error("latest message is empty")]
    EmptyMessage,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierContext {
    latest_message: String,
    pub recent_turns: Vec<(Role, String)>,
    pub persona: Persona,
}

impl ClassifierContext {
    pub fn new(
        latest_message: impl Into<String>,
        recent_turns: Vec<(Role, String)>,
        persona: Persona,
    ) -> Result<Self, ClassifyError> {
        let latest_message = latest_message.into();
        if latest_message.trim().is_empty() {
            return Err(ClassifyError::EmptyMessage);
        }
        Ok(ClassifierContext { latest_message, recent_turns, persona })
    }

    pub fn latest_message(&self) -> &str {
        &self.latest_message
    }
}

pub trait Classifier: Send + Sync {
    fn classify(&self, ctx: &ClassifierContext, table: &StrategyTable, rng: &mut dyn RngCore) -> ControlSignal;
}

/// Which rule produced a rule-based decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleKind {
    DistressCue,
    RepeatedPain,
    EmotionCue,
    ExclaimedEmotion,
    BlameOrHopelessness,
    RigidBelief,
    SeeksValidation,
    TrailingCue,
    TrailsOff,
    Hedging,
    TaskQuestion,
    Default,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleDecision {
    pub strategy: Strategy,
    pub rule: RuleKind,
    pub cue: Option<CueMatch>,
}

impl RuleDecision {
    fn new(strategy: Strategy, rule: RuleKind, cue: Option<CueMatch>) -> Self {
        RuleDecision { strategy, rule, cue }
    }
}

#[derive(Debug, Clone)]
pub struct RuleClassifier {
    cues: CueLexicon,
}

impl Default for RuleClassifier {
    fn default() -> Self {
        RuleClassifier { cues: CueLexicon::builtin() }
    }
}

impl RuleClassifier {
    pub fn new(cues: CueLexicon) -> Self {
        RuleClassifier { cues }
    }

    pub fn cues(&self) -> &CueLexicon {
        &self.cues
    }

    /// Evaluates the rules in priority order; the first match wins.
    pub fn decide(&self, message: &str) -> RuleDecision {
        use Strategy::*;
        let text = normalize(message.trim());
        let cue = |s: Strategy| self.cues.best_match(CueKey::Strategy(s), &text);

        if let Some(m) = cue(Holding) {
            return RuleDecision::new(Holding, RuleKind::DistressCue, Some(m));
        }
        if self.cues.count_hits(CueKey::Pain, &text) >= 2 {
            return RuleDecision::new(Holding, RuleKind::RepeatedPain, self.cues.best_match(CueKey::Pain, &text));
        }
        if let Some(m) = cue(Resonate) {
            return RuleDecision::new(Resonate, RuleKind::EmotionCue, Some(m));
        }
        let emotion = self.cues.best_match(CueKey::Emotion, &text);
        if text.contains('!') && emotion.is_some() {
            return RuleDecision::new(Resonate, RuleKind::ExclaimedEmotion, emotion);
        }
        if let Some(m) = cue(Reposition) {
            return RuleDecision::new(Reposition, RuleKind::BlameOrHopelessness, Some(m));
        }
        if let Some(m) = cue(Reconsider) {
            return RuleDecision::new(Reconsider, RuleKind::RigidBelief, Some(m));
        }
        if let Some(m) = cue(Recognize) {
            return RuleDecision::new(Recognize, RuleKind::SeeksValidation, Some(m));
        }
        if let Some(m) = cue(ReEngage) {
            return RuleDecision::new(ReEngage, RuleKind::TrailingCue, Some(m));
        }
        if self.trails_off(&text) {
            return RuleDecision::new(ReEngage, RuleKind::TrailsOff, None);
        }
        if let Some(m) = cue(Reconfirm) {
            return RuleDecision::new(Reconfirm, RuleKind::Hedging, Some(m));
        }
        if emotion.is_none() {
            if let Some(m) = self.task_question(&text) {
                return RuleDecision::new(Resolve, RuleKind::TaskQuestion, Some(m));
            }
        }
        RuleDecision::new(Recognize, RuleKind::Default, None)
    }

    /// Ends in an ellipsis, ends on a filler word, or is under four words
    /// with no closing punctuation.
    fn trails_off(&self, text: &str) -> bool {
        if text.ends_with("...") || text.ends_with('\u{2026}') {
            return true;
        }
        if text.ends_with(['.', '?', '!']) {
            return false;
        }
        let words: Vec<&str> =
            text.split(|c: char| !(c.is_alphanumeric() || c == '\'')).filter(|w| !w.is_empty()).collect();
        if let Some(last) = words.last() {
            if self.cues.set(CueKey::Filler).iter().any(|f| f == last) {
                return true;
            }
        }
        words.len() < 4
    }

    /// A question whose final sentence opens with a question lead.
    fn task_question(&self, text: &str) -> Option<CueMatch> {
        let body = text.trim_end();
        if !body.ends_with('?') {
            return None;
        }
        let body = body.trim_end_matches(['?', '!']);
        let start = body
            .rfind(['.', '?', '!', '\u{2026}'])
            .map(|i| i + body[i..].chars().next().map_or(1, char::len_utf8))
            .unwrap_or(0);
        let sentence = body[start..].trim_start();
        let offset = body.len() - sentence.len();
        self.cues
            .set(CueKey::Strategy(Strategy::Resolve))
            .iter()
            .filter(|lead| find_phrase(sentence, lead).any(|p| p == 0))
            .max_by_key(|lead| lead.len())
            .map(|lead| CueMatch { phrase: lead.clone(), position: offset })
    }

    pub fn classify_message(&self, message: &str, table: &StrategyTable, rng: &mut dyn RngCore) -> ControlSignal {
        let decision = self.decide(message);
        let silence = sample_silence(table.profile(decision.strategy), rng);
        ControlSignal::new(decision.strategy, silence, SignalSource::Rule, table)
    }
}

impl Classifier for RuleClassifier {
    fn classify(&self, ctx: &ClassifierContext, table: &StrategyTable, rng: &mut dyn RngCore) -> ControlSignal {
        self.classify_message(ctx.latest_message(), table, rng)
    }
}

/// Rule-based classification of a raw context.
pub fn classify_rule_based(ctx: &ClassifierContext, table: &StrategyTable, rng: &mut dyn RngCore) -> ControlSignal {
    RuleClassifier::default().classify(ctx, table, rng)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScoreError {
    #[error("predicted has {predicted} labels but truth has {truth}")]
    LengthMismatch { predicted: usize, truth: usize },
    #[error("no labels to score")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyScore {
    pub total: usize,
    pub correct: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyReport {
    pub total: usize,
    pub correct: usize,
    pub overall: f64,
    /// Accuracy conditioned on the true label; strategies absent from the
    /// truth list are omitted.
    pub per_strategy: BTreeMap<Strategy, StrategyScore>,
}

pub fn score_against_ground_truth(predicted: &[Strategy], truth: &[Strategy]) -> Result<AccuracyReport, ScoreError> {
    if predicted.len() != truth.len() {
        return Err(ScoreError::LengthMismatch { predicted: predicted.len(), truth: truth.len() });
    }
    if truth.is_empty() {
        return Err(ScoreError::Empty);
    }
    let mut per: BTreeMap<Strategy, (usize, usize)> = BTreeMap::new();
    for (p, t) in predicted.iter().zip(truth) {
        let e = per.entry(*t).or_default();
        e.0 += 1;
        if p == t {
            e.1 += 1;
        }
    }
    let correct: usize = per.values().map(|v| v.1).sum();
    Ok(AccuracyReport {
        total: truth.len(),
        correct,
        overall: correct as f64 / truth.len() as f64,
        per_strategy: per
            .into_iter()
            .map(|(s, (total, correct))| (s, StrategyScore { total, correct, accuracy: correct as f64 / total as f64 }))
            .collect(),
    })
}
