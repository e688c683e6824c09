//! Conversation turns, transcript persistence and the token-budgeted
//! context window.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::strategy::Strategy;

/// Default number of most recent turns kept verbatim.
pub const DEFAULT_VERBATIM_TAIL: usize = 8;

const SUMMARY_FALLBACK_CHARS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Role {
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::User => "USER",
            Role::Assistant => "ASSISTANT",
        }
    }
}

/// What an assistant turn is labelled with in the transcript.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TurnLabel {
    Strategy(Strategy),
    /// Idle check-in; never counted as a strategy.
    Proactive,
}

impl TurnLabel {
    pub const PROACTIVE: &'static str = "PROACTIVE";

    pub fn strategy(self) -> Option<Strategy> {
        match self {
            TurnLabel::Strategy(s) => Some(s),
            TurnLabel::Proactive => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TurnLabel::Strategy(s) => s.as_str(),
            TurnLabel::Proactive => Self::PROACTIVE,
        }
    }
}

impl fmt::Display for TurnLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TurnLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.trim().eq_ignore_ascii_case(Self::PROACTIVE) {
            return Ok(TurnLabel::Proactive);
        }
        s.parse::<Strategy>().map(TurnLabel::Strategy).map_err(|e| e.to_string())
    }
}

impl Serialize for TurnLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for TurnLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub text: String,
    pub t_ms: u64,
    pub strategy: Option<TurnLabel>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degraded: bool,
}

impl Turn {
    pub fn user(text: impl Into<String>, t_ms: u64) -> Self {
        Turn { role: Role::User, text: text.into(), t_ms, strategy: None, degraded: false }
    }

    pub fn assistant(text: impl Into<String>, t_ms: u64, strategy: Option<TurnLabel>) -> Self {
        Turn { role: Role::Assistant, text: text.into(), t_ms, strategy, degraded: false }
    }
}

#[derive(Debug, Error)]
pub enum TranscriptError {
    #[error("transcript line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Writes one JSON object per turn.
pub fn write_transcript<W: Write>(mut w: W, turns: &[Turn]) -> std::io::Result<()> {
    for t in turns {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_transcript<R: BufRead>(r: R) -> Result<Vec<Turn>, TranscriptError> {
    let mut out: Vec<Turn> = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let turn: Turn = serde_json::from_str(&line)
            .map_err(|e| TranscriptError::Malformed { line: i + 1, message: e.to_string() })?;
        if turn.role == Role::User && turn.text.trim().is_empty() {
            return Err(TranscriptError::Malformed { line: i + 1, message: "empty user turn".into() });
        }
        if let Some(prev) = out.last() {
            if turn.t_ms < prev.t_ms {
                return Err(TranscriptError::Malformed {
                    line: i + 1,
                    message: format!("t_ms {} precedes {}", turn.t_ms, prev.t_ms),
                });
            }
        }
        out.push(turn);
    }
    Ok(out)
}

pub trait TokenEstimator: Send + Sync {
    fn estimate(&self, text: &str) -> usize;
}

/// `ceil(chars / 4)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CharQuarterEstimator;

impl TokenEstimator for CharQuarterEstimator {
    fn estimate(&self, text: &str) -> usize {
        estimate_tokens(text)
    }
}

pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

pub trait Summarizer: Send + Sync {
    /// Condenses `turns` into lines; callers may drop leading lines to fit.
    fn summarize(&self, turns: &[Turn]) -> String;
}

/// `ROLE: first sentence` per turn, one per line.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExtractiveSummarizer;

impl Summarizer for ExtractiveSummarizer {
    fn summarize(&self, turns: &[Turn]) -> String {
        summarize_default(turns)
    }
}

pub fn summarize_default(turns: &[Turn]) -> String {
    turns.iter().map(|t| format!("{}: {}", t.role.as_str(), first_sentence(&t.text))).collect::<Vec<_>>().join("\n")
}

/// Text up to and including the first sentence terminator that is followed
/// by whitespace or the end. Falls back to the first 80 characters when that
/// sentence has no letters or digits.
fn first_sentence(text: &str) -> String {
    let flat: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let mut end = flat.len();
    let mut chars = flat.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '?' | '!' | '\u{2026}') {
            match chars.peek() {
                None => break,
                Some(&(_, ' ')) => {
                    end = i + c.len_utf8();
                    break;
                }
                _ => {}
            }
        }
    }
    let sentence = flat[..end].trim();
    if sentence.chars().any(char::is_alphanumeric) {
        sentence.to_string()
    } else {
        flat.chars().take(SUMMARY_FALLBACK_CHARS).collect::<String>().trim().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextWindow {
    pub summary: String,
    pub verbatim_turns: Vec<Turn>,
    pub token_estimate: usize,
    /// Even the verbatim tail did not fit; fewer turns were kept.
    pub budget_too_small: bool,
}

impl ContextWindow {
    pub fn empty() -> Self {
        ContextWindow { summary: String::new(), verbatim_turns: Vec::new(), token_estimate: 0, budget_too_small: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub total: usize,
    pub reply_reservation: usize,
    pub verbatim_tail: usize,
}

impl Budget {
    pub fn available(&self) -> usize {
        self.total - self.reply_reservation
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("token budget {total} must exceed reply reservation {reservation} > 0")]
    InvalidBudget { total: usize, reservation: usize },
    #[error("verbatim tail must keep at least one turn")]
    ZeroTail,
}

/// Builds the window handed to the classifier and generator. `turns` is
/// only read.
pub fn build_context(
    turns: &[Turn],
    budget: Budget,
    summarizer: &dyn Summarizer,
    estimator: &dyn TokenEstimator,
) -> Result<ContextWindow, ContextError> {
    if budget.reply_reservation == 0 || budget.total <= budget.reply_reservation {
        return Err(ContextError::InvalidBudget { total: budget.total, reservation: budget.reply_reservation });
    }
    if budget.verbatim_tail == 0 {
        return Err(ContextError::ZeroTail);
    }
    let available = budget.available();
    let cost = |ts: &[Turn]| ts.iter().map(|t| estimator.estimate(&t.text)).sum::<usize>();

    let full = cost(turns);
    if full <= available {
        return Ok(ContextWindow {
            summary: String::new(),
            verbatim_turns: turns.to_vec(),
            token_estimate: full,
            budget_too_small: false,
        });
    }

    let split = turns.len().saturating_sub(budget.verbatim_tail);
    let (older, tail) = turns.split_at(split);
    let tail_cost = cost(tail);

    if tail_cost > available {
        // Keep the longest most-recent suffix that fits, never fewer than one turn.
        let mut kept = 0;
        let mut used = 0;
        for t in tail.iter().rev() {
            let c = estimator.estimate(&t.text);
            if used + c > available {
                break;
            }
            used += c;
            kept += 1;
        }
        let kept = kept.max(1);
        let verbatim = tail[tail.len() - kept..].to_vec();
        let token_estimate = cost(&verbatim);
        return Ok(ContextWindow {
            summary: String::new(),
            verbatim_turns: verbatim,
            token_estimate,
            budget_too_small: true,
        });
    }

    let mut lines: Vec<String> =
        if older.is_empty() { Vec::new() } else { summarizer.summarize(older).lines().map(str::to_string).collect() };
    let mut summary = lines.join("\n");
    // Re-compress by dropping the oldest summary lines until everything fits.
    while !lines.is_empty() && estimator.estimate(&summary) + tail_cost > available {
        lines.remove(0);
        summary = lines.join("\n");
    }
    Ok(ContextWindow {
        token_estimate: estimator.estimate(&summary) + tail_cost,
        summary,
        verbatim_turns: tail.to_vec(),
        budget_too_small: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn budget(total: usize, reservation: usize) -> Budget {
        Budget { total, reply_reservation: reservation, verbatim_tail: DEFAULT_VERBATIM_TAIL }
    }

    fn alternating(n: usize) -> Vec<Turn> {
        (0..n)
            .map(|i| {
                let text = format!("Turn number {i} says something. And then more detail here.");
                if i % 2 == 0 {
                    Turn::user(text, i as u64 * 1000)
                } else {
                    Turn::assistant(text, i as u64 * 1000, None)
                }
            })
            .collect()
    }

    #[test]
    fn estimate_examples() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcdefgh"), 2);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        assert_eq!(estimate_tokens("ééé"), 1);
    }

    #[test]
    fn under_budget_keeps_everything() {
        let turns = alternating(3);
        let w = build_context(&turns, budget(10_000, 500), &ExtractiveSummarizer, &CharQuarterEstimator).unwrap();
        assert!(w.summary.is_empty());
        assert_eq!(w.verbatim_turns, turns);
        assert!(!w.budget_too_small);
    }

    #[test]
    fn twenty_turns_tight_budget() {
        let turns = alternating(20);
        let per = estimate_tokens(&turns[0].text);
        // room for the tail plus a little summary, not the whole history
        let total = per * 8 + 40 + 100;
        let w = build_context(&turns, budget(total, 100), &ExtractiveSummarizer, &CharQuarterEstimator).unwrap();
        assert_eq!(w.verbatim_turns, turns[12..].to_vec());
        assert!(!w.summary.is_empty());
        assert!(w.token_estimate <= total - 100);
        assert!(!w.budget_too_small);
    }

    #[test]
    fn degenerate_budget_keeps_one_turn_and_flags() {
        let turns = alternating(5);
        let w = build_context(&turns, budget(3, 1), &ExtractiveSummarizer, &CharQuarterEstimator).unwrap();
        assert!(w.budget_too_small);
        assert_eq!(w.verbatim_turns, vec![turns[4].clone()]);
        assert!(w.summary.is_empty());
    }

    #[test]
    fn invalid_budget() {
        let e = build_context(&[], budget(10, 10), &ExtractiveSummarizer, &CharQuarterEstimator);
        assert_eq!(e, Err(ContextError::InvalidBudget { total: 10, reservation: 10 }));
        let e = build_context(&[], budget(10, 0), &ExtractiveSummarizer, &CharQuarterEstimator);
        assert!(e.is_err());
    }

    #[test]
    fn summarize_first_sentence() {
        assert_eq!(summarize_default(&[Turn::user("I hate my job. It drains me.", 0)]), "USER: I hate my job.");
        let long = format!("... {}", "word ".repeat(40));
        let s = summarize_default(&[Turn::assistant(long.clone(), 0, None)]);
        let expected: String = long.split_whitespace().collect::<Vec<_>>().join(" ").chars().take(80).collect();
        assert_eq!(s, format!("ASSISTANT: {}", expected.trim()));
    }

    #[test]
    fn summarize_is_idempotent_on_fixture_corpus() {
        let corpus = [
            "I hate my job. It drains me.",
            "...",
            "No terminator here at all",
            "Wait... what? Really!",
            "e.g. this one. And more",
            "Line one\nline two. three",
        ];
        for text in corpus {
            let once = summarize_default(&[Turn::user(text, 0)]);
            let body = once.strip_prefix("USER: ").unwrap();
            let twice = summarize_default(&[Turn::user(body, 0)]);
            assert_eq!(once, twice, "{text:?}");
        }
    }

    #[test]
    fn transcript_round_trip_and_errors() {
        let mut turns = alternating(4);
        turns[1].strategy = Some(TurnLabel::Strategy(Strategy::Resolve));
        turns[3].strategy = Some(TurnLabel::Proactive);
        let mut buf = Vec::new();
        write_transcript(&mut buf, &turns).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.lines().nth(1).unwrap().contains(r#""strategy":"RESOLVE""#));
        assert_eq!(read_transcript(&buf[..]).unwrap(), turns);

        let bad = b"{\"role\":\"USER\",\"text\":\"hi\",\"t_ms\":5,\"strategy\":null}\nnot json\n";
        match read_transcript(&bad[..]) {
            Err(TranscriptError::Malformed { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }
}
