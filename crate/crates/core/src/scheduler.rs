//! Turns response text plus a control signal into a timed emission plan:
//! status labels, strategic silence and punctuation-paced text chunks.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::classifier::ControlSignal;
use crate::strategy::{Strategy, StrategyTable, STATUS_ANSWERING, STATUS_THINKING};

/// Grounding instruction streamed ahead of the silence on HOLDING turns.
pub const HOLDING_PREAMBLE: &str =
    "Let's just take a deep breath here... inhale 3 seconds, exhale 3 seconds, repeat...\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PauseClass {
    /// `, - ( ) : ; ' "`
    Standard,
    /// `. ? !`
    Terminator,
    LineBreak,
    /// `...` or `…`
    Ellipsis,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PauseRange {
    pub min_ms: u64,
    pub max_ms: u64,
}

impl PauseRange {
    pub const fn new(min_ms: u64, max_ms: u64) -> Self {
        PauseRange { min_ms, max_ms }
    }

    pub fn contains(&self, ms: u64) -> bool {
        (self.min_ms..=self.max_ms).contains(&ms)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        if self.min_ms >= self.max_ms {
            self.min_ms
        } else {
            rng.random_range(self.min_ms..=self.max_ms)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PausePolicy {
    pub standard: PauseRange,
    pub terminator: PauseRange,
    pub line_break: PauseRange,
    pub ellipsis: PauseRange,
}

impl Default for PausePolicy {
    fn default() -> Self {
        PausePolicy {
            standard: PauseRange::new(100, 150),
            terminator: PauseRange::new(100, 150),
            line_break: PauseRange::new(150, 300),
            ellipsis: PauseRange::new(1000, 2000),
        }
    }
}

impl PausePolicy {
    pub fn range(&self, class: PauseClass) -> PauseRange {
        match class {
            PauseClass::Standard => self.standard,
            PauseClass::Terminator => self.terminator,
            PauseClass::LineBreak => self.line_break,
            PauseClass::Ellipsis => self.ellipsis,
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.standard, self.terminator, self.line_break, self.ellipsis].iter().all(|r| r.min_ms <= r.max_ms)
    }
}

/// A fragment of text and the pause class that follows it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment<'a> {
    pub text: &'a str,
    pub pause: Option<PauseClass>,
}

fn is_pause_punct(c: char) -> bool {
    matches!(c, '.' | '?' | '!' | ',' | '-' | '(' | ')' | ':' | ';' | '\'' | '"' | '\u{2026}')
}

fn run_class(run: &str, prev: Option<char>, next: Option<char>) -> Option<PauseClass> {
    if run.contains("...") || run.contains('\u{2026}') {
        return Some(PauseClass::Ellipsis);
    }
    let mut it = run.chars();
    if let (Some(c), None) = (it.next(), it.next()) {
        let alnum = |o: Option<char>| o.is_some_and(char::is_alphanumeric);
        let digit = |o: Option<char>| o.is_some_and(|x| x.is_ascii_digit());
        let word_internal = match c {
            '\'' | '-' | '.' => alnum(prev) && alnum(next),
            ',' => digit(prev) && digit(next),
            _ => false,
        };
        if word_internal {
            return None;
        }
    }
    if run.contains(['.', '?', '!']) {
        Some(PauseClass::Terminator)
    } else {
        Some(PauseClass::Standard)
    }
}

/// Splits `text` into fragments at punctuation. Fragments partition the
/// input; spaces after a punctuation run stay with the preceding fragment
/// and each run of line breaks is its own fragment. The last fragment
/// carries no pause.
pub fn segment_punctuation(text: &str) -> Vec<Segment<'_>> {
    let mut segs = segment_all(text);
    if let Some(last) = segs.last_mut() {
        last.pause = None;
    }
    segs
}

fn segment_all(text: &str) -> Vec<Segment<'_>> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let byte_at = |i: usize| chars.get(i).map_or(text.len(), |&(b, _)| b);
    let mut segs = Vec::new();
    let mut frag_start = 0usize;
    let mut i = 0usize;
    while i < chars.len() {
        let c = chars[i].1;
        if c == '\n' || c == '\r' {
            let here = byte_at(i);
            if frag_start < here {
                segs.push(Segment { text: &text[frag_start..here], pause: None });
            }
            let mut j = i;
            while j < chars.len() && matches!(chars[j].1, '\n' | '\r') {
                j += 1;
            }
            while j < chars.len() && matches!(chars[j].1, ' ' | '\t') {
                j += 1;
            }
            segs.push(Segment { text: &text[here..byte_at(j)], pause: Some(PauseClass::LineBreak) });
            frag_start = byte_at(j);
            i = j;
        } else if is_pause_punct(c) {
            let mut j = i;
            while j < chars.len() && is_pause_punct(chars[j].1) {
                j += 1;
            }
            let prev = i.checked_sub(1).map(|k| chars[k].1);
            let next = chars.get(j).map(|&(_, ch)| ch);
            match run_class(&text[byte_at(i)..byte_at(j)], prev, next) {
                None => i = j,
                Some(class) => {
                    while j < chars.len() && matches!(chars[j].1, ' ' | '\t') {
                        j += 1;
                    }
                    segs.push(Segment { text: &text[frag_start..byte_at(j)], pause: Some(class) });
                    frag_start = byte_at(j);
                    i = j;
                }
            }
        } else {
            i += 1;
        }
    }
    if frag_start < text.len() || segs.is_empty() {
        segs.push(Segment { text: &text[frag_start..], pause: None });
    }
    segs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacingMode {
    #[default]
    ContextAware,
    Static,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EmissionEvent {
    Status { at_ms: u64, label: String },
    Silence { at_ms: u64, duration_ms: u64 },
    Chunk { at_ms: u64, text: String },
}

impl EmissionEvent {
    pub fn at_ms(&self) -> u64 {
        match self {
            EmissionEvent::Status { at_ms, .. }
            | EmissionEvent::Silence { at_ms, .. }
            | EmissionEvent::Chunk { at_ms, .. } => *at_ms,
        }
    }

    /// Tie-break rank for events sharing a timestamp.
    pub fn rank(&self) -> u8 {
        match self {
            EmissionEvent::Status { .. } => 0,
            EmissionEvent::Silence { .. } => 1,
            EmissionEvent::Chunk { .. } => 2,
        }
    }

    pub fn end_ms(&self) -> u64 {
        match self {
            EmissionEvent::Silence { at_ms, duration_ms } => at_ms + duration_ms,
            other => other.at_ms(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmissionPlan {
    /// Absent for static turns and idle check-ins.
    pub signal: Option<ControlSignal>,
    pub mode: PacingMode,
    pub events: Vec<EmissionEvent>,
    pub total_ms: u64,
}

impl EmissionPlan {
    pub fn empty(mode: PacingMode) -> Self {
        EmissionPlan { signal: None, mode, events: Vec::new(), total_ms: 0 }
    }

    /// Concatenated chunk text.
    pub fn text(&self) -> String {
        self.events
            .iter()
            .filter_map(|e| match e {
                EmissionEvent::Chunk { text, .. } => Some(text.as_str()),
                _ => None,
            })
            .collect()
    }

    pub fn chunks(&self) -> impl Iterator<Item = (u64, &str)> {
        self.events.iter().filter_map(|e| match e {
            EmissionEvent::Chunk { at_ms, text } => Some((*at_ms, text.as_str())),
            _ => None,
        })
    }

    pub fn silences(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.events.iter().filter_map(|e| match e {
            EmissionEvent::Silence { at_ms, duration_ms } => Some((*at_ms, *duration_ms)),
            _ => None,
        })
    }

    pub fn statuses(&self) -> impl Iterator<Item = &str> {
        self.events.iter().filter_map(|e| match e {
            EmissionEvent::Status { label, .. } => Some(label.as_str()),
            _ => None,
        })
    }

    /// One event per line.
    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serializes"));
            out.push('\n');
        }
        out
    }

    fn seal(mut self) -> Self {
        self.total_ms = self.events.iter().map(EmissionEvent::end_ms).max().unwrap_or(0);
        self
    }
}

#[derive(Debug, Clone, Default)]
pub struct Planner {
    table: StrategyTable,
    policy: PausePolicy,
}

impl Planner {
    pub fn new(table: StrategyTable, policy: PausePolicy) -> Self {
        Planner { table, policy }
    }

    pub fn table(&self) -> &StrategyTable {
        &self.table
    }

    pub fn policy(&self) -> &PausePolicy {
        &self.policy
    }

    /// Plans one assistant turn. With no signal (idle check-ins) a
    /// context-aware plan uses the generic labels and no strategic silence.
    pub fn plan(
        &self,
        text: &str,
        signal: Option<&ControlSignal>,
        mode: PacingMode,
        rng: &mut dyn RngCore,
    ) -> EmissionPlan {
        match mode {
            PacingMode::Static => self.plan_static(text),
            PacingMode::ContextAware => self.plan_paced(text, signal, rng),
        }
    }

    fn plan_static(&self, text: &str) -> EmissionPlan {
        let mut events = vec![
            EmissionEvent::Status { at_ms: 0, label: STATUS_THINKING.into() },
            EmissionEvent::Status { at_ms: 0, label: STATUS_ANSWERING.into() },
        ];
        events.extend(
            segment_punctuation(text)
                .into_iter()
                .filter(|s| !s.text.is_empty())
                .map(|s| EmissionEvent::Chunk { at_ms: 0, text: s.text.to_string() }),
        );
        EmissionPlan { signal: None, mode: PacingMode::Static, events, total_ms: 0 }.seal()
    }

    fn plan_paced(&self, text: &str, signal: Option<&ControlSignal>, rng: &mut dyn RngCore) -> EmissionPlan {
        let (pre, during) = match signal {
            Some(s) => {
                let p = self.table.profile(s.strategy);
                (p.status_pre.clone(), p.status_during.clone())
            }
            None => (STATUS_THINKING.to_string(), STATUS_ANSWERING.to_string()),
        };
        let mut events = vec![EmissionEvent::Status { at_ms: 0, label: pre }];
        let mut t = 0u64;

        if let Some(s) = signal {
            if s.strategy == Strategy::Holding {
                // The preamble's closing line break is paced before the silence.
                for seg in segment_all(HOLDING_PREAMBLE) {
                    t = self.push_chunk(&mut events, t, seg, rng);
                }
            }
            if s.silence_ms > 0 {
                events.push(EmissionEvent::Silence { at_ms: t, duration_ms: s.silence_ms });
                t += s.silence_ms;
            }
        }
        events.push(EmissionEvent::Status { at_ms: t, label: during });
        for seg in segment_punctuation(text) {
            t = self.push_chunk(&mut events, t, seg, rng);
        }
        EmissionPlan { signal: signal.copied(), mode: PacingMode::ContextAware, events, total_ms: 0 }.seal()
    }

    fn push_chunk(&self, events: &mut Vec<EmissionEvent>, t: u64, seg: Segment<'_>, rng: &mut dyn RngCore) -> u64 {
        if !seg.text.is_empty() {
            events.push(EmissionEvent::Chunk { at_ms: t, text: seg.text.to_string() });
        }
        match seg.pause {
            Some(class) => t + self.policy.range(class).sample(rng),
            None => t,
        }
    }
}

/// Plans with the canonical table and default pause policy.
pub fn plan_emission(
    text: &str,
    signal: Option<&ControlSignal>,
    mode: PacingMode,
    rng: &mut dyn RngCore,
) -> EmissionPlan {
    Planner::default().plan(text, signal, mode, rng)
}
