//! Corpus analytics over transcripts and strategy label files: strategy
//! distribution, transition matrices, and self-disclosure metrics.

mod lexicon;

pub use lexicon::{
    count_emotion_words, count_first_person, tokens, word_count, zero_counts, EmotionCategory, EmotionCounts, Lexicon,
    FIXTURE_LEXICON,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::memory::{read_transcript, Role, TranscriptError, Turn, TurnLabel};
use crate::strategy::Strategy;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("no labeled input")]
    EmptyInput,
    #[error("lexicon not found: {0}")]
    LexiconMissing(String),
    #[error("lexicon line {line}: {message}")]
    MalformedLexicon { line: usize, message: String },
    #[error("log line {line}: {message}")]
    MalformedLog { line: usize, message: String },
    #[error("inputs mix transcripts, label sequences and count tables")]
    MixedInputs,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl AnalysisError {
    pub fn code(&self) -> &'static str {
        match self {
            AnalysisError::EmptyInput => "EMPTY_INPUT",
            AnalysisError::LexiconMissing(_) => "LEXICON_MISSING",
            AnalysisError::MalformedLexicon { .. } => "MALFORMED_LEXICON",
            AnalysisError::MalformedLog { .. } => "MALFORMED_LOG",
            AnalysisError::MixedInputs => "MIXED_INPUTS",
            AnalysisError::Io(_) => "IO",
        }
    }
}

impl From<TranscriptError> for AnalysisError {
    fn from(e: TranscriptError) -> Self {
        match e {
            TranscriptError::Malformed { line, message } => AnalysisError::MalformedLog { line, message },
            TranscriptError::Io(e) => AnalysisError::Io(e),
        }
    }
}

pub type Matrix<T> = [[T; 8]; 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub labels: Vec<Strategy>,
    pub counts: Matrix<u64>,
    pub probabilities: Matrix<f64>,
    /// Rows with no outgoing transitions.
    pub empty_rows: [bool; 8],
}

impl TransitionMatrix {
    pub fn from_counts(counts: Matrix<u64>) -> Self {
        let mut probabilities = [[0.0; 8]; 8];
        let mut empty_rows = [false; 8];
        for (i, row) in counts.iter().enumerate() {
            let total: u64 = row.iter().sum();
            if total == 0 {
                empty_rows[i] = true;
                continue;
            }
            for (j, &c) in row.iter().enumerate() {
                probabilities[i][j] = c as f64 / total as f64;
            }
        }
        TransitionMatrix { labels: Strategy::ALL.to_vec(), counts, probabilities, empty_rows }
    }

    pub fn probability(&self, from: Strategy, to: Strategy) -> f64 {
        self.probabilities[from.index()][to.index()]
    }

    pub fn count(&self, from: Strategy, to: Strategy) -> u64 {
        self.counts[from.index()][to.index()]
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("from");
        for s in &self.labels {
            out.push(',');
            out.push_str(s.as_str());
        }
        out.push('\n');
        for (i, s) in self.labels.iter().enumerate() {
            out.push_str(s.as_str());
            for p in &self.probabilities[i] {
                let _ = write!(out, ",{p:.6}");
            }
            out.push('\n');
        }
        out
    }
}

/// Counts adjacent pairs within each sequence; sequences never join.
pub fn transition_matrix(sequences: &[Vec<Strategy>]) -> Result<TransitionMatrix, AnalysisError> {
    if sequences.is_empty() || sequences.iter().any(Vec::is_empty) {
        return Err(AnalysisError::EmptyInput);
    }
    let mut counts = [[0u64; 8]; 8];
    for seq in sequences {
        for pair in seq.windows(2) {
            counts[pair[0].index()][pair[1].index()] += 1;
        }
    }
    Ok(TransitionMatrix::from_counts(counts))
}

pub type Distribution = BTreeMap<Strategy, f64>;

pub fn distribution_from_counts(counts: &BTreeMap<Strategy, u64>) -> Result<Distribution, AnalysisError> {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return Err(AnalysisError::EmptyInput);
    }
    Ok(Strategy::ALL.into_iter().map(|s| (s, counts.get(&s).copied().unwrap_or(0) as f64 / total as f64)).collect())
}

/// Proactive labels are not strategies and are skipped.
pub fn strategy_distribution(labels: &[TurnLabel]) -> Result<Distribution, AnalysisError> {
    distribution_from_counts(&histogram(labels.iter().filter_map(|l| l.strategy())))
}

fn histogram(labels: impl IntoIterator<Item = Strategy>) -> BTreeMap<Strategy, u64> {
    let mut h: BTreeMap<Strategy, u64> = Strategy::ALL.into_iter().map(|s| (s, 0)).collect();
    for s in labels {
        *h.entry(s).or_default() += 1;
    }
    h
}

/// Strategy labels of the assistant turns, in order.
pub fn strategy_sequence(turns: &[Turn]) -> Vec<Strategy> {
    turns
        .iter()
        .filter(|t| t.role == Role::Assistant)
        .filter_map(|t| t.strategy.and_then(TurnLabel::strategy))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisclosureMetrics {
    pub emotion_counts: EmotionCounts,
    pub first_person_singular: u64,
    pub first_person_plural: u64,
    pub user_word_counts: Vec<u64>,
    pub total_turns: u64,
    pub strategy_histogram: BTreeMap<Strategy, u64>,
}

impl DisclosureMetrics {
    pub fn empty() -> Self {
        DisclosureMetrics {
            emotion_counts: zero_counts(),
            first_person_singular: 0,
            first_person_plural: 0,
            user_word_counts: Vec::new(),
            total_turns: 0,
            strategy_histogram: histogram([]),
        }
    }

    fn absorb(&mut self, turns: &[Turn], lexicon: &Lexicon) {
        for t in turns {
            match t.role {
                Role::User => {
                    for (c, n) in count_emotion_words(&t.text, lexicon) {
                        *self.emotion_counts.entry(c).or_default() += n;
                    }
                    let (s, p) = count_first_person(&t.text);
                    self.first_person_singular += s;
                    self.first_person_plural += p;
                    self.user_word_counts.push(word_count(&t.text));
                    self.total_turns += 1;
                }
                Role::Assistant => {
                    if let Some(s) = t.strategy.and_then(TurnLabel::strategy) {
                        *self.strategy_histogram.entry(s).or_default() += 1;
                    }
                }
            }
        }
    }
}

/// Metrics over user turns; the strategy histogram over assistant turns.
pub fn disclosure_report(turns: &[Turn], lexicon: &Lexicon) -> DisclosureMetrics {
    let mut m = DisclosureMetrics::empty();
    m.absorb(turns, lexicon);
    m
}

/// One parsed analysis input file.
#[derive(Debug, Clone, PartialEq)]
pub enum AnalysisInput {
    Transcript(Vec<Turn>),
    Sequences(Vec<Vec<Strategy>>),
    Counts(BTreeMap<Strategy, u64>),
}

impl AnalysisInput {
    /// Transcripts are NDJSON objects; count tables are `LABEL count`
    /// lines; anything else is one label per line with blank-line breaks.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let first = text.lines().map(str::trim).find(|l| !l.is_empty() && !l.starts_with('#'));
        match first {
            None => Ok(AnalysisInput::Transcript(Vec::new())),
            Some(l) if l.starts_with('{') => Ok(AnalysisInput::Transcript(read_transcript(text.as_bytes())?)),
            Some(l) if l.split([',', '\t', ' ']).filter(|f| !f.is_empty()).count() == 2 => {
                parse_count_table(text).map(AnalysisInput::Counts)
            }
            Some(_) => parse_label_sequences(text).map(AnalysisInput::Sequences),
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            AnalysisInput::Transcript(_) => "transcript",
            AnalysisInput::Sequences(_) => "sequences",
            AnalysisInput::Counts(_) => "counts",
        }
    }
}

fn label_at(line: usize, s: &str) -> Result<Strategy, AnalysisError> {
    s.parse().map_err(|_| AnalysisError::MalformedLog { line, message: format!("unknown strategy {s:?}") })
}

pub fn parse_label_sequences(text: &str) -> Result<Vec<Vec<Strategy>>, AnalysisError> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            if !cur.is_empty() {
                out.push(std::mem::take(&mut cur));
            }
            continue;
        }
        cur.push(label_at(i + 1, line)?);
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    Ok(out)
}

/// `LABEL count` per line, separated by tab, comma or spaces. Repeated
/// labels accumulate.
pub fn parse_count_table(text: &str) -> Result<BTreeMap<Strategy, u64>, AnalysisError> {
    let mut counts = histogram([]);
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split([',', '\t', ' ']).filter(|f| !f.is_empty()).collect();
        let [label, n] = fields[..] else {
            return Err(AnalysisError::MalformedLog { line: i + 1, message: "expected LABEL count".into() });
        };
        let n: u64 =
            n.parse().map_err(|_| AnalysisError::MalformedLog { line: i + 1, message: format!("bad count {n:?}") })?;
        *counts.entry(label_at(i + 1, label)?).or_default() += n;
    }
    Ok(counts)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub input_kind: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<DisclosureMetrics>,
    pub distribution: Option<Distribution>,
    pub transitions: Option<TransitionMatrix>,
}

/// Aggregates same-kind inputs. Transcripts need a lexicon; each
/// transcript or sequence is an independent session for transitions.
pub fn analyze_inputs(inputs: &[AnalysisInput], lexicon: Option<&Lexicon>) -> Result<AnalysisReport, AnalysisError> {
    let Some(first) = inputs.first() else {
        return Err(AnalysisError::EmptyInput);
    };
    if inputs.iter().any(|i| i.kind() != first.kind()) {
        return Err(AnalysisError::MixedInputs);
    }
    let mut report =
        AnalysisReport { input_kind: first.kind().to_string(), metrics: None, distribution: None, transitions: None };
    let sequences: Vec<Vec<Strategy>> = match first {
        AnalysisInput::Counts(_) => {
            let mut total = histogram([]);
            for i in inputs {
                if let AnalysisInput::Counts(c) = i {
                    for (s, n) in c {
                        *total.entry(*s).or_default() += n;
                    }
                }
            }
            report.distribution = Some(distribution_from_counts(&total)?);
            return Ok(report);
        }
        AnalysisInput::Sequences(_) => inputs
            .iter()
            .flat_map(|i| match i {
                AnalysisInput::Sequences(s) => s.clone(),
                _ => Vec::new(),
            })
            .collect(),
        AnalysisInput::Transcript(_) => {
            let lexicon = lexicon.ok_or_else(|| AnalysisError::LexiconMissing("no lexicon given".into()))?;
            let mut m = DisclosureMetrics::empty();
            let mut seqs = Vec::new();
            for i in inputs {
                if let AnalysisInput::Transcript(turns) = i {
                    m.absorb(turns, lexicon);
                    seqs.push(strategy_sequence(turns));
                }
            }
            report.metrics = Some(m);
            seqs.into_iter().filter(|s| !s.is_empty()).collect()
        }
    };
    let labels: Vec<Strategy> = sequences.iter().flatten().copied().collect();
    if !labels.is_empty() {
        report.distribution = Some(distribution_from_counts(&histogram(labels))?);
        report.transitions = Some(transition_matrix(&sequences)?);
    }
    Ok(report)
}

impl AnalysisReport {
    /// Plain-text summary for terminals.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "input: {}", self.input_kind);
        if let Some(m) = &self.metrics {
            let words: u64 = m.user_word_counts.iter().sum();
            let _ = writeln!(out, "user turns: {}  words: {}", m.total_turns, words);
            let _ =
                writeln!(out, "first person: singular {}  plural {}", m.first_person_singular, m.first_person_plural);
            for (c, n) in &m.emotion_counts {
                let _ = writeln!(out, "  {:<13}{n:>6}", c.as_str());
            }
        }
        if let Some(d) = &self.distribution {
            let _ = writeln!(out, "strategy distribution:");
            for (s, f) in d {
                let _ = writeln!(out, "  {:<11}{:>6.1}%", s.as_str(), f * 100.0);
            }
        }
        if let Some(t) = &self.transitions {
            let _ = write!(out, "transitions (row = from):\n{:<11}", "");
            for s in &t.labels {
                let _ = write!(out, "{:>11}", s.as_str());
            }
            out.push('\n');
            for (i, s) in t.labels.iter().enumerate() {
                let _ = write!(out, "{:<11}", s.as_str());
                for p in &t.probabilities[i] {
                    let _ = write!(out, "{p:>11.2}");
                }
                out.push('\n');
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Strategy::*;

    #[test]
    fn hand_counted_row() {
        let m = transition_matrix(&[vec![Resolve, Resolve, Recognize]]).unwrap();
        assert_eq!(m.probability(Resolve, Resolve), 0.5);
        assert_eq!(m.probability(Resolve, Recognize), 0.5);
        assert!(m.empty_rows[Recognize.index()]);
        assert!(!m.empty_rows[Resolve.index()]);
    }

    #[test]
    fn single_element_has_no_pairs() {
        let m = transition_matrix(&[vec![Holding]]).unwrap();
        assert!(m.empty_rows.iter().all(|&e| e));
        assert!(m.counts.iter().flatten().all(|&c| c == 0));
        assert!(matches!(transition_matrix(&[]), Err(AnalysisError::EmptyInput)));
        assert!(matches!(transition_matrix(&[vec![]]), Err(AnalysisError::EmptyInput)));
    }

    #[test]
    fn no_pairs_across_sequences() {
        let m = transition_matrix(&[vec![Resolve], vec![Holding]]).unwrap();
        assert_eq!(m.count(Resolve, Holding), 0);
    }

    #[test]
    fn distribution_edges() {
        let d = strategy_distribution(&[TurnLabel::Strategy(Holding), TurnLabel::Proactive]).unwrap();
        assert_eq!(d[&Holding], 1.0);
        assert!(matches!(strategy_distribution(&[TurnLabel::Proactive]), Err(AnalysisError::EmptyInput)));
        let uniform: Vec<TurnLabel> = Strategy::ALL.iter().cycle().take(24).map(|&s| TurnLabel::Strategy(s)).collect();
        assert!(strategy_distribution(&uniform).unwrap().values().all(|&f| (f - 0.125).abs() < 1e-12));
    }

    #[test]
    fn input_detection() {
        assert!(matches!(AnalysisInput::parse("RESOLVE\t84\nHOLDING 6\n").unwrap(), AnalysisInput::Counts(_)));
        match AnalysisInput::parse("RESOLVE\nRESOLVE\n\nHOLDING\n").unwrap() {
            AnalysisInput::Sequences(s) => assert_eq!(s, vec![vec![Resolve, Resolve], vec![Holding]]),
            other => panic!("{other:?}"),
        }
        let t = "{\"role\":\"USER\",\"text\":\"hi\",\"t_ms\":0,\"strategy\":null}\n";
        assert!(matches!(AnalysisInput::parse(t).unwrap(), AnalysisInput::Transcript(v) if v.len() == 1));
        match AnalysisInput::parse("RESOLVE\nNOPE\n") {
            Err(AnalysisError::MalformedLog { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn report_over_transcript() {
        let lex = Lexicon::from_pairs([("tired", EmotionCategory::Sadness)]);
        let turns = vec![
            Turn::user("I am tired.", 0),
            Turn::assistant("A bit tiring sometimes?", 10, Some(TurnLabel::Strategy(Reconfirm))),
            Turn::user("We both are.", 20),
            Turn::assistant("I'm still here if you want to continue.", 30, Some(TurnLabel::Proactive)),
        ];
        let m = disclosure_report(&turns, &lex);
        assert_eq!(m.total_turns, 2);
        assert_eq!(m.user_word_counts, vec![3, 3]);
        assert_eq!((m.first_person_singular, m.first_person_plural), (1, 1));
        assert_eq!(m.emotion_counts[&EmotionCategory::Sadness], 1);
        assert_eq!(m.strategy_histogram[&Reconfirm], 1);
        assert_eq!(m.strategy_histogram.values().sum::<u64>(), 1);

        let r = analyze_inputs(&[AnalysisInput::Transcript(turns)], Some(&lex)).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["total_turns"], 2);
        assert_eq!(json["distribution"]["RECONFIRM"], 1.0);
        assert!(r.summary_table().contains("RECONFIRM"));
        assert_eq!(disclosure_report(&[], &lex), DisclosureMetrics::empty());
    }

    #[test]
    fn csv_shape() {
        let m = transition_matrix(&[vec![Resolve, Holding]]).unwrap();
        let csv = m.to_csv();
        assert_eq!(csv.lines().count(), 9);
        assert!(csv.starts_with("from,RECOGNIZE,"));
    }
}
