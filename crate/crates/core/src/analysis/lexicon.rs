//! NRC-format emotion lexicon and the word-level counters built on it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_segmentation::UnicodeSegmentation;

use super::AnalysisError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmotionCategory {
    Anger,
    Anticipation,
    Disgust,
    Fear,
    Joy,
    Sadness,
    Surprise,
    Trust,
    Positive,
    Negative,
}

impl EmotionCategory {
    pub const ALL: [EmotionCategory; 10] = [
        EmotionCategory::Anger,
        EmotionCategory::Anticipation,
        EmotionCategory::Disgust,
        EmotionCategory::Fear,
        EmotionCategory::Joy,
        EmotionCategory::Sadness,
        EmotionCategory::Surprise,
        EmotionCategory::Trust,
        EmotionCategory::Positive,
        EmotionCategory::Negative,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EmotionCategory::Anger => "anger",
            EmotionCategory::Anticipation => "anticipation",
            EmotionCategory::Disgust => "disgust",
            EmotionCategory::Fear => "fear",
            EmotionCategory::Joy => "joy",
            EmotionCategory::Sadness => "sadness",
            EmotionCategory::Surprise => "surprise",
            EmotionCategory::Trust => "trust",
            EmotionCategory::Positive => "positive",
            EmotionCategory::Negative => "negative",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.as_str() == s)
    }
}

/// A 50-word lexicon in NRC format, for tests and demos.
pub const FIXTURE_LEXICON: &str = include_str!("../../data/nrc_fixture.tsv");

pub type EmotionCounts = BTreeMap<EmotionCategory, u64>;

pub fn zero_counts() -> EmotionCounts {
    EmotionCategory::ALL.into_iter().map(|c| (c, 0)).collect()
}

/// Surface form (lowercase) to the categories it is associated with.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, BTreeSet<EmotionCategory>>,
}

impl Lexicon {
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, EmotionCategory)>) -> Self {
        let mut lex = Lexicon::default();
        for (word, cat) in pairs {
            lex.entries.entry(word.to_lowercase()).or_default().insert(cat);
        }
        lex
    }

    /// Parses `word<TAB>category<TAB>0|1` lines. Zero associations are
    /// kept out of the map; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, AnalysisError> {
        let mut lex = Lexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |message: &str| AnalysisError::MalformedLexicon { line: i + 1, message: message.to_string() };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad("expected word<TAB>category<TAB>0|1"));
            }
            let cat = EmotionCategory::parse(fields[1].trim()).ok_or_else(|| bad("unknown category"))?;
            match fields[2].trim() {
                "1" => {
                    lex.entries.entry(fields[0].trim().to_lowercase()).or_default().insert(cat);
                }
                "0" => {}
                _ => return Err(bad("association must be 0 or 1")),
            }
        }
        Ok(lex)
    }

    pub fn load(path: &Path) -> Result<Self, AnalysisError> {
        let text =
            std::fs::read_to_string(path).map_err(|_| AnalysisError::LexiconMissing(path.display().to_string()))?;
        Self::parse(&text)
    }

    pub fn categories(&self, word: &str) -> Option<&BTreeSet<EmotionCategory>> {
        self.entries.get(word)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Unicode word tokens, lowercased.
pub fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.unicode_words().map(str::to_lowercase)
}

pub fn word_count(text: &str) -> u64 {
    text.unicode_words().count() as u64
}

pub fn count_emotion_words(text: &str, lexicon: &Lexicon) -> EmotionCounts {
    let mut counts = zero_counts();
    for tok in tokens(text) {
        if let Some(cats) = lexicon.categories(&tok) {
            for c in cats {
                *counts.entry(*c).or_default() += 1;
            }
        }
    }
    counts
}

const SINGULAR: [&str; 5] = ["i", "me", "my", "myself", "mine"];
const PLURAL: [&str; 5] = ["we", "us", "our", "ours", "ourselves"];

/// (singular, plural) first-person pronoun counts.
pub fn count_first_person(text: &str) -> (u64, u64) {
    let (mut s, mut p) = (0, 0);
    for tok in tokens(text) {
        if SINGULAR.contains(&tok.as_str()) {
            s += 1;
        } else if PLURAL.contains(&tok.as_str()) {
            p += 1;
        }
    }
    (s, p)
}
