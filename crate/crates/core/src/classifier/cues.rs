//! Cue lexicon loading and word-boundary phrase matching.

use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::strategy::Strategy;

const DEFAULT_CUES: &str = include_str!("../../data/cues.tsv");

/// Which set a cue line belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CueKey {
    Strategy(Strategy),
    Emotion,
    Pain,
    Filler,
}

impl FromStr for CueKey {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "EMOTION" => Ok(CueKey::Emotion),
            "PAIN" => Ok(CueKey::Pain),
            "FILLER" => Ok(CueKey::Filler),
            other => Strategy::ALL.into_iter().find(|st| st.as_str() == other).map(CueKey::Strategy).ok_or(()),
        }
    }
}

#[derive(Debug, Error)]
pub enum CueError {
    #[error("cue file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cue line {line}: {message}")]
    Malformed { line: usize, message: String },
}

/// The longest-then-earliest match inside one cue set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CueMatch {
    pub phrase: String,
    pub position: usize,
}

#[derive(Debug, Clone, Default)]
pub struct CueLexicon {
    strategies: [Vec<String>; 8],
    emotion: Vec<String>,
    pain: Vec<String>,
    filler: Vec<String>,
}

impl CueLexicon {
    /// The lexicon bundled with the crate.
    pub fn builtin() -> Self {
        Self::parse(DEFAULT_CUES).expect("bundled cue lexicon parses")
    }

    pub fn load(path: &Path) -> Result<Self, CueError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CueError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text)
    }

    /// Parses `KEY<TAB>phrase` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, CueError> {
        let mut lex = CueLexicon::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (key, phrase) = line
                .split_once('\t')
                .ok_or_else(|| CueError::Malformed { line: i + 1, message: "expected KEY<TAB>phrase".into() })?;
            let key: CueKey = key
                .parse()
                .map_err(|_| CueError::Malformed { line: i + 1, message: format!("unknown key `{key}`") })?;
            let phrase = normalize(phrase.trim());
            if phrase.is_empty() {
                return Err(CueError::Malformed { line: i + 1, message: "empty phrase".into() });
            }
            lex.set_mut(key).push(phrase);
        }
        Ok(lex)
    }

    fn set_mut(&mut self, key: CueKey) -> &mut Vec<String> {
        match key {
            CueKey::Strategy(s) => &mut self.strategies[s.index()],
            CueKey::Emotion => &mut self.emotion,
            CueKey::Pain => &mut self.pain,
            CueKey::Filler => &mut self.filler,
        }
    }

    pub fn set(&self, key: CueKey) -> &[String] {
        match key {
            CueKey::Strategy(s) => &self.strategies[s.index()],
            CueKey::Emotion => &self.emotion,
            CueKey::Pain => &self.pain,
            CueKey::Filler => &self.filler,
        }
    }

    /// Best match of `key`'s set in already-normalized text.
    pub fn best_match(&self, key: CueKey, text: &str) -> Option<CueMatch> {
        let mut best: Option<CueMatch> = None;
        for phrase in self.set(key) {
            if let Some(pos) = find_phrase(text, phrase).next() {
                let better = match &best {
                    None => true,
                    Some(b) => phrase.len() > b.phrase.len() || (phrase.len() == b.phrase.len() && pos < b.position),
                };
                if better {
                    best = Some(CueMatch { phrase: phrase.clone(), position: pos });
                }
            }
        }
        best
    }

    /// Total occurrences of every phrase in `key`'s set.
    pub fn count_hits(&self, key: CueKey, text: &str) -> usize {
        self.set(key).iter().map(|p| find_phrase(text, p).count()).sum()
    }
}

/// Lowercases and folds typographic apostrophes so cues match either form.
pub fn normalize(text: &str) -> String {
    text.to_lowercase().replace(['\u{2019}', '\u{2018}'], "'")
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\''
}

/// Byte offsets where `phrase` occurs in `text` on word boundaries. A
/// boundary is only required on a side where the phrase itself starts or
/// ends with a word character.
pub fn find_phrase<'a>(text: &'a str, phrase: &'a str) -> impl Iterator<Item = usize> + 'a {
    let first = phrase.chars().next();
    let last = phrase.chars().next_back();
    text.match_indices(phrase).map(|(i, _)| i).filter(move |&i| {
        let before_ok = match first {
            Some(c) if is_word_char(c) => text[..i].chars().next_back().is_none_or(|p| !is_word_char(p)),
            _ => true,
        };
        let after_ok = match last {
            Some(c) if is_word_char(c) => text[i + phrase.len()..].chars().next().is_none_or(|n| !is_word_char(n)),
            _ => true,
        };
        before_ok && after_ok
    })
}
