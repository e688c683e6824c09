//! The eight pacing strategies, their pacing types and the canonical
//! timing table.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Version stamped into the exported table document.
pub const TABLE_VERSION: u32 = 1;

pub const STATUS_THINKING: &str = "Thinking...";
pub const STATUS_ANSWERING: &str = "Answering...";
pub const STATUS_WAITING: &str = "Waiting...";
pub const STATUS_REFLECTING_QUIETLY: &str = "Assistant is reflecting quietly";
pub const STATUS_HOLDING_SPACE: &str = "Assistant is in holding space";
pub const STATUS_REFLECTING_AND_ANSWERING: &str = "Assistant is reflecting and answering...";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    Recognize,
    Reconfirm,
    ReEngage,
    Reposition,
    Reconsider,
    Resonate,
    Holding,
    Resolve,
}

impl Strategy {
    /// All strategies in table order.
    pub const ALL: [Strategy; 8] = [
        Strategy::Recognize,
        Strategy::Reconfirm,
        Strategy::ReEngage,
        Strategy::Reposition,
        Strategy::Reconsider,
        Strategy::Resonate,
        Strategy::Holding,
        Strategy::Resolve,
    ];

    /// Position in [`Strategy::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Recognize => "RECOGNIZE",
            Strategy::Reconfirm => "RECONFIRM",
            Strategy::ReEngage => "RE_ENGAGE",
            Strategy::Reposition => "REPOSITION",
            Strategy::Reconsider => "RECONSIDER",
            Strategy::Resonate => "RESONATE",
            Strategy::Holding => "HOLDING",
            Strategy::Resolve => "RESOLVE",
        }
    }

    pub fn pacing_type(self) -> PacingType {
        match self {
            Strategy::Recognize => PacingType::ReflectiveSilence,
            Strategy::Reconfirm | Strategy::ReEngage => PacingType::FacilitativeSilence,
            Strategy::Reposition | Strategy::Reconsider | Strategy::Resonate => PacingType::EmpathicSilence,
            Strategy::Holding => PacingType::HoldingSpace,
            Strategy::Resolve => PacingType::ImmediateResponse,
        }
    }

    pub fn timing(self) -> TimingMode {
        match self {
            Strategy::Resolve => TimingMode::Immediate,
            Strategy::Recognize => TimingMode::AfterTransitionWords,
            _ => TimingMode::BeforeResponse,
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown strategy label `{0}`")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    /// Accepts the canonical labels plus case and hyphen variants
    /// (`Re-engage`, `resolve`).
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        Strategy::ALL.into_iter().find(|st| st.as_str() == norm).ok_or_else(|| UnknownStrategy(s.trim().to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PacingType {
    ReflectiveSilence,
    FacilitativeSilence,
    EmpathicSilence,
    HoldingSpace,
    ImmediateResponse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TimingMode {
    BeforeResponse,
    Immediate,
    AfterTransitionWords,
}

/// One row of the strategy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyProfile {
    pub strategy: Strategy,
    pub pacing_type: PacingType,
    pub silence_min_ms: u64,
    pub silence_max_ms: u64,
    pub timing: TimingMode,
    pub status_pre: String,
    pub status_during: String,
    pub observed_frequency: f64,
}

impl StrategyProfile {
    pub fn clamp(&self, ms: u64) -> u64 {
        ms.clamp(self.silence_min_ms, self.silence_max_ms)
    }

    pub fn contains(&self, ms: u64) -> bool {
        (self.silence_min_ms..=self.silence_max_ms).contains(&ms)
    }
}

/// Draws a silence uniformly from the profile's inclusive range.
pub fn sample_silence<R: Rng + ?Sized>(profile: &StrategyProfile, rng: &mut R) -> u64 {
    if profile.silence_min_ms >= profile.silence_max_ms {
        return profile.silence_min_ms;
    }
    rng.random_range(profile.silence_min_ms..=profile.silence_max_ms)
}

#[derive(Debug, Error, PartialEq)]
pub enum TableError {
    #[error("strategy table must contain exactly one profile per strategy (missing {0})")]
    Missing(Strategy),
    #[error("strategy {0} appears more than once")]
    Duplicate(Strategy),
    #[error("strategy {0} has silence_min_ms > silence_max_ms")]
    InvertedRange(Strategy),
    #[error("strategy {strategy} declares pacing type {declared:?}, expected {expected:?}")]
    WrongPacingType { strategy: Strategy, declared: PacingType, expected: PacingType },
    #[error("unsupported table version {0}")]
    Version(u32),
}

/// A complete table of eight profiles indexed by strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct StrategyTable {
    profiles: [StrategyProfile; 8],
}

impl StrategyTable {
    pub fn canonical() -> Self {
        StrategyTable { profiles: Strategy::ALL.map(canonical_profile) }
    }

    /// Builds a table from arbitrary rows, validating completeness and ranges.
    pub fn from_profiles(rows: Vec<StrategyProfile>) -> Result<Self, TableError> {
        let mut slots: [Option<StrategyProfile>; 8] = Default::default();
        for row in rows {
            if row.silence_min_ms > row.silence_max_ms {
                return Err(TableError::InvertedRange(row.strategy));
            }
            let expected = row.strategy.pacing_type();
            if row.pacing_type != expected {
                return Err(TableError::WrongPacingType {
                    strategy: row.strategy,
                    declared: row.pacing_type,
                    expected,
                });
            }
            let slot = &mut slots[row.strategy.index()];
            if slot.is_some() {
                return Err(TableError::Duplicate(row.strategy));
            }
            *slot = Some(row);
        }
        let mut out = Vec::with_capacity(8);
        for (i, slot) in slots.into_iter().enumerate() {
            out.push(slot.ok_or(TableError::Missing(Strategy::ALL[i]))?);
        }
        Ok(StrategyTable { profiles: out.try_into().expect("eight rows") })
    }

    pub fn profile(&self, strategy: Strategy) -> &StrategyProfile {
        &self.profiles[strategy.index()]
    }

    pub fn profiles(&self) -> &[StrategyProfile] {
        &self.profiles
    }

    pub fn to_document(&self) -> TableDocument {
        TableDocument { version: TABLE_VERSION, strategies: self.profiles.to_vec() }
    }

    pub fn from_document(doc: TableDocument) -> Result<Self, TableError> {
        if doc.version != TABLE_VERSION {
            return Err(TableError::Version(doc.version));
        }
        Self::from_profiles(doc.strategies)
    }
}

impl Default for StrategyTable {
    fn default() -> Self {
        Self::canonical()
    }
}

/// Versioned JSON export of a table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDocument {
    pub version: u32,
    pub strategies: Vec<StrategyProfile>,
}

/// The fixed eight-row table.
pub fn canonical_table() -> Vec<StrategyProfile> {
    StrategyTable::canonical().profiles.to_vec()
}

fn canonical_profile(strategy: Strategy) -> StrategyProfile {
    // Ranges are the deployed classifier's millisecond values.
    let (lo, hi, freq) = match strategy {
        Strategy::Recognize => (500, 1000, 0.215),
        Strategy::Reconfirm => (2500, 3000, 0.273),
        Strategy::ReEngage => (2500, 3000, 0.042),
        Strategy::Reposition => (5500, 6000, 0.042),
        Strategy::Reconsider => (2500, 3000, 0.059),
        Strategy::Resonate => (3500, 15000, 0.059),
        Strategy::Holding => (3500, 16000, 0.021),
        Strategy::Resolve => (0, 0, 0.291),
    };
    let (pre, during) = status_labels(strategy);
    StrategyProfile {
        strategy,
        pacing_type: strategy.pacing_type(),
        silence_min_ms: lo,
        silence_max_ms: hi,
        timing: strategy.timing(),
        status_pre: pre.to_string(),
        status_during: during.to_string(),
        observed_frequency: freq,
    }
}

fn status_labels(strategy: Strategy) -> (&'static str, &'static str) {
    match strategy.pacing_type() {
        PacingType::HoldingSpace => (STATUS_HOLDING_SPACE, STATUS_HOLDING_SPACE),
        PacingType::EmpathicSilence => (STATUS_REFLECTING_QUIETLY, STATUS_ANSWERING),
        PacingType::FacilitativeSilence => (STATUS_WAITING, STATUS_ANSWERING),
        PacingType::ReflectiveSilence => (STATUS_THINKING, STATUS_REFLECTING_AND_ANSWERING),
        PacingType::ImmediateResponse => (STATUS_THINKING, STATUS_ANSWERING),
    }
}
