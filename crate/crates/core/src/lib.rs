//! Context-aware conversational pacing.
//!
//! A user message is classified into one of eight pacing strategies, a reply
//! is generated for that strategy, and the reply is turned into a timed plan
//! of status labels, silences and text chunks.

pub mod analysis;
pub mod backend;
pub mod classifier;
pub mod exec;
pub mod generator;
pub mod memory;
pub mod prompts;
pub mod scheduler;
pub mod session;
pub mod strategy;
pub mod wire;

pub use classifier::{Classifier, ControlSignal, RuleClassifier};
pub use scheduler::{plan_emission, EmissionEvent, EmissionPlan, PacingMode, Planner};
pub use session::{create_session, Backends, Session, SessionConfig, SessionError};
pub use strategy::{Strategy, StrategyProfile, StrategyTable};
