//! Response generation backends: a deterministic template generator and a
//! prompt-driven generator over a [`ChatBackend`].

use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::{ChatBackend, ChatMessage};
use crate::memory::{ContextWindow, Role};
use crate::prompts::{baseline_prompt, response_prompt, Persona, CHECK_IN_INSTRUCTION};
use crate::scheduler::PacingMode;
use crate::strategy::Strategy;

/// Check-in text used by the template generator.
pub const PROACTIVE_TEXT: &str = "I'm still here if you want to continue.";

/// Returned when the remote generator is exhausted.
pub const FALLBACK_TEXT: &str =
    "I'm sorry, I'm having trouble putting my thoughts together right now. Could you give me a moment and say that again?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Purpose {
    Reply,
    CheckIn,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratorRequest {
    pub persona: Persona,
    pub mode: PacingMode,
    pub purpose: Purpose,
    /// Present exactly for context-aware replies.
    pub strategy: Option<Strategy>,
    pub context: ContextWindow,
    pub user_message: String,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GenerateError {
    #[error("context-aware replies need a strategy and static replies must not carry one")]
    StrategyMismatch,
    #[error("generator unavailable: {0}")]
    Unavailable(String),
}

impl GeneratorRequest {
    pub fn validate(&self) -> Result<(), GenerateError> {
        let needs = self.purpose == Purpose::Reply && self.mode == PacingMode::ContextAware;
        if needs != self.strategy.is_some() {
            return Err(GenerateError::StrategyMismatch);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    /// The backend failed and [`FALLBACK_TEXT`] was substituted.
    pub degraded: bool,
}

pub trait Generator: Send + Sync {
    fn generate(&self, req: &GeneratorRequest) -> Result<Generation, GenerateError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct MockGenerator;

impl Generator for MockGenerator {
    fn generate(&self, req: &GeneratorRequest) -> Result<Generation, GenerateError> {
        req.validate()?;
        Ok(Generation { text: generate_mock(req), degraded: false })
    }
}

/// Deterministic per-strategy templates.
pub fn generate_mock(req: &GeneratorRequest) -> String {
    if req.purpose == Purpose::CheckIn {
        return PROACTIVE_TEXT.to_string();
    }
    let msg = req.user_message.as_str();
    let strategy = match (req.mode, req.strategy) {
        (PacingMode::ContextAware, Some(s)) => s,
        _ => {
            return "Thank you for sharing that with me. It sounds like you are dealing with a lot right now, \
and it makes sense to feel the way you do. Would you like to tell me more about what has been on your mind?"
                .to_string()
        }
    };
    let h = stable_hash(msg);
    match strategy {
        Strategy::Reconfirm => match key_phrase(msg) {
            Some(p) => format!("{p}?"),
            None => "Can you tell me a bit more about what you mean?".to_string(),
        },
        Strategy::ReEngage => pick(h, &["And because...", "So...", "And then...", "Because..."]).to_string(),
        Strategy::Recognize => pick(
            h,
            &[
                "I see... it sounds like this has been sitting with you for a while. Maybe... part of you is still working out what it means, is that right?",
                "I can understand that... so on one hand it matters to you, but... on the other hand it is wearing you down, is that right?",
                "It sounds like... you have been carrying this mostly on your own. And maybe... that makes it feel heavier, is that right?",
            ],
        )
        .to_string(),
        Strategy::Holding => {
            "If you check in with yourself for a moment, what are you noticing right now?".to_string()
        }
        Strategy::Resolve => match req.persona {
            Persona::Career => "One practical step: list the three tasks that drain you most, then ask your manager whether one of them can change this month.",
            Persona::Relationship => "One practical step: pick a calm moment and tell your partner one specific thing you miss, using \"I\" statements.",
            Persona::Generic => "One practical step: write the problem down in a single sentence, then choose one small action you can take today.",
        }
        .to_string(),
        Strategy::Reposition => {
            "I'm just taking that in for a moment... When you say that, I also wonder if there is one small change you could try?".to_string()
        }
        Strategy::Reconsider => {
            "It feels completely certain right now... I'm curious what makes it feel so certain?".to_string()
        }
        Strategy::Resonate => pick(
            h,
            &[
                "That sounds like a heavy weight to carry. How did that experience make you feel?",
                "Thank you for sharing that. It takes courage to talk about something so difficult.",
            ],
        )
        .to_string(),
    }
}

fn pick<'a>(h: u64, options: &[&'a str]) -> &'a str {
    options[(h % options.len() as u64) as usize]
}

/// FNV-1a; stable across platforms and releases.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

const LEADING_FILLERS: [&str; 8] = ["just", "but", "and", "so", "well", "um", "like", "really"];

/// The last clause of `msg`, without leading fillers, capitalized.
fn key_phrase(msg: &str) -> Option<String> {
    let folded = msg.replace('\u{2026}', "...").replace('\u{2019}', "'");
    let clause =
        folded.split([',', '.', ';', '!', '?', ':']).map(str::trim).rfind(|s| s.chars().any(char::is_alphanumeric))?;
    let mut words: Vec<&str> = clause.split_whitespace().collect();
    while words.len() > 1 && LEADING_FILLERS.contains(&words[0].to_lowercase().as_str()) {
        words.remove(0);
    }
    if words.len() > 6 {
        words.drain(..words.len() - 6);
    }
    let phrase = words.join(" ");
    let mut chars = phrase.chars();
    let first = chars.next()?;
    Some(first.to_uppercase().chain(chars).collect())
}

/// Removes HTML markup, keeping block boundaries as line breaks.
pub fn strip_markup(html: &str) -> String {
    let mut out = String::with_capacity(html.len());
    let mut rest = html;
    while let Some(open) = rest.find('<') {
        out.push_str(&rest[..open]);
        let after = &rest[open..];
        match after.find('>') {
            Some(close) => {
                let tag = after[1..close].trim().trim_start_matches('/').trim_end_matches('/');
                let name: String =
                    tag.chars().take_while(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
                if matches!(
                    name.as_str(),
                    "p" | "br" | "li" | "ul" | "ol" | "div" | "h1" | "h2" | "h3" | "h4" | "h5" | "h6" | "blockquote"
                ) {
                    out.push('\n');
                }
                rest = &after[close + 1..];
            }
            None => {
                out.push('<');
                rest = &after[1..];
            }
        }
    }
    out.push_str(rest);
    let decoded = out
        .replace("&nbsp;", " ")
        .replace("&lt;", "<")
        .replace("&gt;", ">")
        .replace("&quot;", "\"")
        .replace("&#39;", "'")
        .replace("&apos;", "'")
        .replace("&amp;", "&");
    decoded.lines().map(str::trim).filter(|l| !l.is_empty()).collect::<Vec<_>>().join("\n")
}

/// Prompt-driven generator. Backend failures degrade to [`FALLBACK_TEXT`].
pub struct LlmGenerator {
    backend: Arc<dyn ChatBackend>,
}

impl LlmGenerator {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmGenerator { backend }
    }

    pub fn messages(req: &GeneratorRequest) -> Vec<ChatMessage> {
        let system = match (req.purpose, req.mode, req.strategy) {
            (Purpose::Reply, PacingMode::ContextAware, Some(s)) => response_prompt(req.persona, s),
            _ => baseline_prompt(req.persona),
        };
        let mut msgs = vec![ChatMessage::system(system)];
        if !req.context.summary.is_empty() {
            msgs.push(ChatMessage::system(format!("Summary of the earlier conversation:\n{}", req.context.summary)));
        }
        for t in &req.context.verbatim_turns {
            msgs.push(match t.role {
                Role::User => ChatMessage::user(t.text.clone()),
                Role::Assistant => ChatMessage::assistant(t.text.clone()),
            });
        }
        match req.purpose {
            Purpose::Reply => msgs.push(ChatMessage::user(req.user_message.clone())),
            Purpose::CheckIn => msgs.push(ChatMessage::system(CHECK_IN_INSTRUCTION)),
        }
        msgs
    }
}

impl Generator for LlmGenerator {
    fn generate(&self, req: &GeneratorRequest) -> Result<Generation, GenerateError> {
        req.validate()?;
        let fallback = Generation { text: FALLBACK_TEXT.to_string(), degraded: true };
        match self.backend.complete(&Self::messages(req)) {
            Ok(reply) => {
                let text = strip_markup(&reply);
                if text.is_empty() {
                    warn!("remote generator returned no text");
                    Ok(fallback)
                } else {
                    Ok(Generation { text, degraded: false })
                }
            }
            Err(e) => {
                warn!("remote generator failed: {e}");
                Ok(fallback)
            }
        }
    }
}
