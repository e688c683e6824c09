use std::sync::Arc;

use log::warn;
use rand::RngCore;
use serde::Deserialize;

use super::{Classifier, ClassifierContext, ControlSignal, RuleClassifier, SignalSource};
use crate::backend::{ChatBackend, ChatMessage};
use crate::memory::Role;
use crate::prompts::classifier_prompt;
use crate::strategy::{Strategy, StrategyTable};

/// The JSON object the classifier prompt asks for.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassifierReply {
    pub action: Strategy,
    pub response_silence_ms: i64,
}

#[derive(Deserialize)]
struct RawReply {
    action: String,
    response_silence_ms: i64,
}

/// Extracts the single JSON object from a reply, tolerating code fences.
pub fn parse_classifier_reply(reply: &str) -> Option<ClassifierReply> {
    let start = reply.find('{')?;
    let end = reply.rfind('}')?;
    if end < start {
        return None;
    }
    let raw: RawReply = serde_json::from_str(&reply[start..=end]).ok()?;
    let action = raw.action.parse().ok()?;
    Some(ClassifierReply { action, response_silence_ms: raw.response_silence_ms })
}

/// Prompt-based classifier. Any transport or parse failure falls back to
/// the rule classifier.
pub struct RemoteClassifier {
    backend: Arc<dyn ChatBackend>,
    fallback: RuleClassifier,
}

impl RemoteClassifier {
    pub fn new(backend: Arc<dyn ChatBackend>, fallback: RuleClassifier) -> Self {
        RemoteClassifier { backend, fallback }
    }

    pub fn request(ctx: &ClassifierContext) -> Vec<ChatMessage> {
        let mut user = String::new();
        if !ctx.recent_turns.is_empty() {
            user.push_str("Conversation history:\n");
            for (role, text) in &ctx.recent_turns {
                let tag = match role {
                    Role::User => "user",
                    Role::Assistant => "assistant",
                };
                user.push_str(&format!("{tag}: {text}\n"));
            }
            user.push('\n');
        }
        user.push_str(&format!(
            "\"user_message\": {}",
            serde_json::to_string(ctx.latest_message()).expect("string serializes")
        ));
        vec![ChatMessage::system(classifier_prompt(ctx.persona)), ChatMessage::user(user)]
    }
}

impl Classifier for RemoteClassifier {
    fn classify(&self, ctx: &ClassifierContext, table: &StrategyTable, rng: &mut dyn RngCore) -> ControlSignal {
        match self.backend.complete(&Self::request(ctx)) {
            Ok(reply) => match parse_classifier_reply(&reply) {
                Some(r) => {
                    ControlSignal::new(r.action, r.response_silence_ms.max(0) as u64, SignalSource::Remote, table)
                }
                None => {
                    warn!("unparseable classifier reply, using rules: {reply:?}");
                    self.fallback.classify(ctx, table, rng)
                }
            },
            Err(e) => {
                warn!("remote classifier failed, using rules: {e}");
                self.fallback.classify(ctx, table, rng)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::BackendError;
    use crate::prompts::Persona;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::Mutex;

    struct Canned {
        reply: Result<String, BackendError>,
        seen: Mutex<Vec<Vec<ChatMessage>>>,
    }

    impl ChatBackend for Canned {
        fn complete(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
            self.seen.lock().unwrap().push(messages.to_vec());
            self.reply.clone()
        }
    }

    fn run(reply: Result<String, BackendError>, msg: &str) -> (ControlSignal, Vec<Vec<ChatMessage>>) {
        let backend = Arc::new(Canned { reply, seen: Mutex::new(vec![]) });
        let c = RemoteClassifier::new(backend.clone(), RuleClassifier::default());
        let ctx = ClassifierContext::new(msg, vec![(Role::Assistant, "Hi.".into())], Persona::Career).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = c.classify(&ctx, &StrategyTable::canonical(), &mut rng);
        let seen = backend.seen.lock().unwrap().clone();
        (s, seen)
    }

    #[test]
    fn well_formed_reply() {
        let (s, seen) = run(Ok(r#"{"action":"RESONATE","response_silence_ms":7000}"#.into()), "so much");
        assert_eq!((s.strategy, s.silence_ms, s.source), (Strategy::Resonate, 7000, SignalSource::Remote));
        assert!(seen[0][0].content.contains("empathetic career support assistant chatbot"));
        assert!(seen[0][1].content.ends_with("\"user_message\": \"so much\""));
        assert!(seen[0][1].content.contains("assistant: Hi."));
    }

    #[test]
    fn fenced_reply_parses() {
        let r = parse_classifier_reply("```json\n{ \"action\": \"RE_ENGAGE\", \"response_silence_ms\": 2800 }\n```");
        assert_eq!(r, Some(ClassifierReply { action: Strategy::ReEngage, response_silence_ms: 2800 }));
    }

    #[test]
    fn out_of_range_is_clamped() {
        let (s, _) = run(Ok(r#"{"action":"HOLDING","response_silence_ms":999999}"#.into()), "x y z w");
        // clamp oracle: min(max(v, lo), hi)
        assert_eq!(s.silence_ms, 999_999u64.clamp(3500, 16_000));
        let (s, _) = run(Ok(r#"{"action":"RECONFIRM","response_silence_ms":-5}"#.into()), "x y z w");
        assert_eq!(s.silence_ms, 2500);
    }

    #[test]
    fn malformed_or_failed_falls_back_to_rules() {
        let (s, _) = run(Ok("sure!".into()), "...What should I do?");
        assert_eq!((s.strategy, s.source), (Strategy::Resolve, SignalSource::Rule));
        let (s, _) = run(Ok(r#"{"action":"SHRUG","response_silence_ms":1}"#.into()), "...What should I do?");
        assert_eq!(s.source, SignalSource::Rule);
        let (s, _) =
            run(Err(BackendError::Unavailable { attempts: 3, last: "timeout".into() }), "...What should I do?");
        assert_eq!((s.strategy, s.source), (Strategy::Resolve, SignalSource::Rule));
    }
}
