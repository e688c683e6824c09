//! Prompt templates for the remote classifier and generator, and the
//! per-persona common question lists.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::strategy::Strategy;

const CLASSIFIER_TEMPLATE: &str = include_str!("../data/prompts/classifier.txt");
const RESPONSE_TEMPLATE: &str = include_str!("../data/prompts/response.txt");
const BASELINE_TEMPLATE: &str = include_str!("../data/prompts/baseline.txt");

/// Appended to the baseline prompt when the agent checks in after inactivity.
pub const CHECK_IN_INSTRUCTION: &str = "The user has been inactive for a while. Based on the \
conversation so far, write one brief, gentle check-in sentence that invites them to continue \
if they want to. Do not ask more than one question.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Persona {
    Career,
    Relationship,
    #[default]
    Generic,
}

impl Persona {
    /// The role phrase substituted for `{persona}` in the templates.
    pub fn role_phrase(self) -> &'static str {
        match self {
            Persona::Career => "career support assistant",
            Persona::Relationship => "relationship support assistant",
            Persona::Generic => "support assistant",
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Persona::Career => "CAREER",
            Persona::Relationship => "RELATIONSHIP",
            Persona::Generic => "GENERIC",
        }
    }

    /// Clickable common questions offered by the chat client.
    pub fn common_questions(self) -> &'static [&'static str] {
        match self {
            Persona::Career => &[
                "Why do I feel so unmotivated even though I liked this job at first?",
                "What can I do to feel excited about my work again?",
                "Do other people go through this too? How do they deal with it?",
                "What if I\u{2019}m just not good enough for this job?",
                "How can I manage the stress of feeling stuck at work?",
                "What small changes can I make right now to feel better about my job?",
            ],
            Persona::Relationship => &[
                "Why would my partner suddenly act more distant?",
                "How can I talk to my partner about this without making them feel pressured?",
                "Is it normal for couples to have phases like this?",
                "What should I do if I find out they are actually losing interest?",
                "How can I rebuild closeness if we've been feeling distant lately?",
                "What if my fears push them further away? Should I just stay quiet?",
            ],
            Persona::Generic => &[],
        }
    }
}

impl fmt::Display for Persona {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Persona {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "CAREER" => Ok(Persona::Career),
            "RELATIONSHIP" => Ok(Persona::Relationship),
            "GENERIC" => Ok(Persona::Generic),
            other => Err(format!("unknown persona `{other}`")),
        }
    }
}

pub fn classifier_prompt(persona: Persona) -> String {
    CLASSIFIER_TEMPLATE.replace("{persona}", persona.role_phrase())
}

pub fn response_prompt(persona: Persona, action: Strategy) -> String {
    RESPONSE_TEMPLATE.replace("{persona}", persona.role_phrase()).replace("{action}", action.as_str())
}

pub fn baseline_prompt(persona: Persona) -> String {
    BASELINE_TEMPLATE.replace("{persona}", persona.role_phrase())
}
