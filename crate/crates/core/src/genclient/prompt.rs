use serde::{Deserialize, Serialize};

use super::GenError;

pub const SYSTEM_PROMPT: &str = "You are a fiction writer. Continue the story naturally in the same style and voice. Write only story text -- no commentary, no meta-discussion, no preamble, no quotation marks around your continuation.";

pub const USER_TEMPLATE: &str = "Continue this story to its conclusion in approximately {n_words} words. Maintain the same tone, style, and narrative voice throughout. Do not summarize or describe what happens -- write the actual story text as it would appear on the page.\n\nSTORY SO FAR:\n\n{story_so_far}";

/// Output-token budget for a continuation of `target_words` words:
/// `floor(target_words * 1.3 * 1.15)` clamped to `[64, 2048]`.
pub fn decode_budget(target_words: usize) -> u32 {
    // 1.3 * 1.15 = 1.495, evaluated in integers to avoid rounding at .5.
    let raw = target_words.saturating_mul(1495) / 1000;
    raw.clamp(64, 2048) as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingConfig {
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
}

impl DecodingConfig {
    pub fn for_target(target_words: usize) -> Self {
        DecodingConfig {
            temperature: 1.2,
            top_p: 0.95,
            max_tokens: decode_budget(target_words),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interface {
    /// Bare prefix sent to a completions endpoint.
    RawPrefix,
    /// System and user messages sent to a chat endpoint.
    Chat,
    /// Instruction text prepended to the prefix, sent as a plain completion.
    PromptControl,
}

/// Request body content independent of the wire format.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Completion { prompt: String },
    Chat { system: String, user: String },
}

pub fn user_message(target_words: usize, story_so_far: &str) -> String {
    USER_TEMPLATE
        .replace("{n_words}", &target_words.to_string())
        .replace("{story_so_far}", story_so_far)
}

pub fn build_prompt(prefix: &[String], target_words: usize, interface: Interface) -> Result<Payload, GenError> {
    if prefix.is_empty() {
        return Err(GenError::EmptyPrefix);
    }
    let story = prefix.join(" ");
    Ok(match interface {
        Interface::RawPrefix => Payload::Completion { prompt: story },
        Interface::Chat => Payload::Chat {
            system: SYSTEM_PROMPT.to_string(),
            user: user_message(target_words, &story),
        },
        Interface::PromptControl => Payload::Completion {
            prompt: format!("{SYSTEM_PROMPT}\n\n{}", user_message(target_words, &story)),
        },
    })
}
