//! Client for OpenAI-compatible generation and embedding endpoints, with
//! the prompting and token-budget rules used to produce continuations.

mod archive;
mod client;
mod prompt;

pub use archive::{embed_dataset, generate_continuations, write_archive, GenerationJob, GenerationOutcome};
pub use client::{run_concurrent, Client, Endpoint, Generation, RetryPolicy};
pub use prompt::{
    build_prompt, decode_budget, user_message, DecodingConfig, Interface, Payload, SYSTEM_PROMPT, USER_TEMPLATE,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GenError {
    #[error("prompt prefix is empty")]
    EmptyPrefix,
    #[error("embedding batch is empty")]
    EmptyBatch,
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("service returned {status} after {attempts} attempt(s): {body}")]
    Service { status: u16, body: String, attempts: u32 },
    #[error("embedding {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("no embedding returned for input {0}")]
    MissingIndex(usize),
    #[error("malformed response: {0}")]
    Decode(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
