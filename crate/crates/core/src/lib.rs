//! Step-by-step literature survey generation with chat-completion models,
//! plus the evaluation metrics used to score generated surveys.

pub mod cli;
pub mod corpus;
pub mod gateway;
pub mod metrics;
pub mod parse;
pub mod pipeline;
pub mod prompts;
