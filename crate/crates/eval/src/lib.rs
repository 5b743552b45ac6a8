//! Reference-generation evaluation: datasets, an OpenAI-compatible client,
//! the multi-turn harness, metrics and comparison reports.

pub mod client;
pub mod dataset;
pub mod harness;
pub mod metrics;
pub mod report;

pub use client::{ChatClient, ChatRequest, ChatResponse, ClientConfig, ClientError, Message, Role};
pub use dataset::{EvalSample, GenOptions};
pub use harness::{run_eval, EvalConfig, EvalError, EvalRun, ExemplarMode, Target};
pub use metrics::{aggregate, eval_sample, EvalResult, MetricsReport};
