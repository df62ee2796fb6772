//! Backend-pluggable pipeline for long-horizon web agents: ReAct trajectory
//! execution with search/browse tools, two-stage challenging-QA synthesis,
//! rejection-sampled trajectory collection, composite reward and
//! group-advantage computation, and Avg@k judged evaluation. Everything
//! runs deterministically against a built-in synthetic web, or against
//! live search/LLM endpoints via the `live` feature.

pub mod llm;
pub mod normalize;
pub mod rollout;
pub mod reward;
pub mod simpolicy;
pub mod simweb;
pub mod synth;
pub mod tools;
pub mod trajectory;
pub mod util;
