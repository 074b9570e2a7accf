//! Core of the eyeballing benchmark: random Euclidean instances, an exact
//! solver, deterministic rendering, prompt construction, reply parsing,
//! model backends, prompting strategies and gap statistics.

pub mod backend;
pub mod instances;
pub mod metrics;
pub mod parse;
pub mod prompts;
pub mod render;
pub mod solver;
pub mod strategies;

pub use backend::{Backend, BackendConfig, BackendError, BackendKind, CompletionRequest, RawResponse, TransportStatus};
pub use instances::{Dataset, Instance, Point};
pub use metrics::{GapStats, Group, RunRecord};
pub use parse::{parse_response, ParseOutcome, Status};
pub use prompts::{Part, PromptBundle};
pub use render::{Image, RenderStyle};
pub use solver::{Route, SolvedInstance};
pub use strategies::{Harness, StrategyKind};
