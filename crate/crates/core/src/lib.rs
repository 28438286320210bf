//! Core library for distillforge: a distillation-data synthesis engine and
//! guided-sampling toolkit.
//!
//! The crate is organized around three concerns:
//!
//! * **Data synthesis**: attribute-space sampling ([`attributes`]), meta-prompt
//!   rendering and structured-output parsing ([`prompts`]), the editing-task
//!   taxonomy ([`taxonomy`]), and pluggable chat/image backends ([`chat`],
//!   [`images`]).
//! * **Guided decoding**: token masking, classifier-free-guidance blends,
//!   temperature sampling, and autoregressive decode loops ([`guidance`],
//!   [`tokens`]), plus a deterministic toy backend and an independent
//!   brute-force oracle ([`toy`], [`oracle`]).
//! * **Orchestration**: crash-safe job planning, journaling, rate limiting,
//!   and the dataset manifest ([`jobs`], [`journal`], [`orchestrator`],
//!   [`manifest`]).
//!
//! Everything that draws randomness does so through an explicit [`rng::RngState`],
//! so identical seeds produce identical outputs across runs and platforms.

pub mod attributes;
pub mod chat;
pub mod config;
pub mod guidance;
pub mod images;
pub mod jobs;
pub mod journal;
pub mod manifest;
pub mod oracle;
pub mod orchestrator;
pub mod prompts;
pub mod ratelimit;
pub mod rng;
pub mod taxonomy;
pub mod tokens;
pub mod toy;
pub mod vocabulary;

pub use attributes::{AttributeBundle, DecayDistribution, DimensionChoice};
pub use chat::{ChatBackend, ChatError, ChatExchange, ChatRequest, MockChatBackend};
pub use config::RunConfig;
pub use guidance::{
    decode_t2i, decode_ti2i, t2i_guidance, teacher_forced_nll, temperature_sample, ti2i_guidance,
    GuidanceParams, LogitBackend,
};
pub use jobs::{Job, JobKind, JobPayload, JobState};
pub use manifest::{DatasetRecord, EditTripletRecord, StatsReport, T2IRecord};
pub use prompts::{DocumentConcept, MetaPromptKind, PromptContext};
pub use rng::RngState;
pub use taxonomy::{EditTaskSample, EditTaxonomy, SourceRef};
pub use tokens::{ConditioningContext, EmbeddingHandle, MaskMode, MaskPolicy, TokenRole, TokenSeq};
pub use toy::ToyModel;
pub use vocabulary::Vocabulary;
