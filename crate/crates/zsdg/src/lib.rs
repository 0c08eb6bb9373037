//! Zero-shot domain generalization, from scratch.
//!
//! Train semantically constrained domain-generalization models on several
//! source domains, then classify both familiar classes and never-seen
//! classes in a held-out domain by nearest-neighbor search against class
//! word embeddings.
//!
//! The crate is organized around the pipeline:
//!
//! * [`autodiff`] — reverse-mode differentiation over dense f64 tensors,
//!   with SGD-momentum and Adam optimizers.
//! * [`embeddings`] — GloVe-format word vectors, the semantic alignment
//!   loss, and prototype nearest-neighbor inference.
//! * [`data`] — IDX/CIFAR ingestion, rotated-domain synthesis, seen/unseen
//!   class splits, seeded batching, and a calibrated synthetic benchmark.
//! * [`models`] — feature extractor, classifier head, per-domain decoder
//!   bank, and feature critic.
//! * [`objectives`] — the semantic aggregation, multi-task autoencoder, and
//!   feature-critic training objectives (vanilla variants are the zero
//!   semantic weight special case).
//! * [`engine`] — deterministic training loop, checkpoints, run records.
//! * [`eval`] — accuracy measurement, multi-seed aggregation, Wilcoxon
//!   signed-rank testing, exact t-SNE projection, CSV/JSON/SVG reports.
//!
//! The `examples/` directory demonstrates each capability end to end; start
//! with `cargo run --example train_s_agg`. The `zsdg` binary wraps the same
//! library calls behind `prepare`/`train`/`sweep`/`tsne`/`report`
//! subcommands.

pub mod autodiff;
pub mod cli;
pub mod data;
pub mod embeddings;
pub mod engine;
pub mod error;
pub mod eval;
pub mod models;
pub mod objectives;
pub mod seeds;

pub use error::{Error, Result};
