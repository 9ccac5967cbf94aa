//! Mouse-trajectory similarity toolkit.
//!
//! The crate turns raw cursor logs into fixed-width movement samples, trains
//! a twin-encoder similarity model on same-user/different-user sample pairs,
//! and uses the pairwise scores for continuous authentication and for
//! flagging identity inconsistencies between two recordings.
//!
//! Pipeline stages map one-to-one onto the modules:
//!
//! * [`ingest`] — read cursor logs (several column layouts), normalize to
//!   the unit square, or synthesize deterministic users.
//! * [`preprocess`] — segment, trim, featurize, and window into `(256, 4)`
//!   samples of `[dx, dy, dx/dt, dy/dt]` rows.
//! * [`store`] — on-disk sample store (JSON manifest + flat f32 binary).
//! * [`pairs`] — labelled sample pairs and evaluation splits.
//! * [`model`] — the convolutional/recurrent twin encoder and its trainer.
//! * [`authn`] — base-sample selection, dynamic authentication, and
//!   inconsistency detection between two recordings.
//! * [`eval`] — FAR/FRR, ROC-AUC, threshold curves, report export.
//! * [`cli`] — batch subcommands tying the stages together under one run
//!   configuration, plus run manifests for reproducibility audits.
//!
//! Every stochastic step derives its RNG stream from one root seed, so a
//! fixed seed reproduces results bit-for-bit.

pub mod authn;
pub mod cli;
pub mod eval;
pub mod ingest;
pub mod model;
pub mod pairs;
pub mod preprocess;
pub mod seed;
pub mod store;

pub use ingest::{DatasetManifest, IngestError, NormEvent, RawEvent, UserRecord};
pub use preprocess::{PreprocessConfig, PreprocessError, Sample};
