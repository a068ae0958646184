//! Two-rate hierarchical instruction-following runtime.
//!
//! A high-level policy turns open-ended prompts and live interjections into
//! atomic skill commands; a low-level executor turns those commands into
//! timed action chunks against symbolic task simulators. The orchestrator
//! runs both on a virtual clock, and the evaluation harness scores policy
//! variants on scripted user trials.

pub mod datagen;
pub mod domain;
pub mod eval;
pub mod highlevel;
pub mod lowlevel;
pub mod orchestrator;
pub mod simenv;
