//! Ground-truth synthetic process data.
//!
//! A base process model (a typed Petri net with identifiers) is extended with
//! behavioural-deviation and recording-error patterns through additive model
//! transformations, simulated as a stochastic timed net, and projected into
//! an observed event log. Every observed event stays linked to the firing that
//! produced it, which is what the assessment oracles consume.

pub mod cli;
pub mod dataset;
pub mod digest;
pub mod fixtures;
pub mod logio;
pub mod net;
pub mod oracle;
pub mod patterns;
pub mod semantics;
pub mod sim;
pub mod transform;

pub use net::{validate_net, Diagnostic, Marking, Net, SCHEMA_VERSION};
pub use semantics::{bounded_language, enabled_bindings, fire, replay, Binding, IdGenerator};
