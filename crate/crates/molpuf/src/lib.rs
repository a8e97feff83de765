//! Simulation of molecular multiplexer-based physical unclonable
//! functions (PUFs) as chemical reaction networks.
//!
//! The crate builds dual-rail multiplexer circuits out of mass-action
//! reactions, chains them into arbiter-style PUF topologies, integrates
//! the resulting stiff ODE systems deterministically, and reduces raw
//! responses to the standard PUF quality metrics (reliability,
//! uniqueness, inter/intra-device Hamming statistics).
//!
//! Module map:
//!
//! - [`crn`]: reaction network representation, text format, validation.
//! - [`linalg`]: banded LU factorization for the implicit integrator.
//! - [`kinetics`]: mass-action derivatives, stiff integration, threshold
//!   events, trajectory export.
//! - [`mux`]: the 16-reaction dual-rail 2-to-1 multiplexer motif.
//! - [`puf`]: multiplexer chains, rate sampling, challenges, environment
//!   perturbations.
//! - [`arbiter`]: race detection between the two output rails and
//!   response/signature generation.
//! - [`delay`]: the additive-delay abstraction of the same circuit for
//!   large-scale statistics.
//! - [`metrics`]: Hamming-distance statistics, reliability, uniqueness,
//!   variation summaries.
//! - [`bundled`]: reference device instances and challenges used by the
//!   regression suite.

pub mod arbiter;
pub mod bundled;
pub mod crn;
pub mod delay;
pub mod kinetics;
pub mod linalg;
pub mod metrics;
pub mod mux;
pub mod puf;

pub use arbiter::{
    evaluate_response, generate_signature, ArbiterConfig, ArbiterMode, ResponseSignature,
};
pub use crn::{Crn, CrnError, Reaction, SpeciesId, Term};
pub use kinetics::{
    integrate, mass_action_rhs, refine_crossing, CrossingEvent, IntegratorConfig, MassAction,
    SampleRetention, State, StopPolicy, Trajectory, Watch,
};
pub use puf::{
    synthesize_puf, Challenge, ConservationPool, EnvironmentCondition, PufInstance, StageMatrix,
};
