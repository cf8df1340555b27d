//! Exact certification toolkit for an inductive system of
//! sphere-product algebras: parameter schedules, the κ interval, Chern-class
//! obstructions, connecting maps and their classes, the odometer
//! automorphism, and replayable failure-of-comparison certificates.

pub mod cohomology;
pub mod comparison;
pub mod diagram;
pub mod dynamics;
pub mod exact;
pub mod pipeline;
pub mod schedule;
pub mod system;

pub use cohomology::{embeds_in_trivial, ObstructionCertificate, Verdict};
pub use comparison::{certify, certify_with_depth, replay, ComparisonCertificate, ReplayReport};
pub use dynamics::{build_automorphism, rokhlin_tower, verify_intertwine, verify_tower};
pub use diagram::emit_dot;
pub use exact::Rational;
pub use pipeline::{run, RunConfig, RunReport};
pub use schedule::{derive_sequences, kappa_interval, validate_schedule, DerivedSequences, KappaInterval, ParameterSchedule};
pub use system::{bott_class, connecting_map, push_class, trace_of_class, ProjectionClass};
