//! Simulator for semi-quantum key distribution with one quantum Alice and
//! two classical Bobs holding a 9-level and a 3-level subsystem.
//!
//! The crate covers qudit algebra, the three participants, configurable
//! channels with an exact detection oracle, sifting and the eavesdropping
//! test, layer-1 direct messaging, and an in-process or TCP harness.

pub mod channel;
pub mod harness;
pub mod messaging;
pub mod qudit;
pub mod rng;
pub mod roles;
pub mod sift;
pub mod stats;
pub mod trit;

pub use channel::{ChannelKind, ChannelModel, ChannelPlan, Direction, Link};
pub use harness::{run, HarnessError, Protocol, RunConfig, RunOutcome, Transport};
pub use qudit::{BasisSet, LocalBasis, StateVector};
pub use roles::{BobAction, Category, RoundRecord, Transcript};
pub use sift::RunReport;
pub use trit::TritString;
