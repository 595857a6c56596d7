//! Discrete-time simulator and closed-form analysis toolkit for network-coded
//! broadcast to multiple receivers over independent packet-erasure channels.
//!
//! A single sender broadcasts one (possibly coded) packet per slot to R
//! receivers, each of which receives it independently with probability mu.
//! The sender runs a transmission scheme made of two pluggable blocks:
//!
//! * a **rate control scheme** ([`ratectrl`]) deciding each slot whether to
//!   pass a new packet into the transmission queue: Bernoulli baseline,
//!   delay-threshold start/stop, or the dynamic scheme driven by a
//!   throughput/delay decision metric;
//! * a **coding scheme** ([`coding`]) choosing the coefficients of the
//!   outgoing combination: scheme A (oldest unseen packets), scheme B
//!   (minimal combinations over oldest undecoded packets), or random linear
//!   network coding, all satisfying the innovation guarantee.
//!
//! The per-slot engine lives in [`sim`]; it tracks receiver knowledge spaces
//! ([`linalg`]) over GF(2^m) ([`gf`]), classifies every delivery as zero
//! state, leader state, or coefficient based, and aggregates throughput and
//! delivery-delay statistics. [`analytic`] evaluates the matching closed
//! forms (delivery-cycle distribution, stationary state law, zero-state delay
//! estimate, leader model, RLNC delivery probability) so simulation and
//! analysis can cross-validate. [`experiment`] drives sweeps and writes the
//! CSV tables behind the standard figures; the `ncbcast` binary is a thin
//! front end over it.
//!
//! Start with the `examples/` directory: each example exercises one capability
//! end to end.

pub mod analytic;
pub mod coding;
pub mod experiment;
pub mod gf;
pub mod linalg;
pub mod ratectrl;
pub mod rng;
pub mod sim;

pub use gf::{FieldContext, FieldElement};
pub use linalg::{CodedVector, KnowledgeSpace};
pub use sim::{DeliveryMode, Metrics, SimConfig, Simulation, SlotTrace};
