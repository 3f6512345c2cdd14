//! Hierarchical secure aggregation with cyclic user–relay association.
//!
//! `K` users each hold an input vector over GF(q) and upload coded, masked
//! messages to `B` consecutive relays (cyclically). Each relay forwards the
//! sum of what it received and the server recovers the sum of all inputs,
//! while no relay learns anything about the inputs and the server learns
//! nothing beyond their sum.
//!
//! Layering, bottom to top: [`gf`] → [`topology`] → [`code_design`] →
//! [`key_design`] → [`protocol`] → [`audit`] and [`rates`].

pub mod audit;
pub mod code_design;
pub mod gf;
pub mod key_design;
pub mod protocol;
pub mod rates;
pub mod topology;
