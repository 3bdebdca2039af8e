// SPDX-License-Identifier: Apache-2.0

//! Whole-system simulation: configuration, the per-tick machine and its
//! event trace.

pub mod config;
pub mod machine;
pub mod trace;

pub use config::{Scenario, SocConfig};
pub use machine::{check_topology, Machine, Outcome, SocError, Stage, TopologyError, Verdict};
pub use trace::{Trace, TraceEvent};
