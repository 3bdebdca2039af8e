// SPDX-License-Identifier: Apache-2.0

//! Instruction-level cores: the REE core and the four-slot secure core.

pub mod csr;
pub mod decode;
pub mod hart;
pub mod sched;

pub use hart::{Halt, Hart, HartKind, Status, Step, TrapInfo};
pub use sched::Rvscp;
