// SPDX-License-Identifier: Apache-2.0

//! Transaction-level model of a heterogeneous RISC-V TEE: identifier-tagged
//! interconnect, security monitor, peripheral firewalls, a sponge-protected
//! secure core with four hardware-scheduled virtual cores, and the trustlet
//! toolchain.

pub mod ident;
pub mod interconnect;
pub mod peripherals;
pub mod secmon;
pub mod cpu;
pub mod layout;
pub mod scfp;
pub mod soc;
