// SPDX-License-Identifier: Apache-2.0

//! Sponge-based control-flow protection: the cipher, the assembler, CFG and
//! state assignment, the image format and the build pipeline.

pub mod asm;
pub mod cfg;
pub mod image;
pub mod sponge;
pub mod states;
pub mod toolchain;

pub use image::{decrypt_walk, TrustletImage};
pub use sponge::KeyIv;
pub use toolchain::{build_trustlet, ClaimSpec};
