// SPDX-License-Identifier: Apache-2.0

//! The 64-bit permutation and the per-instruction sponge update.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct KeyIv {
    pub key: u64,
    pub iv: u64,
}

impl KeyIv {
    pub const fn new(key: u64, iv: u64) -> Self {
        Self { key, iv }
    }
}

/// Bijective mixer (splitmix64 finalizer).
pub const fn perm(s: u64) -> u64 {
    let mut x = s;
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

pub const fn init_state(k: KeyIv) -> u64 {
    perm(k.key ^ k.iv)
}

/// Returns (plain, next state).
pub const fn decrypt_word(s: u64, cipher: u32) -> (u32, u64) {
    let plain = cipher ^ s as u32;
    (plain, absorb(s, plain))
}

/// Returns (cipher, next state); the state update absorbs the plaintext, so
/// it is identical to the decrypting side.
pub const fn encrypt_word(s: u64, plain: u32) -> (u32, u64) {
    (plain ^ s as u32, absorb(s, plain))
}

pub const fn absorb(s: u64, plain: u32) -> u64 {
    perm(s ^ plain as u64)
}

/// XOR-fold into 10 bits; a zero fold maps to 0x3FF because peripheral ID 0
/// is the wildcard.
pub const fn compress_state(s: u64) -> u16 {
    let mut fold = 0u64;
    let mut x = s;
    while x != 0 {
        fold ^= x & 0x3FF;
        x >>= 10;
    }
    if fold == 0 {
        0x3FF
    } else {
        fold as u16
    }
}

/// Value the loader compares before arming, so a wrong key is rejected
/// before any encrypted word is fetched.
pub const fn key_check(key: u64) -> u32 {
    perm(key) as u32
}

/// Sponge state at the first instruction of an interrupt or trap handler.
pub const fn trap_entry_state(init: u64, handler: u32) -> u64 {
    perm(init ^ handler as u64)
}
