// SPDX-License-Identifier: Apache-2.0

//! The (core, process, peripheral) identifier carried on every bus request.
//!
//! Wire layout of the 16-bit user word:
//!
//! ```text
//!  15   14   13..10    9..0
//! [0] [core] [process] [peripheral]
//! ```
//!
//! Bit 15 is reserved and always packed as zero; it is ignored on unpack.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CORE_BITS: u32 = 1;
pub const PROCESS_BITS: u32 = 4;
pub const PERIPHERAL_BITS: u32 = 10;

pub const MAX_PROCESS: u8 = (1 << PROCESS_BITS) - 1;
pub const MAX_PERIPHERAL: u16 = (1 << PERIPHERAL_BITS) - 1;

const PERIPHERAL_SHIFT: u32 = 0;
const PROCESS_SHIFT: u32 = PERIPHERAL_BITS;
const CORE_SHIFT: u32 = PERIPHERAL_BITS + PROCESS_BITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum IdentError {
    #[error("core id {0} out of range (0..=1)")]
    Core(u8),
    #[error("process id {0} out of range (0..=15)")]
    Process(u8),
    #[error("peripheral id {0} out of range (0..=1023)")]
    Peripheral(u16),
}

/// Identity of a bus master: which core, which process on it, and the
/// peripheral tag (a software-chosen value on the REE, a CFI-state digest on
/// the secure core).
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Identifier {
    core: u8,
    process: u8,
    peripheral: u16,
}

impl Identifier {
    /// Builds an identifier, panicking on out-of-range fields. Intended for
    /// constants; use [`Identifier::try_new`] for untrusted input.
    pub const fn new(core: u8, process: u8, peripheral: u16) -> Self {
        assert!(core <= 1, "core id out of range");
        assert!(process <= MAX_PROCESS, "process id out of range");
        assert!(peripheral <= MAX_PERIPHERAL, "peripheral id out of range");
        Self {
            core,
            process,
            peripheral,
        }
    }

    pub fn try_new(core: u8, process: u8, peripheral: u16) -> Result<Self, IdentError> {
        if core > 1 {
            return Err(IdentError::Core(core));
        }
        if process > MAX_PROCESS {
            return Err(IdentError::Process(process));
        }
        if peripheral > MAX_PERIPHERAL {
            return Err(IdentError::Peripheral(peripheral));
        }
        Ok(Self {
            core,
            process,
            peripheral,
        })
    }

    pub const fn core(self) -> u8 {
        self.core
    }

    pub const fn process(self) -> u8 {
        self.process
    }

    pub const fn peripheral(self) -> u16 {
        self.peripheral
    }

    pub const fn with_process(self, process: u8) -> Self {
        Self::new(self.core, process, self.peripheral)
    }

    pub const fn with_peripheral(self, peripheral: u16) -> Self {
        Self::new(self.core, self.process, peripheral)
    }

    pub const fn pack(self) -> u16 {
        ((self.core as u16) << CORE_SHIFT)
            | ((self.process as u16) << PROCESS_SHIFT)
            | (self.peripheral << PERIPHERAL_SHIFT)
    }

    pub const fn unpack(word: u16) -> Self {
        Self {
            core: ((word >> CORE_SHIFT) & 0x1) as u8,
            process: ((word >> PROCESS_SHIFT) & MAX_PROCESS as u16) as u8,
            peripheral: (word >> PERIPHERAL_SHIFT) & MAX_PERIPHERAL,
        }
    }

    /// Firewall rule: `self` is the stored identifier, `request` the one on
    /// the bus. Zero process/peripheral fields in the stored identifier are
    /// wildcards; the core field always has to match. Request-side zeros are
    /// ordinary values.
    pub const fn matches(self, request: Identifier) -> bool {
        self.core == request.core
            && (self.process == 0 || self.process == request.process)
            && (self.peripheral == 0 || self.peripheral == request.peripheral)
    }

    /// Core and process equal; the peripheral tag is ignored. Used where the
    /// security monitor compares principals.
    pub const fn same_principal(self, other: Identifier) -> bool {
        self.core == other.core && self.process == other.process
    }
}

impl fmt::Debug for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Id{{{},{},{:#x}}}",
            self.core, self.process, self.peripheral
        )
    }
}

impl fmt::Display for Identifier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#06x}", self.pack())
    }
}

pub fn pack(id: Identifier) -> u16 {
    id.pack()
}

pub fn unpack(word: u16) -> Identifier {
    Identifier::unpack(word)
}

pub fn matches(stored: Identifier, request: Identifier) -> bool {
    stored.matches(request)
}

/// Serialized as the packed hex string, e.g. `"0x4c2a"`.
impl Serialize for Identifier {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{:#06x}", self.pack()))
    }
}

impl<'de> Deserialize<'de> for Identifier {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Packed(String),
            Fields {
                core: u8,
                #[serde(default)]
                process: u8,
                #[serde(default)]
                peripheral: u16,
            },
        }
        match Repr::deserialize(d)? {
            Repr::Packed(s) => {
                let digits = s.trim_start_matches("0x").trim_start_matches("0X");
                let word = u16::from_str_radix(digits, 16).map_err(serde::de::Error::custom)?;
                if word & 0x8000 != 0 {
                    return Err(serde::de::Error::custom("reserved bit 15 set in identifier"));
                }
                Ok(Identifier::unpack(word))
            }
            Repr::Fields {
                core,
                process,
                peripheral,
            } => Identifier::try_new(core, process, peripheral).map_err(serde::de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn all_ids() -> impl Iterator<Item = Identifier> {
        (0..=1u8).flat_map(|c| {
            (0..=MAX_PROCESS)
                .flat_map(move |p| (0..=MAX_PERIPHERAL).map(move |q| Identifier::new(c, p, q)))
        })
    }

    #[test]
    fn pack_examples() {
        assert_eq!(Identifier::new(1, 3, 0x2A).pack(), 0x4C2A);
        assert_eq!(Identifier::new(0, 0, 0).pack(), 0x0000);
        assert_eq!(Identifier::new(1, 15, 1023).pack(), 0x7FFF);
    }

    #[test]
    fn unpack_examples() {
        assert_eq!(Identifier::unpack(0x4C2A), Identifier::new(1, 3, 0x2A));
        assert_eq!(Identifier::unpack(0x8000), Identifier::new(0, 0, 0));
        assert_eq!(Identifier::unpack(0x0400), Identifier::new(0, 1, 0));
    }

    #[test]
    fn match_examples() {
        assert!(Identifier::new(1, 0, 0).matches(Identifier::new(1, 7, 0x1FF)));
        assert!(Identifier::new(1, 2, 5).matches(Identifier::new(1, 2, 5)));
        assert!(!Identifier::new(0, 1, 0).matches(Identifier::new(1, 1, 0)));
    }

    #[test]
    fn roundtrip_is_exhaustively_identity() {
        let mut n = 0;
        for id in all_ids() {
            assert_eq!(Identifier::unpack(id.pack()), id);
            assert_eq!(id.pack() & 0x8000, 0);
            n += 1;
        }
        assert_eq!(n, 1 << 15);
    }

    #[test]
    fn try_new_rejects_out_of_range() {
        assert_eq!(Identifier::try_new(2, 0, 0), Err(IdentError::Core(2)));
        assert_eq!(Identifier::try_new(0, 16, 0), Err(IdentError::Process(16)));
        assert_eq!(
            Identifier::try_new(0, 0, 1024),
            Err(IdentError::Peripheral(1024))
        );
    }

    #[test]
    fn request_side_zero_is_not_a_wildcard() {
        let stored = Identifier::new(1, 2, 5);
        assert!(!stored.matches(Identifier::new(1, 0, 5)));
        assert!(!stored.matches(Identifier::new(1, 2, 0)));
    }

    #[test]
    fn serde_uses_packed_hex() {
        let id = Identifier::new(1, 3, 0x2A);
        let s = serde_json::to_string(&id).unwrap();
        assert_eq!(s, "\"0x4c2a\"");
        let back: Identifier = serde_json::from_str(&s).unwrap();
        assert_eq!(back, id);
        let fields: Identifier =
            serde_json::from_str(r#"{"core":1,"process":3,"peripheral":42}"#).unwrap();
        assert_eq!(fields, id);
        assert!(serde_json::from_str::<Identifier>("\"0x8000\"").is_err());
    }

    fn arb_id() -> impl Strategy<Value = Identifier> {
        (0..=1u8, 0..=MAX_PROCESS, 0..=MAX_PERIPHERAL)
            .prop_map(|(c, p, q)| Identifier::new(c, p, q))
    }

    proptest! {
        #[test]
        fn reflexive_on_nonzero_fields(c in 0..=1u8, p in 1..=MAX_PROCESS, q in 1..=MAX_PERIPHERAL) {
            let id = Identifier::new(c, p, q);
            prop_assert!(id.matches(id));
        }

        #[test]
        fn wildcarding_is_monotone(stored in arb_id(), req in arb_id()) {
            if stored.matches(req) {
                prop_assert!(stored.with_process(0).matches(req));
                prop_assert!(stored.with_peripheral(0).matches(req));
                prop_assert!(stored.with_process(0).with_peripheral(0).matches(req));
            }
        }

        #[test]
        fn core_is_never_wildcarded(stored in arb_id(), req in arb_id()) {
            let other = Identifier::new(1 - stored.core(), req.process(), req.peripheral());
            prop_assert!(!stored.matches(other));
        }

        #[test]
        fn unpack_ignores_reserved_bit(word in any::<u16>()) {
            prop_assert_eq!(Identifier::unpack(word), Identifier::unpack(word & 0x7FFF));
        }
    }
}
