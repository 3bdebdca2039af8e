// SPDX-License-Identifier: Apache-2.0

//! CSR numbers. The trap CSRs reuse the machine-mode numbers; the rest sit
//! in the custom read-write (0x7C0..) and read-only (0xFC0..) ranges.

pub const HANDLER: u16 = 0x305;
pub const EPC: u16 = 0x341;
pub const CAUSE: u16 = 0x342;
/// Faulting address or instruction word of the last trap.
pub const TVAL: u16 = 0x343;
/// REE only: process in bits 13..10, peripheral in bits 9..0.
pub const PIDSEL: u16 = 0x7C0;
/// Write-only halves of the SCFP key; writing KEYHI arms the slot.
pub const KEYLO: u16 = 0x7C1;
pub const KEYHI: u16 = 0x7C2;
pub const IVLO: u16 = 0x7C3;
pub const IVHI: u16 = 0x7C4;
/// Expected key-check word.
pub const KCHK: u16 = 0x7C5;
/// First address of the encrypted body.
pub const SCFPBASE: u16 = 0x7C6;
/// Address of the patch table, which is also the end of the body.
pub const PATCHES: u16 = 0x7C7;
pub const PATCHCNT: u16 = 0x7C8;
pub const SLOTID: u16 = 0xFC0;

pub const NAMES: &[(&str, u16)] = &[
    ("handler", HANDLER),
    ("mtvec", HANDLER),
    ("epc", EPC),
    ("mepc", EPC),
    ("cause", CAUSE),
    ("mcause", CAUSE),
    ("tval", TVAL),
    ("mtval", TVAL),
    ("pidsel", PIDSEL),
    ("keylo", KEYLO),
    ("keyhi", KEYHI),
    ("ivlo", IVLO),
    ("ivhi", IVHI),
    ("kchk", KCHK),
    ("scfpbase", SCFPBASE),
    ("patches", PATCHES),
    ("patchcnt", PATCHCNT),
    ("slotid", SLOTID),
];

pub fn by_name(name: &str) -> Option<u16> {
    NAMES
        .iter()
        .find(|(n, _)| n.eq_ignore_ascii_case(name))
        .map(|(_, v)| *v)
}

/// Trap causes as seen in the CAUSE register.
pub mod cause {
    pub const FETCH_MISALIGNED: u32 = 0;
    pub const FETCH_FAULT: u32 = 1;
    pub const ILLEGAL: u32 = 2;
    pub const LOAD_MISALIGNED: u32 = 4;
    pub const LOAD_FAULT: u32 = 5;
    pub const STORE_MISALIGNED: u32 = 6;
    pub const STORE_FAULT: u32 = 7;
    pub const ECALL: u32 = 11;
    pub const KEY_CHECK: u32 = 24;
    pub const INTERRUPT: u32 = 0x8000_0000;
    /// Withdraw notification for the device in the low bits.
    pub const WITHDRAW: u32 = 0x8000_0400;

    pub const fn device_irq(dev: u16) -> u32 {
        INTERRUPT | dev as u32
    }

    pub const fn withdraw(dev: u16) -> u32 {
        WITHDRAW | dev as u32
    }
}
