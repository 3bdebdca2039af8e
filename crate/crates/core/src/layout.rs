// SPDX-License-Identifier: Apache-2.0

//! Default address map, device indices and security-monitor port layout.
//! The SoC builder, the trustlet stub generator and the fixtures all agree
//! on these numbers.

pub const CODE_STORAGE_BASE: u32 = 0x0000_0000;
pub const CODE_STORAGE_SIZE: u32 = 0x1_0000;
pub const BRAM_SIZE: u32 = 0x1_0000;
pub const UART_BASE: u32 = 0x4000_0000;
pub const SD_BASE: u32 = 0x4001_0000;
pub const HASH_BASE: u32 = 0x4002_0000;
pub const RESET_BASE: u32 = 0x4003_0000;
pub const SECURE_STORAGE_BASE: u32 = 0x4004_0000;
pub const SECURE_STORAGE_SIZE: u32 = 0x1000;
pub const MPU_BASE: u32 = 0x4005_0000;
pub const SM_PORT_BASE: u32 = 0x4100_0000;
pub const SM_PORT_STRIDE: u32 = 0x1000;
pub const MAIN_MEMORY_BASE: u32 = 0x8000_0000;
pub const MAIN_MEMORY_SIZE: u32 = 64 << 20;
pub const DEVICE_WINDOW: u32 = 0x1_0000;

pub const SLOTS: usize = 4;

/// BRAM for RVSCP slots 1..=3; slot 0 runs from code storage.
pub const fn bram_base(slot: u8) -> u32 {
    0x1_0000 * slot as u32
}

pub const fn secure_storage_base(slot: u8) -> u32 {
    SECURE_STORAGE_BASE + SECURE_STORAGE_SIZE * slot as u32
}

pub const fn sm_port(core: u8) -> u32 {
    SM_PORT_BASE + SM_PORT_STRIDE * core as u32
}

/// Process identifier used by an RVSCP slot.
pub const fn slot_process(slot: u8) -> u8 {
    slot + 1
}

pub const fn slot_reset_vector(slot: u8) -> u32 {
    if slot == 0 {
        CODE_STORAGE_BASE
    } else {
        bram_base(slot)
    }
}

pub const REE_RESET_VECTOR: u32 = MAIN_MEMORY_BASE;

/// Device indices in registration order.
pub mod dev {
    pub const CODE_STORAGE: u16 = 0;
    pub const BRAM1: u16 = 1;
    pub const BRAM2: u16 = 2;
    pub const BRAM3: u16 = 3;
    pub const UART: u16 = 4;
    pub const SD: u16 = 5;
    pub const HASH: u16 = 6;
    pub const RESET: u16 = 7;
    pub const MPU: u16 = 8;
    pub const SECURE_STORAGE0: u16 = 9;

    pub const fn secure_storage(slot: u8) -> u16 {
        SECURE_STORAGE0 + slot as u16
    }

    pub const NAMES: [&str; 13] = [
        "secure_code_storage",
        "bram1",
        "bram2",
        "bram3",
        "uart",
        "sd",
        "hash",
        "reset",
        "mpu",
        "secure_storage0",
        "secure_storage1",
        "secure_storage2",
        "secure_storage3",
    ];

    pub fn by_name(name: &str) -> Option<u16> {
        NAMES.iter().position(|n| *n == name).map(|i| i as u16)
    }
}

/// Register offsets within a security-monitor command port.
pub mod smport {
    pub const CMD: u32 = 0x00;
    pub const DEVICE: u32 = 0x04;
    pub const ARG: u32 = 0x08;
    pub const COUNT: u32 = 0x0C;
    pub const LIST: u32 = 0x10;
    pub const LIST_LEN: usize = 8;
    pub const RESULT: u32 = 0x30;
    pub const BAD_OP: u32 = 0xFF;

    pub const OP_CONFIGURE: u32 = 1;
    pub const OP_TRANSFER: u32 = 2;
    pub const OP_CLAIM: u32 = 3;
    pub const OP_RELEASE: u32 = 4;
    pub const OP_STATUS: u32 = 5;
    pub const OP_WITHDRAW: u32 = 6;
}
