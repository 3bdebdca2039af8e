// SPDX-License-Identifier: Apache-2.0

use std::sync::Arc;

use crate::interconnect::{BusOp, BusRequest, BusResponse};

pub const SD_BLOCK_SIZE: u32 = 512;

pub const SD_BLOCK: u32 = 0x0;
pub const SD_STATUS: u32 = 0x4;
pub const SD_COUNT: u32 = 0x8;
pub const SD_WINDOW: u32 = 0x200;

pub const SD_STATUS_VALID: u32 = 1 << 0;

/// Read-only block device. Writing the block register selects a 512-byte
/// block which is then visible through the data window.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct SdCard {
    image: Arc<[u8]>,
    block: u32,
}

impl SdCard {
    pub fn new(image: impl Into<Arc<[u8]>>) -> Self {
        Self {
            image: image.into(),
            block: 0,
        }
    }

    pub fn image(&self) -> &[u8] {
        &self.image
    }

    pub fn block_count(&self) -> u32 {
        (self.image.len() as u64).div_ceil(SD_BLOCK_SIZE as u64) as u32
    }

    fn block_valid(&self) -> bool {
        self.block < self.block_count()
    }

    pub fn access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if !req.is_aligned() {
            return BusResponse::slv_err();
        }
        match (offset, req.op) {
            (SD_BLOCK, BusOp::Write) => {
                self.block = req.data;
                BusResponse::okay(0)
            }
            (SD_BLOCK, BusOp::Read) => BusResponse::okay(self.block),
            (SD_STATUS, BusOp::Read) => {
                BusResponse::okay(if self.block_valid() { SD_STATUS_VALID } else { 0 })
            }
            (SD_COUNT, BusOp::Read) => BusResponse::okay(self.block_count()),
            (o, BusOp::Read) if (SD_WINDOW..SD_WINDOW + SD_BLOCK_SIZE).contains(&o) => {
                if !self.block_valid() {
                    return BusResponse::slv_err();
                }
                let base = self.block as usize * SD_BLOCK_SIZE as usize + (o - SD_WINDOW) as usize;
                let value = (0..req.width.bytes() as usize).fold(0u32, |acc, i| {
                    acc | (*self.image.get(base + i).unwrap_or(&0) as u32) << (8 * i)
                });
                BusResponse::okay(value)
            }
            _ => BusResponse::slv_err(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ident::Identifier;

    #[test]
    fn block_window_reads_and_rejects_writes() {
        let id = Identifier::new(1, 1, 0);
        let mut img = vec![0u8; 1024];
        img[512..516].copy_from_slice(&0xDEAD_BEEFu32.to_le_bytes());
        let mut sd = SdCard::new(img);
        assert_eq!(sd.block_count(), 2);
        sd.access(SD_BLOCK, &BusRequest::write(SD_BLOCK, 1, id));
        assert_eq!(
            sd.access(SD_WINDOW, &BusRequest::read(SD_WINDOW, id)).data,
            0xDEAD_BEEF
        );
        assert!(!sd
            .access(SD_WINDOW, &BusRequest::write(SD_WINDOW, 0, id))
            .is_okay());
        sd.access(SD_BLOCK, &BusRequest::write(SD_BLOCK, 2, id));
        assert_eq!(sd.access(SD_STATUS, &BusRequest::read(SD_STATUS, id)).data, 0);
        assert!(!sd
            .access(SD_WINDOW, &BusRequest::read(SD_WINDOW, id))
            .is_okay());
    }
}
