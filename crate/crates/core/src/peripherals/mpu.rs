// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ident::Identifier;
use crate::interconnect::{BusOp, BusRequest, BusResponse, Width};
use crate::peripherals::Ram;

pub const MPU_REGIONS: usize = 16;
pub const MPU_MAX_ALLOWED: usize = 4;

pub const MPU_INDEX: u32 = 0x00;
pub const MPU_BASE: u32 = 0x04;
pub const MPU_LENGTH: u32 = 0x08;
pub const MPU_ALLOW0: u32 = 0x0C;
pub const MPU_CTRL: u32 = 0x1C;
pub const MPU_STATUS: u32 = 0x20;

pub const MPU_CTRL_COMMIT: u32 = 1;
pub const MPU_CTRL_DISABLE: u32 = 2;
/// Set in an ALLOW register to mark the entry as used.
pub const MPU_ALLOW_VALID: u32 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MemRegion {
    pub index: u8,
    pub base: u32,
    pub length: u32,
    pub allowed: Vec<Identifier>,
    #[serde(default = "enabled_default")]
    pub enabled: bool,
}

fn enabled_default() -> bool {
    true
}

impl MemRegion {
    fn end(&self) -> u64 {
        self.base as u64 + self.length as u64
    }

    fn contains(&self, addr: u32, end: u64) -> bool {
        addr >= self.base && end <= self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MpuError {
    #[error("issuer does not own the MPU")]
    NotPermitted,
    #[error("region overlaps an enabled region")]
    Overlap,
    #[error("region index out of range (0..16)")]
    BadIndex,
    #[error("region is empty or wraps the address space")]
    Empty,
    #[error("more than 4 allowed identifiers")]
    TooManyAllowed,
}

impl MpuError {
    fn status(self) -> u32 {
        match self {
            MpuError::NotPermitted => 4,
            MpuError::Overlap => 1,
            MpuError::BadIndex => 2,
            MpuError::Empty | MpuError::TooManyAllowed => 3,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
struct Staging {
    index: u32,
    base: u32,
    length: u32,
    allow: [u32; MPU_MAX_ALLOWED],
}

/// Region table plus the memory it guards. Memory accesses never see the
/// wrapper's ID field; they are judged by the region table alone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mpu {
    regions: Vec<Option<MemRegion>>,
    staging: Staging,
    status: u32,
    memory: Ram,
}

impl Mpu {
    pub fn new(memory: Ram) -> Self {
        Self {
            regions: vec![None; MPU_REGIONS],
            staging: Staging::default(),
            status: 0,
            memory,
        }
    }

    pub fn memory(&self) -> &Ram {
        &self.memory
    }

    pub fn memory_mut(&mut self) -> &mut Ram {
        &mut self.memory
    }

    pub fn regions(&self) -> impl Iterator<Item = &MemRegion> {
        self.regions.iter().flatten()
    }

    /// Allow iff an enabled region wholly contains the access and lists a
    /// matching identifier. Default deny.
    pub fn check(&self, req: &BusRequest) -> bool {
        let end = req.end();
        self.regions.iter().flatten().any(|r| {
            r.enabled && r.contains(req.addr, end) && r.allowed.iter().any(|a| a.matches(req.id))
        })
    }

    pub fn set_region(&mut self, region: MemRegion) -> Result<(), MpuError> {
        let i = region.index as usize;
        if i >= MPU_REGIONS {
            return Err(MpuError::BadIndex);
        }
        if region.allowed.len() > MPU_MAX_ALLOWED {
            return Err(MpuError::TooManyAllowed);
        }
        if region.enabled {
            if region.length == 0 || region.end() > 1 << 32 {
                return Err(MpuError::Empty);
            }
            let overlaps = self.regions.iter().flatten().any(|r| {
                r.index != region.index
                    && r.enabled
                    && (r.base as u64) < region.end()
                    && (region.base as u64) < r.end()
            });
            if overlaps {
                return Err(MpuError::Overlap);
            }
        }
        self.regions[i] = Some(region);
        Ok(())
    }

    pub fn disable(&mut self, index: u8) -> Result<(), MpuError> {
        let slot = self
            .regions
            .get_mut(index as usize)
            .ok_or(MpuError::BadIndex)?;
        if let Some(r) = slot {
            r.enabled = false;
        }
        Ok(())
    }

    /// Register window, reached only through the firewalled wrapper path.
    pub fn access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if req.width != Width::Word {
            return BusResponse::slv_err();
        }
        let s = &mut self.staging;
        match (offset, req.op) {
            (MPU_INDEX, BusOp::Write) => s.index = req.data,
            (MPU_BASE, BusOp::Write) => s.base = req.data,
            (MPU_LENGTH, BusOp::Write) => s.length = req.data,
            (o, BusOp::Write) if (MPU_ALLOW0..MPU_CTRL).contains(&o) => {
                s.allow[((o - MPU_ALLOW0) / 4) as usize] = req.data;
            }
            (MPU_INDEX, BusOp::Read) => return BusResponse::okay(s.index),
            (MPU_BASE, BusOp::Read) => return BusResponse::okay(s.base),
            (MPU_LENGTH, BusOp::Read) => return BusResponse::okay(s.length),
            (o, BusOp::Read) if (MPU_ALLOW0..MPU_CTRL).contains(&o) => {
                return BusResponse::okay(s.allow[((o - MPU_ALLOW0) / 4) as usize]);
            }
            (MPU_STATUS, BusOp::Read) => return BusResponse::okay(self.status),
            (MPU_CTRL, BusOp::Write) => {
                let s = s.clone();
                let result = if s.index >= MPU_REGIONS as u32 {
                    Err(MpuError::BadIndex)
                } else if req.data == MPU_CTRL_COMMIT {
                    let region = MemRegion {
                        index: s.index as u8,
                        base: s.base,
                        length: s.length,
                        allowed: s
                            .allow
                            .iter()
                            .filter(|a| *a & MPU_ALLOW_VALID != 0)
                            .map(|a| Identifier::unpack(*a as u16))
                            .collect(),
                        enabled: true,
                    };
                    self.set_region(region)
                } else if req.data == MPU_CTRL_DISABLE {
                    self.disable(s.index as u8)
                } else {
                    Ok(())
                };
                self.status = result.err().map_or(0, MpuError::status);
            }
            _ => return BusResponse::slv_err(),
        }
        BusResponse::okay(0)
    }

    /// Data path into guarded memory; `offset` is relative to the memory base,
    /// the region check uses the absolute request address.
    pub fn guarded(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if !req.is_aligned() || !self.check(req) {
            return BusResponse::slv_err();
        }
        match req.op {
            BusOp::Read => self
                .memory
                .read(offset, req.width)
                .map_or(BusResponse::slv_err(), BusResponse::okay),
            BusOp::Write => {
                if self.memory.write(offset, req.width, req.data) {
                    BusResponse::okay(0)
                } else {
                    BusResponse::slv_err()
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const REE: Identifier = Identifier::new(0, 0, 0);
    const BASE: u32 = 0x8000_0000;

    fn region(index: u8, base: u32, length: u32, allowed: &[Identifier]) -> MemRegion {
        MemRegion {
            index,
            base,
            length,
            allowed: allowed.to_vec(),
            enabled: true,
        }
    }

    #[test]
    fn containment_and_identity() {
        let mut m = Mpu::new(Ram::new(4 << 20));
        assert!(!m.check(&BusRequest::read(BASE, REE)));
        m.set_region(region(0, BASE, 1 << 20, &[REE])).unwrap();
        assert!(m.check(&BusRequest::read(BASE + 0x10, REE)));
        assert!(!m.check(&BusRequest::read(BASE + 0x10, Identifier::new(1, 1, 7))));
        assert!(!m.check(&BusRequest::read(BASE + (1 << 20), REE)));
        assert!(m.check(&BusRequest::read(BASE + (1 << 20) - 4, REE)));
    }

    #[test]
    fn straddling_access_is_denied() {
        let mut m = Mpu::new(Ram::new(4 << 20));
        m.set_region(region(0, BASE, 0x102, &[REE])).unwrap();
        m.set_region(region(1, BASE + 0x102, 0x100, &[REE])).unwrap();
        let half = BusRequest::read(BASE + 0x100, REE).with_width(Width::Half);
        assert!(m.check(&half));
        // word at 0x100..0x104 spans both regions
        assert!(!m.check(&BusRequest::read(BASE + 0x100, REE)));
    }

    #[test]
    fn table_limits() {
        let mut m = Mpu::new(Ram::new(4 << 20));
        for i in 0..16 {
            m.set_region(region(i, BASE + i as u32 * 0x1000, 0x1000, &[REE]))
                .unwrap();
        }
        assert_eq!(
            m.set_region(region(16, BASE + 0x10_0000, 0x1000, &[REE])),
            Err(MpuError::BadIndex)
        );
        assert_eq!(
            m.set_region(region(3, BASE + 0x800, 0x1000, &[REE])),
            Err(MpuError::Overlap)
        );
        assert_eq!(
            m.set_region(region(3, BASE, 0x1000, &[REE; 5])),
            Err(MpuError::TooManyAllowed)
        );
        m.disable(0).unwrap();
        m.set_region(region(3, BASE, 0x1800, &[REE])).unwrap_err();
        m.set_region(region(3, BASE + 0x3000, 0x1000, &[REE])).unwrap();
    }

    #[test]
    fn register_programming() {
        let mut m = Mpu::new(Ram::new(4 << 20));
        let w = |m: &mut Mpu, o: u32, v: u32| {
            assert!(m.access(o, &BusRequest::write(o, v, REE)).is_okay());
        };
        w(&mut m, MPU_INDEX, 2);
        w(&mut m, MPU_BASE, BASE);
        w(&mut m, MPU_LENGTH, 0x1000);
        w(&mut m, MPU_ALLOW0, MPU_ALLOW_VALID | REE.pack() as u32);
        w(&mut m, MPU_CTRL, MPU_CTRL_COMMIT);
        assert_eq!(m.access(MPU_STATUS, &BusRequest::read(MPU_STATUS, REE)).data, 0);
        assert!(m.guarded(0x10, &BusRequest::write(BASE + 0x10, 9, REE)).is_okay());
        assert_eq!(
            m.guarded(0x10, &BusRequest::read(BASE + 0x10, REE)),
            BusResponse::okay(9)
        );
        w(&mut m, MPU_INDEX, 3);
        w(&mut m, MPU_CTRL, MPU_CTRL_COMMIT);
        assert_eq!(m.access(MPU_STATUS, &BusRequest::read(MPU_STATUS, REE)).data, 1);
        w(&mut m, MPU_INDEX, 17);
        w(&mut m, MPU_CTRL, MPU_CTRL_COMMIT);
        assert_eq!(m.access(MPU_STATUS, &BusRequest::read(MPU_STATUS, REE)).data, 2);
    }
}
