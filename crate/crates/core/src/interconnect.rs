// SPDX-License-Identifier: Apache-2.0

//! Transaction-level interconnect: an address decoder in front of the
//! peripheral wrappers, plus the separate configuration channel that only
//! the holder of the [`ConfigMaster`] capability can drive.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::Serialize;
use thiserror::Error;

use crate::ident::Identifier;
use crate::peripherals::{Device, Wrapper};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BusOp {
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Width {
    Byte,
    Half,
    Word,
}

impl Width {
    pub const fn bytes(self) -> u32 {
        match self {
            Width::Byte => 1,
            Width::Half => 2,
            Width::Word => 4,
        }
    }
}

/// One read or write with its user-signal identifier. Sub-word accesses keep
/// the value in the low bits of `data`; [`BusRequest::lane_mask`] gives the
/// corresponding byte lanes of the containing word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BusRequest {
    pub op: BusOp,
    pub addr: u32,
    pub data: u32,
    pub width: Width,
    pub id: Identifier,
    /// Instruction-fetch attribute (AXI ARPROT[2]).
    pub fetch: bool,
}

impl BusRequest {
    pub fn read(addr: u32, id: Identifier) -> Self {
        Self {
            op: BusOp::Read,
            addr,
            data: 0,
            width: Width::Word,
            id,
            fetch: false,
        }
    }

    pub fn write(addr: u32, data: u32, id: Identifier) -> Self {
        Self {
            op: BusOp::Write,
            addr,
            data,
            width: Width::Word,
            id,
            fetch: false,
        }
    }

    pub fn fetch(addr: u32, id: Identifier) -> Self {
        Self {
            fetch: true,
            ..Self::read(addr, id)
        }
    }

    pub fn with_width(mut self, width: Width) -> Self {
        self.width = width;
        self
    }

    pub fn is_aligned(&self) -> bool {
        self.addr.is_multiple_of(self.width.bytes())
    }

    pub fn lane_mask(&self) -> u8 {
        let lanes: u8 = match self.width {
            Width::Byte => 0b0001,
            Width::Half => 0b0011,
            Width::Word => 0b1111,
        };
        lanes << (self.addr & 3)
    }

    pub fn end(&self) -> u64 {
        self.addr as u64 + self.width.bytes() as u64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BusStatus {
    Okay,
    SlvErr,
    DecErr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BusResponse {
    pub status: BusStatus,
    pub data: u32,
}

impl BusResponse {
    pub const fn okay(data: u32) -> Self {
        Self {
            status: BusStatus::Okay,
            data,
        }
    }

    pub const fn slv_err() -> Self {
        Self {
            status: BusStatus::SlvErr,
            data: 0,
        }
    }

    pub const fn dec_err() -> Self {
        Self {
            status: BusStatus::DecErr,
            data: 0,
        }
    }

    pub fn is_okay(&self) -> bool {
        self.status == BusStatus::Okay
    }
}

/// Anything a core can issue bus requests into.
pub trait BusPort {
    fn submit(&mut self, req: BusRequest) -> BusResponse;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct DeviceId(pub u16);

/// What an address range decodes to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    /// Register/data window behind the device's identifier firewall.
    Device(DeviceId),
    /// Memory behind an MPU; checked against its region table instead of the
    /// wrapper's ID field.
    Guarded(DeviceId),
    /// Point-to-point security-monitor command port of one core.
    Monitor(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MapEntry {
    pub base: u32,
    pub length: u32,
    pub target: Target,
}

impl MapEntry {
    fn end(&self) -> u64 {
        self.base as u64 + self.length as u64
    }

    fn contains(&self, addr: u32) -> bool {
        addr >= self.base && (addr as u64) < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("range {base:#010x}+{length:#x} overlaps or is empty")]
pub struct OverlapError {
    pub base: u32,
    pub length: u32,
}

#[derive(Debug, Clone, Default)]
pub struct AddressMap {
    entries: Vec<MapEntry>,
}

impl AddressMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&mut self, base: u32, length: u32, target: Target) -> Result<(), OverlapError> {
        let new = MapEntry {
            base,
            length,
            target,
        };
        let err = OverlapError { base, length };
        if length == 0 || new.end() > 1 << 32 {
            return Err(err);
        }
        if self
            .entries
            .iter()
            .any(|e| (e.base as u64) < new.end() && (base as u64) < e.end())
        {
            return Err(err);
        }
        let at = self.entries.partition_point(|e| e.base < base);
        self.entries.insert(at, new);
        Ok(())
    }

    /// Decodes an address into its entry and the offset within it.
    pub fn route(&self, addr: u32) -> Option<(MapEntry, u32)> {
        let at = self.entries.partition_point(|e| e.base <= addr);
        let entry = *self.entries.get(at.checked_sub(1)?)?;
        entry.contains(addr).then(|| (entry, addr - entry.base))
    }

    pub fn entries(&self) -> &[MapEntry] {
        &self.entries
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "action", content = "id", rename_all = "snake_case")]
pub enum ConfigAction {
    SetId(Identifier),
    ClearId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ConfigCommand {
    pub target: DeviceId,
    #[serde(flatten)]
    pub action: ConfigAction,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("wrapper of device {0:?} is not configurable")]
    NonConfigurable(DeviceId),
    #[error("no device {0:?}")]
    NoSuchDevice(DeviceId),
    #[error("capability does not belong to this interconnect")]
    WrongMaster,
}

static NEXT_BUS: AtomicU64 = AtomicU64::new(1);

/// The single capability allowed to drive the configuration channel.
/// Neither `Clone` nor constructible outside this module.
#[derive(Debug)]
pub struct ConfigMaster {
    bus: u64,
}

#[derive(Debug)]
pub struct Interconnect {
    bus: u64,
    map: AddressMap,
    wrappers: Vec<Wrapper>,
    names: Vec<String>,
}

impl Interconnect {
    /// Creates an empty interconnect together with its one configuration
    /// master capability.
    pub fn new() -> (Self, ConfigMaster) {
        let bus = NEXT_BUS.fetch_add(1, Ordering::Relaxed);
        (
            Self {
                bus,
                map: AddressMap::new(),
                wrappers: Vec::new(),
                names: Vec::new(),
            },
            ConfigMaster { bus },
        )
    }

    /// Registers a wrapped device. Registration order is also the interrupt
    /// priority order.
    pub fn add_device(&mut self, name: impl Into<String>, wrapper: Wrapper) -> DeviceId {
        let id = DeviceId(self.wrappers.len() as u16);
        self.wrappers.push(wrapper);
        self.names.push(name.into());
        id
    }

    pub fn attach(&mut self, base: u32, length: u32, target: Target) -> Result<(), OverlapError> {
        self.map.attach(base, length, target)
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn device_count(&self) -> usize {
        self.wrappers.len()
    }

    pub fn device_ids(&self) -> impl Iterator<Item = DeviceId> {
        (0..self.wrappers.len() as u16).map(DeviceId)
    }

    pub fn name(&self, dev: DeviceId) -> &str {
        &self.names[dev.0 as usize]
    }

    pub fn find(&self, name: &str) -> Option<DeviceId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| DeviceId(i as u16))
    }

    pub fn wrapper(&self, dev: DeviceId) -> &Wrapper {
        &self.wrappers[dev.0 as usize]
    }

    pub fn wrapper_mut(&mut self, dev: DeviceId) -> &mut Wrapper {
        &mut self.wrappers[dev.0 as usize]
    }

    pub fn wrappers(&self) -> impl Iterator<Item = (DeviceId, &Wrapper)> {
        self.wrappers
            .iter()
            .enumerate()
            .map(|(i, w)| (DeviceId(i as u16), w))
    }

    pub fn route(&self, addr: u32) -> Option<(MapEntry, u32)> {
        self.map.route(addr)
    }

    /// Applies one configuration-channel command.
    pub fn config_submit(
        &mut self,
        master: &ConfigMaster,
        cmd: ConfigCommand,
    ) -> Result<(), ConfigError> {
        if master.bus != self.bus {
            return Err(ConfigError::WrongMaster);
        }
        let wrapper = self
            .wrappers
            .get_mut(cmd.target.0 as usize)
            .ok_or(ConfigError::NoSuchDevice(cmd.target))?;
        wrapper
            .configure(cmd.action)
            .map_err(|_| ConfigError::NonConfigurable(cmd.target))
    }

    /// Collects device interrupt events and returns the ones deliverable now,
    /// in registration order, as (device, current owner).
    pub fn poll_irqs(&mut self) -> Vec<(DeviceId, Identifier)> {
        let mut out = Vec::new();
        for (i, w) in self.wrappers.iter_mut().enumerate() {
            w.latch_device_irq();
            if let Some(owner) = w.route_irq() {
                w.ack_irq();
                out.push((DeviceId(i as u16), owner));
            }
        }
        out
    }

    fn run_dma(&mut self, dev: DeviceId) {
        let Some(job) = self.wrappers[dev.0 as usize].device_mut().take_dma_job() else {
            return;
        };
        let mut bytes = Vec::with_capacity(job.len as usize);
        let mut failed = job.src % 4 != 0;
        let mut addr = job.src;
        while !failed && (bytes.len() as u32) < job.len {
            let rsp = self.submit(BusRequest::read(addr, job.id));
            if !rsp.is_okay() {
                failed = true;
                break;
            }
            let take = (job.len as usize - bytes.len()).min(4);
            bytes.extend_from_slice(&rsp.data.to_le_bytes()[..take]);
            addr = addr.wrapping_add(4);
        }
        let result = if failed { Err(()) } else { Ok(bytes) };
        self.wrappers[dev.0 as usize]
            .device_mut()
            .complete_dma(result);
    }
}

impl BusPort for Interconnect {
    /// Routes a data-channel request. The crossbar never produces SlvErr and
    /// never alters the request identifier.
    fn submit(&mut self, req: BusRequest) -> BusResponse {
        let Some((entry, offset)) = self.map.route(req.addr) else {
            return BusResponse::dec_err();
        };
        match entry.target {
            Target::Device(dev) => {
                let rsp = self.wrappers[dev.0 as usize].handle(offset, &req);
                if matches!(
                    self.wrappers[dev.0 as usize].device(),
                    Device::HashAccel(_)
                ) {
                    self.run_dma(dev);
                }
                rsp
            }
            Target::Guarded(dev) => self.wrappers[dev.0 as usize].guarded_access(offset, &req),
            // Monitor ports are serviced by the SoC; a bare interconnect has
            // nothing behind them.
            Target::Monitor(_) => BusResponse::dec_err(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peripherals::{Binding, Ram, Uart};

    const TEE: Identifier = Identifier::new(1, 1, 0);

    fn bram() -> Wrapper {
        Wrapper::new(Binding::Configurable, Device::Bram(Ram::new(0x100)))
    }

    #[test]
    fn attach_then_route() {
        let (mut ic, _m) = Interconnect::new();
        let uart = ic.add_device(
            "uart",
            Wrapper::new(Binding::Configurable, Device::Uart(Uart::default())),
        );
        ic.attach(0x1000, 0x100, Target::Device(uart)).unwrap();
        let (e, off) = ic.route(0x1000).unwrap();
        assert_eq!(e.target, Target::Device(uart));
        assert_eq!(off, 0);
        assert_eq!(
            ic.attach(0x1080, 0x100, Target::Device(uart)),
            Err(OverlapError {
                base: 0x1080,
                length: 0x100
            })
        );
        assert!(ic.attach(0x2000, 0, Target::Device(uart)).is_err());
    }

    #[test]
    fn route_past_end_is_unmapped() {
        let mut map = AddressMap::new();
        map.attach(0x8000_0000, 64 << 20, Target::Guarded(DeviceId(0)))
            .unwrap();
        assert!(map.route(0x83FF_FFFC).is_some());
        assert!(map.route(0x8400_0000).is_none());
        assert!(map.route(0x7FFF_FFFC).is_none());
    }

    #[test]
    fn unmapped_read_is_decerr() {
        let (mut ic, _m) = Interconnect::new();
        let rsp = ic.submit(BusRequest::read(0xFFFF_FFF0, TEE));
        assert_eq!(rsp, BusResponse::dec_err());
    }

    #[test]
    fn claimed_bram_roundtrip_and_mismatch() {
        let (mut ic, master) = Interconnect::new();
        let b = ic.add_device("bram", bram());
        ic.attach(0x1_0000, 0x100, Target::Device(b)).unwrap();
        ic.config_submit(
            &master,
            ConfigCommand {
                target: b,
                action: ConfigAction::SetId(TEE),
            },
        )
        .unwrap();
        let w = ic.submit(BusRequest::write(0x1_0010, 0xCAFE_F00D, TEE.with_peripheral(7)));
        assert!(w.is_okay());
        let r = ic.submit(BusRequest::read(0x1_0010, TEE));
        assert_eq!(r, BusResponse::okay(0xCAFE_F00D));
        let other_core = Identifier::new(0, 1, 0);
        assert_eq!(
            ic.submit(BusRequest::read(0x1_0010, other_core)),
            BusResponse::slv_err()
        );
    }

    #[test]
    fn config_channel_rules() {
        let (mut ic, master) = Interconnect::new();
        let u = ic.add_device(
            "uart",
            Wrapper::new(Binding::Configurable, Device::Uart(Uart::default())),
        );
        let ss = ic.add_device(
            "ss",
            Wrapper::new(Binding::Fixed(TEE), Device::SecureStorage(Ram::new(64))),
        );
        let set = |t, id| ConfigCommand {
            target: t,
            action: ConfigAction::SetId(id),
        };
        let clear = |t| ConfigCommand {
            target: t,
            action: ConfigAction::ClearId,
        };
        ic.config_submit(&master, clear(u)).unwrap();
        ic.config_submit(&master, clear(u)).unwrap();
        ic.config_submit(&master, set(u, Identifier::new(1, 1, 0)))
            .unwrap();
        assert_eq!(ic.wrapper(u).id_field(), Some(Identifier::new(1, 1, 0)));
        assert_eq!(
            ic.config_submit(&master, set(ss, Identifier::new(0, 0, 0))),
            Err(ConfigError::NonConfigurable(ss))
        );
        assert_eq!(
            ic.config_submit(&master, set(DeviceId(9), TEE)),
            Err(ConfigError::NoSuchDevice(DeviceId(9)))
        );

        let (_other, foreign) = Interconnect::new();
        assert_eq!(
            ic.config_submit(&foreign, clear(u)),
            Err(ConfigError::WrongMaster)
        );
    }

    #[test]
    fn lane_masks() {
        let id = TEE;
        assert_eq!(BusRequest::read(0x10, id).lane_mask(), 0b1111);
        assert_eq!(
            BusRequest::read(0x12, id).with_width(Width::Half).lane_mask(),
            0b1100
        );
        assert_eq!(
            BusRequest::read(0x13, id).with_width(Width::Byte).lane_mask(),
            0b1000
        );
        assert!(!BusRequest::read(0x13, id).with_width(Width::Half).is_aligned());
    }
}
