// SPDX-License-Identifier: Apache-2.0

//! Peripheral wrappers (identifier firewall and interrupt routing) and the
//! devices behind them.

mod hash;
mod memory;
mod mpu;
mod reset;
mod sdcard;
mod uart;

pub use hash::*;
pub use memory::Ram;
pub use mpu::*;
pub use reset::*;
pub use sdcard::*;
pub use uart::*;

use thiserror::Error;

use crate::ident::Identifier;
use crate::interconnect::{BusOp, BusRequest, BusResponse, ConfigAction};

/// How a wrapper's ID field may change after construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Binding {
    /// Set and cleared freely by the security monitor.
    Configurable,
    /// Hard-wired at construction; never changes.
    Fixed(Identifier),
    /// Hard-wired core and process. Only the peripheral field can be chosen,
    /// by claiming with a matching core and process, so a trustlet can bind
    /// its storage to a control-flow state.
    Bound { core: u8, process: u8 },
}

impl Binding {
    pub fn admits(&self, id: Identifier) -> bool {
        match *self {
            Binding::Configurable => true,
            Binding::Fixed(f) => f == id,
            Binding::Bound { core, process } => id.core() == core && id.process() == process,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("wrapper identifier is not configurable")]
pub struct NonConfigurable;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Device {
    SecureStorage(Ram),
    /// Readable by instruction fetch only; writable by its owner.
    CodeStorage(Ram),
    Bram(Ram),
    Uart(Uart),
    SdCard(SdCard),
    HashAccel(HashAccel),
    ResetUnit(ResetUnit),
    Mpu(Mpu),
}

impl Device {
    pub fn kind(&self) -> &'static str {
        match self {
            Device::SecureStorage(_) => "secure_storage",
            Device::CodeStorage(_) => "code_storage",
            Device::Bram(_) => "bram",
            Device::Uart(_) => "uart",
            Device::SdCard(_) => "sd",
            Device::HashAccel(_) => "hash",
            Device::ResetUnit(_) => "reset",
            Device::Mpu(_) => "mpu",
        }
    }

    pub fn access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        match self {
            Device::CodeStorage(_) if req.op == BusOp::Read && !req.fetch => {
                BusResponse::slv_err()
            }
            Device::SecureStorage(m) | Device::CodeStorage(m) | Device::Bram(m) => {
                ram_access(m, offset, req)
            }
            Device::Uart(u) => u.access(offset, req),
            Device::SdCard(s) => s.access(offset, req),
            Device::HashAccel(h) => h.access(offset, req),
            Device::ResetUnit(r) => r.access(offset, req),
            Device::Mpu(m) => m.access(offset, req),
        }
    }

    /// Consumes the device's interrupt event, if one was raised.
    pub fn take_irq(&mut self) -> bool {
        match self {
            Device::Uart(u) => u.take_irq(),
            _ => false,
        }
    }

    pub fn take_dma_job(&mut self) -> Option<DmaJob> {
        match self {
            Device::HashAccel(h) => h.take_job(),
            _ => None,
        }
    }

    pub fn complete_dma(&mut self, data: Result<Vec<u8>, ()>) {
        if let Device::HashAccel(h) = self {
            h.complete(data);
        }
    }

    /// Backing memory of memory-like devices.
    pub fn ram(&self) -> Option<&Ram> {
        match self {
            Device::SecureStorage(m) | Device::CodeStorage(m) | Device::Bram(m) => Some(m),
            Device::Mpu(m) => Some(m.memory()),
            _ => None,
        }
    }

    pub fn ram_mut(&mut self) -> Option<&mut Ram> {
        match self {
            Device::SecureStorage(m) | Device::CodeStorage(m) | Device::Bram(m) => Some(m),
            Device::Mpu(m) => Some(m.memory_mut()),
            _ => None,
        }
    }
}

fn ram_access(m: &mut Ram, offset: u32, req: &BusRequest) -> BusResponse {
    match req.op {
        BusOp::Read => m
            .read(offset, req.width)
            .map_or(BusResponse::slv_err(), BusResponse::okay),
        BusOp::Write if m.write(offset, req.width, req.data) => BusResponse::okay(0),
        BusOp::Write => BusResponse::slv_err(),
    }
}

/// The firewall in front of one device.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Wrapper {
    id_field: Option<Identifier>,
    binding: Binding,
    irq_pending: bool,
    device: Device,
}

impl Wrapper {
    pub fn new(binding: Binding, device: Device) -> Self {
        let id_field = match binding {
            Binding::Fixed(id) => Some(id),
            _ => None,
        };
        Self {
            id_field,
            binding,
            irq_pending: false,
            device,
        }
    }

    pub fn id_field(&self) -> Option<Identifier> {
        self.id_field
    }

    pub fn binding(&self) -> Binding {
        self.binding
    }

    pub fn configurable(&self) -> bool {
        !matches!(self.binding, Binding::Fixed(_))
    }

    pub fn irq_pending(&self) -> bool {
        self.irq_pending
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn device_mut(&mut self) -> &mut Device {
        &mut self.device
    }

    /// Would a request carrying `id` pass the firewall right now?
    pub fn admits(&self, id: Identifier) -> bool {
        self.id_field.is_some_and(|f| f.matches(id))
    }

    pub fn handle(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        if self.admits(req.id) {
            self.device.access(offset, req)
        } else {
            BusResponse::slv_err()
        }
    }

    /// Memory path of an MPU-guarded device.
    pub fn guarded_access(&mut self, offset: u32, req: &BusRequest) -> BusResponse {
        match &mut self.device {
            Device::Mpu(m) => m.guarded(offset, req),
            _ => BusResponse::slv_err(),
        }
    }

    pub fn configure(&mut self, action: ConfigAction) -> Result<(), NonConfigurable> {
        match (self.binding, action) {
            (Binding::Fixed(_), _) => Err(NonConfigurable),
            (b, ConfigAction::SetId(id)) if b.admits(id) => {
                self.id_field = Some(id);
                Ok(())
            }
            (_, ConfigAction::SetId(_)) => Err(NonConfigurable),
            (_, ConfigAction::ClearId) => {
                self.id_field = None;
                Ok(())
            }
        }
    }

    pub fn latch_device_irq(&mut self) {
        if self.device.take_irq() {
            self.irq_pending = true;
        }
    }

    /// Raises the interrupt from outside the device (tests, fault injection).
    pub fn raise_irq(&mut self) {
        self.irq_pending = true;
    }

    /// The identifier whose core should receive the pending interrupt; `None`
    /// while nothing is pending or the device is unclaimed (held).
    pub fn route_irq(&self) -> Option<Identifier> {
        self.irq_pending.then_some(self.id_field).flatten()
    }

    pub fn ack_irq(&mut self) {
        self.irq_pending = false;
    }

    /// Programs one MPU region on behalf of `issuer`, which has to pass the
    /// wrapper's firewall.
    pub fn mpu_configure(&mut self, issuer: Identifier, region: MemRegion) -> Result<(), MpuError> {
        if !self.admits(issuer) {
            return Err(MpuError::NotPermitted);
        }
        match &mut self.device {
            Device::Mpu(m) => m.set_region(region),
            _ => Err(MpuError::NotPermitted),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bram() -> Wrapper {
        Wrapper::new(Binding::Configurable, Device::Bram(Ram::new(0x100)))
    }

    #[test]
    fn unclaimed_blocks_everything() {
        let mut w = bram();
        for id in [Identifier::new(0, 0, 0), Identifier::new(1, 3, 9)] {
            assert_eq!(w.handle(0, &BusRequest::read(0, id)), BusResponse::slv_err());
        }
    }

    #[test]
    fn wildcard_and_exact_peripheral() {
        let mut w = bram();
        w.configure(ConfigAction::SetId(Identifier::new(1, 1, 0))).unwrap();
        assert!(w.handle(0, &BusRequest::read(0, Identifier::new(1, 1, 0x2A))).is_okay());
        w.configure(ConfigAction::SetId(Identifier::new(1, 1, 5))).unwrap();
        assert!(!w.handle(0, &BusRequest::read(0, Identifier::new(1, 1, 6))).is_okay());
    }

    #[test]
    fn bindings() {
        let fixed = Identifier::new(1, 1, 0);
        let mut ss = Wrapper::new(Binding::Fixed(fixed), Device::SecureStorage(Ram::new(16)));
        assert_eq!(ss.configure(ConfigAction::SetId(Identifier::new(0, 0, 0))), Err(NonConfigurable));
        assert_eq!(ss.configure(ConfigAction::ClearId), Err(NonConfigurable));
        assert_eq!(ss.id_field(), Some(fixed));

        let mut bound = Wrapper::new(
            Binding::Bound { core: 1, process: 2 },
            Device::SecureStorage(Ram::new(16)),
        );
        assert_eq!(bound.id_field(), None);
        assert!(bound.configure(ConfigAction::SetId(Identifier::new(1, 3, 7))).is_err());
        bound.configure(ConfigAction::SetId(Identifier::new(1, 2, 0x155))).unwrap();
        assert!(bound.admits(Identifier::new(1, 2, 0x155)));
        assert!(!bound.admits(Identifier::new(1, 2, 0x156)));
        bound.configure(ConfigAction::ClearId).unwrap();
        bound.configure(ConfigAction::ClearId).unwrap();
    }

    #[test]
    fn code_storage_is_fetch_only() {
        let vc0 = Identifier::new(1, 1, 0);
        let mut cs = Wrapper::new(Binding::Fixed(vc0), Device::CodeStorage(Ram::new(16)));
        assert!(cs.handle(0, &BusRequest::write(0, 0x13, vc0)).is_okay());
        assert!(!cs.handle(0, &BusRequest::read(0, vc0)).is_okay());
        assert_eq!(cs.handle(0, &BusRequest::fetch(0, vc0)), BusResponse::okay(0x13));
        assert!(!cs.handle(0, &BusRequest::fetch(0, Identifier::new(1, 2, 0))).is_okay());
    }

    #[test]
    fn irq_held_while_unclaimed() {
        let mut w = Wrapper::new(Binding::Configurable, Device::Uart(Uart::default()));
        if let Device::Uart(u) = w.device_mut() {
            u.push_rx(b"x");
        }
        w.latch_device_irq();
        assert!(w.irq_pending());
        assert_eq!(w.route_irq(), None);
        let owner = Identifier::new(1, 2, 0);
        w.configure(ConfigAction::SetId(owner)).unwrap();
        assert_eq!(w.route_irq(), Some(owner));
        w.configure(ConfigAction::ClearId).unwrap();
        assert_eq!(w.route_irq(), None);
    }

    #[test]
    fn mpu_configure_needs_owner() {
        let vc0 = Identifier::new(1, 1, 0);
        let mut w = Wrapper::new(Binding::Configurable, Device::Mpu(Mpu::new(Ram::new(1 << 20))));
        let r = MemRegion {
            index: 0,
            base: 0x8000_0000,
            length: 0x1000,
            allowed: vec![Identifier::new(0, 0, 0)],
            enabled: true,
        };
        assert_eq!(w.mpu_configure(vc0, r.clone()), Err(MpuError::NotPermitted));
        w.configure(ConfigAction::SetId(vc0)).unwrap();
        assert_eq!(
            w.mpu_configure(Identifier::new(0, 0, 0), r.clone()),
            Err(MpuError::NotPermitted)
        );
        w.mpu_configure(vc0.with_peripheral(0x3FF), r).unwrap();
    }
}
