// SPDX-License-Identifier: Apache-2.0

//! The secure core: four virtual cores sharing one pipeline under a
//! hardware round-robin scheduler.

use serde::Serialize;

use crate::cpu::hart::{Halt, Hart, HartKind, Status, Step};
use crate::interconnect::BusPort;
use crate::layout::{slot_reset_vector, SLOTS};

pub const DEFAULT_QUANTUM: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Switch {
    pub from: u8,
    pub to: u8,
    pub forced: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotStep {
    pub slot: u8,
    pub step: Step,
    pub switch: Option<Switch>,
}

#[derive(Debug, Clone)]
pub struct Rvscp {
    pub slots: [Hart; SLOTS],
    enabled: [bool; SLOTS],
    current: usize,
    left: u32,
    quantum: u32,
}

impl Rvscp {
    /// Slots not in `enabled` stay halted even after reset.
    pub fn new(enabled: [bool; SLOTS], quantum: u32) -> Self {
        let slots = std::array::from_fn(|s| {
            Hart::new(HartKind::Secure { slot: s as u8 }, slot_reset_vector(s as u8))
        });
        let mut c = Self {
            slots,
            enabled,
            current: 0,
            left: quantum.max(1),
            quantum: quantum.max(1),
        };
        c.reset();
        c
    }

    pub fn reset(&mut self) {
        for (s, h) in self.slots.iter_mut().enumerate() {
            h.reset();
            if !self.enabled[s] {
                h.status = Status::Halted(Halt::Disabled);
            }
        }
        self.current = self.enabled.iter().position(|e| *e).unwrap_or(0);
        self.left = self.quantum;
    }

    pub fn current(&self) -> u8 {
        self.current as u8
    }

    pub fn enabled(&self, slot: u8) -> bool {
        self.enabled[slot as usize]
    }

    /// Slot an interrupt for `process` goes to: the slot that owns the
    /// process, or for process 0 the lowest enabled slot that is still alive.
    pub fn target_slot(&self, process: u8) -> Option<u8> {
        match process {
            1..=4 => Some(process - 1),
            0 => (0..SLOTS)
                .find(|&s| self.enabled[s] && self.slots[s].halted().is_none())
                .map(|s| s as u8),
            _ => None,
        }
    }

    pub fn raise(&mut self, process: u8, cause: u32) -> Option<u8> {
        let s = self.target_slot(process)?;
        self.slots[s as usize].raise(cause);
        Some(s)
    }

    fn pick(&self) -> Option<(usize, bool)> {
        let cur = self.current;
        if self.slots[cur].deliverable_irq().is_some() {
            return Some((cur, false));
        }
        if let Some(s) = (0..SLOTS).find(|&s| self.slots[s].deliverable_irq().is_some()) {
            return Some((s, true));
        }
        if self.left > 0 && self.slots[cur].runnable() {
            return Some((cur, false));
        }
        (1..=SLOTS)
            .map(|i| (cur + i) % SLOTS)
            .find(|&s| self.slots[s].runnable())
            .map(|s| (s, false))
    }

    /// Runs one instruction (or trap entry) on the selected slot. Returns
    /// `None` when no slot can make progress.
    pub fn step(&mut self, bus: &mut dyn BusPort) -> Option<SlotStep> {
        let (s, forced) = self.pick()?;
        let switch = (s != self.current || self.left == 0).then_some(Switch {
            from: self.current as u8,
            to: s as u8,
            forced,
        });
        if switch.is_some() {
            self.current = s;
            self.left = self.quantum;
        }
        let step = self.slots[s].step(bus);
        self.left = self.left.saturating_sub(1);
        Some(SlotStep {
            slot: s as u8,
            step,
            switch: switch.filter(|w| w.from != w.to),
        })
    }

    pub fn all_halted(&self) -> bool {
        self.slots.iter().all(|h| h.halted().is_some())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpu::csr::cause;
    use crate::interconnect::{BusRequest, BusResponse};
    use crate::scfp::asm::assemble;

    /// Each slot sees its own small program at its reset vector.
    struct Progs(Vec<(u32, Vec<u32>)>);

    impl BusPort for Progs {
        fn submit(&mut self, req: BusRequest) -> BusResponse {
            for (base, words) in &self.0 {
                if req.addr >= *base && req.addr < base + 4 * words.len() as u32 {
                    return BusResponse::okay(words[((req.addr - base) / 4) as usize]);
                }
            }
            BusResponse::okay(0x13)
        }
    }

    fn spin(base: u32) -> (u32, Vec<u32>) {
        (base, assemble(&format!(".org {base:#x}\nl:\n  addi a0, a0, 1\n  j l\n")).unwrap().words)
    }

    #[test]
    fn round_robin_with_quantum() {
        let mut c = Rvscp::new([true, true, false, false], 10);
        let mut bus = Progs(vec![spin(0), spin(0x10000)]);
        let mut order = Vec::new();
        for _ in 0..40 {
            order.push(c.step(&mut bus).unwrap().slot);
        }
        assert_eq!(&order[..10], &[0; 10]);
        assert_eq!(&order[10..20], &[1; 10]);
        assert_eq!(&order[20..30], &[0; 10]);
        assert_eq!(c.slots[2].halted(), Some(Halt::Disabled));
    }

    #[test]
    fn interrupt_forces_switch() {
        let mut c = Rvscp::new([true, true, false, false], 100);
        let mut bus = Progs(vec![spin(0), spin(0x10000)]);
        c.slots[1].handler = 0x10000;
        c.step(&mut bus);
        assert_eq!(c.raise(2, cause::device_irq(4)), Some(1));
        let s = c.step(&mut bus).unwrap();
        assert_eq!(s.slot, 1);
        assert!(s.switch.unwrap().forced);
        assert!(matches!(s.step, Step::Trap(_)));
    }

    #[test]
    fn process_zero_goes_to_lowest_live_slot() {
        let mut c = Rvscp::new([false, true, true, false], 100);
        assert_eq!(c.target_slot(0), Some(1));
        c.slots[1].status = Status::Halted(Halt::Ebreak);
        assert_eq!(c.target_slot(0), Some(2));
        assert_eq!(c.target_slot(3), Some(2));
        assert_eq!(c.target_slot(9), None);
    }

    #[test]
    fn nothing_runnable_idles() {
        let mut c = Rvscp::new([true, false, false, false], 100);
        let mut bus = Progs(vec![(0, assemble("wfi\nebreak").unwrap().words)]);
        assert!(c.step(&mut bus).is_some());
        assert!(c.step(&mut bus).is_none());
    }
}
