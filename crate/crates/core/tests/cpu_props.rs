// SPDX-License-Identifier: Apache-2.0

//! Core invariants under random instruction streams and the scheduler's
//! round-robin window.

use std::collections::HashMap;

use proptest::prelude::*;

use hectorv::cpu::csr;
use hectorv::cpu::{Hart, HartKind, Rvscp, Step};
use hectorv::ident::Identifier;
use hectorv::interconnect::{BusOp, BusPort, BusRequest, BusResponse};
use hectorv::layout::{slot_process, slot_reset_vector, SLOTS};
use hectorv::scfp::asm::assemble;

/// Word memory that accepts everything and remembers every identifier it saw.
#[derive(Default)]
struct Recorder {
    mem: HashMap<u32, u32>,
    ids: Vec<Identifier>,
}

impl BusPort for Recorder {
    fn submit(&mut self, req: BusRequest) -> BusResponse {
        self.ids.push(req.id);
        let a = req.addr & !3;
        match req.op {
            BusOp::Write => {
                self.mem.insert(a, req.data);
                BusResponse::okay(0)
            }
            _ => BusResponse::okay(self.mem.get(&a).copied().unwrap_or(0)),
        }
    }
}

const OPCODES: [u32; 10] = [0x13, 0x33, 0x03, 0x23, 0x63, 0x6f, 0x67, 0x37, 0x17, 0x73];

fn csrrw(csr: u16, rd: u32, rs1: u32) -> u32 {
    (csr as u32) << 20 | rs1 << 15 | 1 << 12 | rd << 7 | 0x73
}

fn word() -> impl Strategy<Value = u32> {
    let targeted = [csr::PIDSEL, csr::SLOTID, csr::KEYLO, csr::HANDLER, csr::EPC];
    prop_oneof![
        4 => (any::<u32>(), 0..OPCODES.len()).prop_map(|(w, o)| (w & !0x7f) | OPCODES[o]),
        1 => (0..targeted.len(), 0u32..32, 0u32..32).prop_map(move |(c, rd, rs)| csrrw(targeted[c], rd, rs)),
        1 => any::<u32>(),
    ]
}

fn check_run(kind: HartKind, base: u32, words: &[u32]) -> Result<(), TestCaseError> {
    let mut bus = Recorder::default();
    for (i, w) in words.iter().enumerate() {
        bus.mem.insert(base + 4 * i as u32, *w);
    }
    let mut h = Hart::new(kind, base);
    h.reset();
    h.handler = base;
    for _ in 0..400 {
        let step = h.step(&mut bus);
        prop_assert_eq!(h.regs[0], 0);
        prop_assert_eq!(h.pc % 4, 0);
        if matches!(step, Step::Halted(_)) {
            break;
        }
    }
    for id in &bus.ids {
        match kind {
            HartKind::Secure { slot } => {
                prop_assert_eq!(id.core(), 1);
                prop_assert_eq!(id.process(), slot_process(slot));
            }
            HartKind::Ree => prop_assert_eq!(id.core(), 0),
        }
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    /// Software cannot change the hardwired core field, nor the process
    /// field of a secure slot.
    #[test]
    fn random_streams_keep_identity(slot in 0u8..4, words in prop::collection::vec(word(), 1..64)) {
        check_run(HartKind::Secure { slot }, 0x1_0000 * slot as u32, &words)?;
        check_run(HartKind::Ree, 0x8000_0000, &words)?;
    }

    /// With every slot runnable, any window of four quanta holds exactly one
    /// quantum of each slot.
    #[test]
    fn round_robin_windows_are_fair(quantum in 1u32..24) {
        struct Spins(Vec<(u32, Vec<u32>)>);
        impl BusPort for Spins {
            fn submit(&mut self, req: BusRequest) -> BusResponse {
                let (base, w) = self.0.iter().find(|(b, w)| (*b..b + 4 * w.len() as u32).contains(&req.addr)).unwrap();
                BusResponse::okay(w[((req.addr - base) / 4) as usize])
            }
        }
        let mut bus = Spins(
            (0..SLOTS as u8)
                .map(|s| {
                    let b = slot_reset_vector(s);
                    (b, assemble(&format!(".org {b:#x}\nl:\n  addi a0, a0, 1\n  j l\n")).unwrap().words)
                })
                .collect(),
        );
        let mut c = Rvscp::new([true; SLOTS], quantum);
        let order: Vec<u8> = (0..12 * quantum).map(|_| c.step(&mut bus).unwrap().slot).collect();
        let w = 4 * quantum as usize;
        for start in 0..=order.len() - w {
            for s in 0..SLOTS as u8 {
                prop_assert_eq!(order[start..start + w].iter().filter(|&&x| x == s).count(), quantum as usize);
            }
        }
        for (s, h) in c.slots.iter().enumerate() {
            prop_assert_eq!(h.retired, 3 * quantum as u64, "slot {}", s);
        }
    }
}
