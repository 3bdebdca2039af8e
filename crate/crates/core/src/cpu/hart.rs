// SPDX-License-Identifier: Apache-2.0

//! One hardware thread: the REE core or one virtual core of the secure
//! core. Secure harts carry the sponge and decrypt their protected body on
//! fetch; every bus request carries the hart's identifier.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::cpu::csr::{self, cause};
use crate::cpu::decode::{decode, CsrOp, CsrSrc, Instr, LoadOp, StoreOp};
use crate::ident::Identifier;
use crate::interconnect::{BusPort, BusRequest, Width};
use crate::scfp::image::ISR_ROOT;
use crate::scfp::sponge::{absorb, compress_state, decrypt_word, init_state, key_check, trap_entry_state, KeyIv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HartKind {
    Ree,
    Secure { slot: u8 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "halt", rename_all = "snake_case")]
pub enum Halt {
    Ebreak,
    /// A trap with no handler installed, or a synchronous trap inside a
    /// handler.
    Fault { cause: u32, epc: u32, tval: u32 },
    /// Never started.
    Disabled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Running,
    /// Waiting for an interrupt after `wfi`.
    Idle,
    Halted(Halt),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrapInfo {
    pub cause: u32,
    pub epc: u32,
    pub tval: u32,
    pub handler: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    Retired,
    /// Nothing to do: idle without a deliverable interrupt, or halted.
    Stalled,
    Trap(TrapInfo),
    Halted(Halt),
}

/// SCFP configuration CSRs and, once armed, the live sponge.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Scfp {
    pub ivlo: u32,
    pub ivhi: u32,
    pub kchk: u32,
    pub base: u32,
    pub patch_table: u32,
    pub patch_count: u32,
    key_lo: u32,
    armed: bool,
    init: u64,
    sponge: u64,
    saved: u64,
    patches: BTreeMap<(u32, u32), u64>,
}

impl Scfp {
    pub fn armed(&self) -> bool {
        self.armed
    }

    pub fn sponge(&self) -> u64 {
        self.sponge
    }

    pub fn init(&self) -> u64 {
        self.init
    }

    pub fn patches(&self) -> &BTreeMap<(u32, u32), u64> {
        &self.patches
    }

    fn in_body(&self, pc: u32) -> bool {
        self.armed && pc >= self.base && pc < self.patch_table
    }

    /// Arms directly without going through the CSRs or the bus.
    pub fn arm(&mut self, k: KeyIv, base: u32, end: u32, patches: BTreeMap<(u32, u32), u64>) {
        self.ivlo = k.iv as u32;
        self.ivhi = (k.iv >> 32) as u32;
        self.kchk = key_check(k.key);
        self.base = base;
        self.patch_table = end;
        self.armed = true;
        self.init = init_state(k);
        self.sponge = self.init;
        self.patches = patches;
    }
}

type Exc = (u32, u32);

#[derive(Debug, Clone)]
pub struct Hart {
    pub kind: HartKind,
    pub regs: [u32; 32],
    pub pc: u32,
    pub handler: u32,
    pub epc: u32,
    pub cause: u32,
    pub tval: u32,
    pub in_trap: bool,
    /// REE only: process in bits 13..10, peripheral in bits 9..0.
    pub pidsel: u16,
    pub status: Status,
    pub scfp: Scfp,
    /// Pending interrupt causes, delivered lowest first.
    pub pending: BTreeSet<u32>,
    pub retired: u64,
    reset_pc: u32,
}

fn jump_target(t: u32) -> Result<u32, Exc> {
    if t.is_multiple_of(4) {
        Ok(t)
    } else {
        Err((cause::FETCH_MISALIGNED, t))
    }
}

impl Hart {
    pub fn new(kind: HartKind, reset_pc: u32) -> Self {
        Self {
            kind,
            regs: [0; 32],
            pc: reset_pc,
            handler: 0,
            epc: 0,
            cause: 0,
            tval: 0,
            in_trap: false,
            pidsel: 0,
            status: Status::Running,
            scfp: Scfp::default(),
            pending: BTreeSet::new(),
            retired: 0,
            reset_pc,
        }
    }

    /// Back to the reset state; nothing survives.
    pub fn reset(&mut self) {
        *self = Self::new(self.kind, self.reset_pc);
    }

    pub fn reset_pc(&self) -> u32 {
        self.reset_pc
    }

    pub fn reg(&self, r: u8) -> u32 {
        self.regs[r as usize]
    }

    pub fn a0(&self) -> u32 {
        self.regs[10]
    }

    fn set(&mut self, rd: u8, v: u32) {
        if rd != 0 {
            self.regs[rd as usize] = v;
        }
    }

    pub fn is_secure(&self) -> bool {
        matches!(self.kind, HartKind::Secure { .. })
    }

    /// Identifier on every request this hart issues right now. On the secure
    /// core the peripheral field is the digest of the state before the
    /// current instruction, so a data access is tagged with the control-flow
    /// history that led to it.
    pub fn identifier(&self) -> Identifier {
        match self.kind {
            HartKind::Ree => {
                Identifier::new(0, ((self.pidsel >> 10) & 0xF) as u8, self.pidsel & 0x3FF)
            }
            HartKind::Secure { slot } => {
                Identifier::new(1, slot + 1, compress_state(self.scfp.sponge))
            }
        }
    }

    pub fn halted(&self) -> Option<Halt> {
        match self.status {
            Status::Halted(h) => Some(h),
            _ => None,
        }
    }

    pub fn deliverable_irq(&self) -> Option<u32> {
        if self.in_trap || self.handler == 0 || matches!(self.status, Status::Halted(_)) {
            return None;
        }
        self.pending.first().copied()
    }

    pub fn runnable(&self) -> bool {
        match self.status {
            Status::Running => true,
            Status::Idle => self.deliverable_irq().is_some(),
            Status::Halted(_) => false,
        }
    }

    pub fn raise(&mut self, cause: u32) {
        self.pending.insert(cause);
    }

    fn enter_trap(&mut self, cause: u32, epc: u32, tval: u32, saved: u64) -> Step {
        self.epc = epc;
        self.cause = cause;
        self.tval = tval;
        self.scfp.saved = saved;
        self.in_trap = true;
        self.pc = self.handler;
        self.status = Status::Running;
        if self.scfp.armed {
            self.scfp.sponge = trap_entry_state(self.scfp.init, self.handler);
        }
        Step::Trap(TrapInfo {
            cause,
            epc,
            tval,
            handler: self.handler,
        })
    }

    fn exception(&mut self, cause: u32, tval: u32, post: Option<u64>) -> Step {
        let epc = self.pc;
        if self.handler == 0 || self.in_trap {
            let h = Halt::Fault { cause, epc, tval };
            self.epc = epc;
            self.cause = cause;
            self.tval = tval;
            self.status = Status::Halted(h);
            return Step::Halted(h);
        }
        let saved = post.unwrap_or(self.scfp.sponge);
        self.enter_trap(cause, epc, tval, saved)
    }

    pub fn step(&mut self, bus: &mut dyn BusPort) -> Step {
        if let Status::Halted(_) = self.status {
            return Step::Stalled;
        }
        if let Some(c) = self.deliverable_irq() {
            self.pending.remove(&c);
            let (pc, s) = (self.pc, self.scfp.sponge);
            return self.enter_trap(c, pc, 0, s);
        }
        if self.status == Status::Idle {
            return Step::Stalled;
        }

        let pc = self.pc;
        if !pc.is_multiple_of(4) {
            return self.exception(cause::FETCH_FAULT, pc, None);
        }
        let rsp = bus.submit(BusRequest::fetch(pc, self.identifier()));
        if !rsp.is_okay() {
            return self.exception(cause::FETCH_FAULT, pc, None);
        }
        let (plain, post) = if self.scfp.in_body(pc) {
            let (p, s) = decrypt_word(self.scfp.sponge, rsp.data);
            (p, Some(s))
        } else {
            (rsp.data, None)
        };
        let Some(ins) = decode(plain) else {
            return self.exception(cause::ILLEGAL, plain, post);
        };

        let next = pc.wrapping_add(4);
        let result = match ins {
            Instr::Ebreak => {
                self.status = Status::Halted(Halt::Ebreak);
                self.retired += 1;
                return Step::Halted(Halt::Ebreak);
            }
            Instr::Mret => {
                if !self.in_trap {
                    return self.exception(cause::ILLEGAL, plain, post);
                }
                self.in_trap = false;
                self.pc = self.epc;
                if self.scfp.armed {
                    self.scfp.sponge = self.scfp.saved;
                }
                self.retired += 1;
                return Step::Retired;
            }
            Instr::Ecall => Err((cause::ECALL, 0)),
            Instr::Wfi => {
                self.status = Status::Idle;
                Ok(next)
            }
            _ => self.execute(ins, pc, bus),
        };
        match result {
            Err((c, tval)) => self.exception(c, tval, post),
            Ok(np) => {
                if let Some(s) = post {
                    let patch = self.scfp.patches.get(&(pc, np)).copied().unwrap_or(0);
                    self.scfp.sponge = s ^ patch;
                } else if self.scfp.armed {
                    if let Some(p) = self.scfp.patches.get(&(pc, np)) {
                        self.scfp.sponge ^= p;
                    }
                }
                self.pc = np;
                self.retired += 1;
                Step::Retired
            }
        }
    }

    fn execute(&mut self, ins: Instr, pc: u32, bus: &mut dyn BusPort) -> Result<u32, Exc> {
        let next = pc.wrapping_add(4);
        let r = |h: &Self, i: u8| h.regs[i as usize];
        match ins {
            Instr::Lui { rd, imm } => self.set(rd, imm),
            Instr::Auipc { rd, imm } => self.set(rd, pc.wrapping_add(imm)),
            Instr::Jal { rd, off } => {
                let t = jump_target(pc.wrapping_add(off as u32))?;
                self.set(rd, next);
                return Ok(t);
            }
            Instr::Jalr { rd, rs1, off } => {
                let t = jump_target(r(self, rs1).wrapping_add(off as u32) & !1)?;
                self.set(rd, next);
                return Ok(t);
            }
            Instr::Branch { op, rs1, rs2, off } => {
                if op.taken(r(self, rs1), r(self, rs2)) {
                    return jump_target(pc.wrapping_add(off as u32));
                }
            }
            Instr::OpImm { op, rd, rs1, imm } => {
                let v = op.apply(r(self, rs1), imm as u32);
                self.set(rd, v);
            }
            Instr::Op { op, rd, rs1, rs2 } => {
                let v = op.apply(r(self, rs1), r(self, rs2));
                self.set(rd, v);
            }
            Instr::Load { op, rd, rs1, off } => {
                let addr = r(self, rs1).wrapping_add(off as u32);
                let width = match op {
                    LoadOp::Lb | LoadOp::Lbu => Width::Byte,
                    LoadOp::Lh | LoadOp::Lhu => Width::Half,
                    LoadOp::Lw => Width::Word,
                };
                if addr % width.bytes() != 0 {
                    return Err((cause::LOAD_MISALIGNED, addr));
                }
                let rsp = bus.submit(BusRequest::read(addr, self.identifier()).with_width(width));
                if !rsp.is_okay() {
                    return Err((cause::LOAD_FAULT, addr));
                }
                let d = rsp.data;
                let v = match op {
                    LoadOp::Lb => d as u8 as i8 as i32 as u32,
                    LoadOp::Lbu => d & 0xFF,
                    LoadOp::Lh => d as u16 as i16 as i32 as u32,
                    LoadOp::Lhu => d & 0xFFFF,
                    LoadOp::Lw => d,
                };
                self.set(rd, v);
            }
            Instr::Store { op, rs1, rs2, off } => {
                let addr = r(self, rs1).wrapping_add(off as u32);
                let (width, data) = match op {
                    StoreOp::Sb => (Width::Byte, r(self, rs2) & 0xFF),
                    StoreOp::Sh => (Width::Half, r(self, rs2) & 0xFFFF),
                    StoreOp::Sw => (Width::Word, r(self, rs2)),
                };
                if addr % width.bytes() != 0 {
                    return Err((cause::STORE_MISALIGNED, addr));
                }
                let rsp =
                    bus.submit(BusRequest::write(addr, data, self.identifier()).with_width(width));
                if !rsp.is_okay() {
                    return Err((cause::STORE_FAULT, addr));
                }
            }
            Instr::Csr { op, rd, csr, src } => {
                let operand = match src {
                    CsrSrc::Reg(i) => r(self, i),
                    CsrSrc::Imm(v) => v as u32,
                };
                let src_zero = match src {
                    CsrSrc::Reg(i) | CsrSrc::Imm(i) => i == 0,
                };
                let reads = !(op == CsrOp::Rw && rd == 0);
                let writes = op == CsrOp::Rw || !src_zero;
                let old = if reads { self.csr_read(csr)? } else { 0 };
                if writes {
                    let new = match op {
                        CsrOp::Rw => operand,
                        CsrOp::Rs => old | operand,
                        CsrOp::Rc => old & !operand,
                    };
                    self.csr_write(csr, new, bus)?;
                }
                self.set(rd, old);
            }
            Instr::Ecall | Instr::Ebreak | Instr::Mret | Instr::Wfi => unreachable!(),
        }
        Ok(next)
    }

    fn illegal(&self) -> Exc {
        (cause::ILLEGAL, self.pc)
    }

    fn csr_read(&self, n: u16) -> Result<u32, Exc> {
        let secure = self.is_secure();
        Ok(match n {
            csr::HANDLER => self.handler,
            csr::EPC => self.epc,
            csr::CAUSE => self.cause,
            csr::TVAL => self.tval,
            csr::PIDSEL if !secure => self.pidsel as u32,
            csr::SLOTID => match self.kind {
                HartKind::Secure { slot } => slot as u32,
                HartKind::Ree => return Err(self.illegal()),
            },
            csr::IVLO if secure => self.scfp.ivlo,
            csr::IVHI if secure => self.scfp.ivhi,
            csr::KCHK if secure => self.scfp.kchk,
            csr::SCFPBASE if secure => self.scfp.base,
            csr::PATCHES if secure => self.scfp.patch_table,
            csr::PATCHCNT if secure => self.scfp.patch_count,
            _ => return Err(self.illegal()),
        })
    }

    fn csr_write(&mut self, n: u16, v: u32, bus: &mut dyn BusPort) -> Result<(), Exc> {
        let secure = self.is_secure();
        let armed = self.scfp.armed;
        match n {
            csr::HANDLER => self.handler = v & !3,
            csr::EPC => self.epc = v & !3,
            csr::CAUSE => self.cause = v,
            csr::TVAL => self.tval = v,
            csr::PIDSEL if !secure => self.pidsel = (v & 0x3FFF) as u16,
            _ if !secure || armed => return Err(self.illegal()),
            csr::IVLO => self.scfp.ivlo = v,
            csr::IVHI => self.scfp.ivhi = v,
            csr::KCHK => self.scfp.kchk = v,
            csr::SCFPBASE => self.scfp.base = v,
            csr::PATCHES => self.scfp.patch_table = v,
            csr::PATCHCNT => self.scfp.patch_count = v,
            csr::KEYLO => self.scfp.key_lo = v,
            csr::KEYHI => return self.arm_from_csrs(v, bus),
            _ => return Err(self.illegal()),
        }
        Ok(())
    }

    fn arm_from_csrs(&mut self, key_hi: u32, bus: &mut dyn BusPort) -> Result<(), Exc> {
        let key = (key_hi as u64) << 32 | self.scfp.key_lo as u64;
        self.scfp.key_lo = 0;
        if key_check(key) != self.scfp.kchk {
            return Err((cause::KEY_CHECK, 0));
        }
        let id = self.identifier();
        let mut patches = BTreeMap::new();
        for i in 0..self.scfp.patch_count {
            let rec = self.scfp.patch_table.wrapping_add(16 * i);
            let mut w = [0u32; 4];
            for (j, slot) in w.iter_mut().enumerate() {
                let addr = rec.wrapping_add(4 * j as u32);
                let rsp = bus.submit(BusRequest::fetch(addr, id));
                if !rsp.is_okay() {
                    return Err((cause::FETCH_FAULT, addr));
                }
                *slot = rsp.data;
            }
            if w[0] != ISR_ROOT {
                patches.insert((w[0], w[1]), (w[3] as u64) << 32 | w[2] as u64);
            }
        }
        let iv = (self.scfp.ivhi as u64) << 32 | self.scfp.ivlo as u64;
        let (base, end) = (self.scfp.base, self.scfp.patch_table);
        self.scfp.arm(KeyIv::new(key, iv), base, end, patches);
        Ok(())
    }

    /// State the sponge would have after absorbing `plain` at the current
    /// state; exposed for diagnostics.
    pub fn peek_absorb(&self, plain: u32) -> u64 {
        absorb(self.scfp.sponge, plain)
    }
}
