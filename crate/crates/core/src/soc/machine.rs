// SPDX-License-Identifier: Apache-2.0

//! The assembled SoC: interconnect, monitor, both cores and the per-tick
//! schedule.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::cpu::csr::cause;
use crate::cpu::hart::{Halt, Hart, HartKind, Step};
use crate::cpu::sched::Rvscp;
use crate::ident::Identifier;
use crate::interconnect::{BusOp, BusPort, BusRequest, BusResponse, DeviceId, Interconnect, Target, Width};
use crate::layout::{self, dev, smport};
use crate::peripherals::{
    Binding, Device, HashAccel, Mpu, Ram, ResetUnit, SdCard, Uart, Wrapper,
};
use crate::scfp::asm::{assemble, AsmError};
use crate::scfp::image::{ImageError, TrustletImage};
use crate::secmon::{SecurityMonitor, SmCommand, SmEvent, SmResult};
use crate::soc::config::{Preload, Scenario, SocConfig};
use crate::soc::trace::{hex, Trace, TraceEvent};

pub const VC0: Identifier = Identifier::new(1, 1, 0);
/// Result codes the boot stages leave in a0 when they give up.
pub const ZSBL_ABORT: u32 = 0xB0;
pub const BBL_ABORT: u32 = 0xB1;

#[derive(Debug, Error)]
pub enum SocError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Asm { path: PathBuf, source: AsmError },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: ImageError },
    #[error("preload at {addr:#x} does not fit any memory")]
    Unmapped { addr: u32 },
    #[error("unknown device `{0}`")]
    UnknownDevice(String),
    #[error("initial command on `{device}` failed: {result:?}")]
    Initial { device: String, result: SmResult },
    #[error("MPU region {index}: {msg}")]
    Region { index: u8, msg: String },
    #[error("slot {0} does not exist")]
    BadSlot(u8),
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TopologyError {
    #[error("device name `{0}` registered twice")]
    DuplicateName(String),
    #[error("main memory at {0:#x} is not behind an MPU")]
    UnguardedMemory(u32),
    #[error("no monitor port for core {0}")]
    MissingMonitor(u8),
}

/// Checks the structural rules every machine obeys: unique device names,
/// main memory reachable only through an MPU, one monitor port per core.
pub fn check_topology(ic: &Interconnect) -> Result<(), TopologyError> {
    let mut seen = std::collections::HashSet::new();
    for d in ic.device_ids() {
        if !seen.insert(ic.name(d)) {
            return Err(TopologyError::DuplicateName(ic.name(d).to_string()));
        }
    }
    for e in ic.map().entries() {
        if let Target::Device(d) | Target::Guarded(d) = e.target {
            let is_mpu = matches!(ic.wrapper(d).device(), Device::Mpu(_));
            let is_main = matches!(e.target, Target::Guarded(_)) && is_mpu;
            let holds_main = e.base as u64 <= layout::MAIN_MEMORY_BASE as u64
                && (layout::MAIN_MEMORY_BASE as u64) < e.base as u64 + e.length as u64;
            if holds_main && !is_main {
                return Err(TopologyError::UnguardedMemory(layout::MAIN_MEMORY_BASE));
            }
        }
    }
    if ic.route(layout::MAIN_MEMORY_BASE).is_none() {
        return Err(TopologyError::UnguardedMemory(layout::MAIN_MEMORY_BASE));
    }
    for c in 0..2u8 {
        let ok = ic
            .map()
            .entries()
            .iter()
            .any(|e| e.target == Target::Monitor(c));
        if !ok {
            return Err(TopologyError::MissingMonitor(c));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Zsbl,
    Bbl,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    BootOk,
    BootAborted {
        stage: Stage,
    },
    TrustletOk,
    Ok,
    /// A core stopped on a trap nobody handled.
    Violation {
        core: u8,
        #[serde(skip_serializing_if = "Option::is_none")]
        slot: Option<u8>,
        cause: u32,
        epc: u32,
    },
    /// Software finished but an expectation did not hold.
    Failed {
        reason: String,
    },
    Timeout {
        ticks: u64,
    },
}

impl Verdict {
    pub fn exit_code(&self) -> i32 {
        match self {
            Verdict::BootOk | Verdict::TrustletOk | Verdict::Ok => 0,
            Verdict::Timeout { .. } => 2,
            _ => 1,
        }
    }
}

/// Final verdict together with the state it was judged on.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Outcome {
    #[serde(flatten)]
    pub verdict: Verdict,
    pub owner: Identifier,
    pub ticks: u64,
}

#[derive(Debug, Clone, Default)]
struct Staging {
    device: u32,
    arg: u32,
    count: u32,
    list: [u32; smport::LIST_LEN],
    result: u32,
}

/// Per-issuer staging registers of the monitor command ports.
#[derive(Debug, Clone, Default)]
struct Ports(HashMap<(u8, u8), Staging>);

/// The data-channel view a core sees: the interconnect plus the monitor
/// ports it cannot route itself.
struct SocBus<'a> {
    ic: &'a mut Interconnect,
    sm: &'a mut SecurityMonitor,
    ports: &'a mut Ports,
    events: &'a mut Vec<SmEvent>,
    trace: &'a mut Trace,
    tick: u64,
}

impl SocBus<'_> {
    fn monitor(&mut self, core: u8, offset: u32, req: &BusRequest) -> BusResponse {
        if req.id.core() != core || req.fetch || req.width != Width::Word {
            return BusResponse::slv_err();
        }
        let st = self
            .ports
            .0
            .entry((req.id.core(), req.id.process()))
            .or_default();
        let list_end = smport::LIST + 4 * smport::LIST_LEN as u32;
        match (req.op, offset) {
            (BusOp::Read, smport::CMD) => return BusResponse::okay(0),
            (BusOp::Read, smport::DEVICE) => return BusResponse::okay(st.device),
            (BusOp::Read, smport::ARG) => return BusResponse::okay(st.arg),
            (BusOp::Read, smport::COUNT) => return BusResponse::okay(st.count),
            (BusOp::Read, o) if (smport::LIST..list_end).contains(&o) => {
                return BusResponse::okay(st.list[((o - smport::LIST) / 4) as usize])
            }
            (BusOp::Read, smport::RESULT) => return BusResponse::okay(st.result),
            (BusOp::Write, smport::DEVICE) => st.device = req.data,
            (BusOp::Write, smport::ARG) => st.arg = req.data,
            (BusOp::Write, smport::COUNT) => st.count = req.data,
            (BusOp::Write, o) if (smport::LIST..list_end).contains(&o) => {
                st.list[((o - smport::LIST) / 4) as usize] = req.data
            }
            (BusOp::Write, smport::CMD) => {
                let cmd = decode_command(req.data, st);
                match cmd {
                    None => st.result = smport::BAD_OP,
                    Some(cmd) => {
                        let (rsp, ev) = self.sm.execute(self.ic, req.id, &cmd);
                        st.result = rsp.register_value();
                        self.trace.push(TraceEvent::SmCommand {
                            tick: self.tick,
                            issuer: req.id,
                            command: cmd,
                            result: rsp.result,
                            value: st.result,
                        });
                        self.events.extend(ev);
                    }
                }
            }
            _ => return BusResponse::slv_err(),
        }
        BusResponse::okay(0)
    }
}

fn packed(v: u32) -> Option<Identifier> {
    (v <= 0x7FFF).then(|| Identifier::unpack(v as u16))
}

fn decode_command(op: u32, st: &Staging) -> Option<SmCommand> {
    let device = DeviceId(u16::try_from(st.device).ok()?);
    Some(match op {
        smport::OP_CONFIGURE => {
            let n = st.count as usize;
            if n > smport::LIST_LEN {
                return None;
            }
            SmCommand::Configure {
                device,
                allowlist: st.list[..n].iter().map(|&w| packed(w)).collect::<Option<_>>()?,
            }
        }
        smport::OP_TRANSFER => SmCommand::TransferOwnership {
            new_owner: packed(st.arg)?,
        },
        smport::OP_CLAIM => SmCommand::Claim {
            device,
            bind: packed(st.arg)?,
        },
        smport::OP_RELEASE => SmCommand::Release { device },
        smport::OP_STATUS => SmCommand::Status { device },
        smport::OP_WITHDRAW => SmCommand::Withdraw { device },
        _ => return None,
    })
}

impl BusPort for SocBus<'_> {
    fn submit(&mut self, req: BusRequest) -> BusResponse {
        let rsp = match self.ic.route(req.addr) {
            Some((e, off)) => match e.target {
                Target::Monitor(c) => self.monitor(c, off, &req),
                _ => self.ic.submit(req),
            },
            None => BusResponse::dec_err(),
        };
        if !req.fetch && self.trace.wants_bus() {
            self.trace.push(TraceEvent::Bus {
                tick: self.tick,
                id: req.id,
                op: req.op,
                addr: hex(req.addr),
                data: hex(if req.op == BusOp::Read { rsp.data } else { req.data }),
                status: rsp.status,
            });
        }
        rsp
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HaltRecord {
    pub tick: u64,
    pub core: u8,
    pub slot: Option<u8>,
    pub halt: Halt,
    pub a0: u32,
}

pub struct Machine {
    pub ic: Interconnect,
    pub sm: SecurityMonitor,
    pub ree: Hart,
    pub rvscp: Rvscp,
    pub trace: Trace,
    pub tick: u64,
    pub uart_out: Vec<u8>,
    pub halts: Vec<HaltRecord>,
    ports: Ports,
    events: Vec<SmEvent>,
    held: [bool; 2],
    ree_enabled: bool,
    uart_rx: Vec<(u64, Vec<u8>)>,
    scenario: Scenario,
    config: SocConfig,
}

/// Builds the default device set in [`layout::dev`] order.
pub fn default_interconnect(
    sd_image: Vec<u8>,
    reset: [bool; 2],
    notice_ticks: Option<u32>,
) -> (Interconnect, crate::interconnect::ConfigMaster) {
    let (mut ic, master) = Interconnect::new();
    fn add(ic: &mut Interconnect, name: &str, binding: Binding, device: Device, base: u32, len: u32) -> DeviceId {
        let id = ic.add_device(name, Wrapper::new(binding, device));
        ic.attach(base, len, Target::Device(id)).expect("default map has no overlaps");
        id
    }
    const WINDOW: u32 = 0x1000;
    add(
        &mut ic,
        dev::NAMES[0],
        Binding::Fixed(VC0),
        Device::CodeStorage(Ram::new(layout::CODE_STORAGE_SIZE)),
        layout::CODE_STORAGE_BASE,
        layout::CODE_STORAGE_SIZE,
    );
    for s in 1..=3u8 {
        add(
            &mut ic,
            dev::NAMES[s as usize],
            Binding::Configurable,
            Device::Bram(Ram::new(layout::BRAM_SIZE)),
            layout::bram_base(s),
            layout::BRAM_SIZE,
        );
    }
    add(&mut ic, "uart", Binding::Configurable, Device::Uart(Uart::default()), layout::UART_BASE, WINDOW);
    add(&mut ic, "sd", Binding::Configurable, Device::SdCard(SdCard::new(sd_image)), layout::SD_BASE, WINDOW);
    add(&mut ic, "hash", Binding::Configurable, Device::HashAccel(HashAccel::default()), layout::HASH_BASE, WINDOW);
    add(
        &mut ic,
        "reset",
        Binding::Configurable,
        Device::ResetUnit(ResetUnit::new(reset, notice_ticks)),
        layout::RESET_BASE,
        WINDOW,
    );
    let mpu = add(
        &mut ic,
        "mpu",
        Binding::Configurable,
        Device::Mpu(Mpu::new(Ram::new(layout::MAIN_MEMORY_SIZE))),
        layout::MPU_BASE,
        WINDOW,
    );
    ic.attach(layout::MAIN_MEMORY_BASE, layout::MAIN_MEMORY_SIZE, Target::Guarded(mpu))
        .expect("default map has no overlaps");
    for s in 0..4u8 {
        let binding = if s == 0 {
            Binding::Fixed(VC0)
        } else {
            Binding::Bound {
                core: 1,
                process: layout::slot_process(s),
            }
        };
        add(
            &mut ic,
            dev::NAMES[dev::secure_storage(s) as usize],
            binding,
            Device::SecureStorage(Ram::new(layout::SECURE_STORAGE_SIZE)),
            layout::secure_storage_base(s),
            layout::SECURE_STORAGE_SIZE,
        );
    }
    for c in 0..2u8 {
        ic.attach(layout::sm_port(c), layout::SM_PORT_STRIDE, Target::Monitor(c))
            .expect("default map has no overlaps");
    }
    (ic, master)
}

fn read_file(base: &Path, p: &Path) -> Result<(PathBuf, Vec<u8>), SocError> {
    let path = base.join(p);
    std::fs::read(&path)
        .map(|b| (path.clone(), b))
        .map_err(|source| SocError::Io { path, source })
}

/// Writes bytes into whatever memory backs `addr`, ignoring firewalls.
pub fn backdoor_load(ic: &mut Interconnect, addr: u32, bytes: &[u8]) -> Result<(), SocError> {
    let (entry, offset) = ic.route(addr).ok_or(SocError::Unmapped { addr })?;
    let dev = match entry.target {
        Target::Device(d) | Target::Guarded(d) => d,
        Target::Monitor(_) => return Err(SocError::Unmapped { addr }),
    };
    let ram = ic
        .wrapper_mut(dev)
        .device_mut()
        .ram_mut()
        .ok_or(SocError::Unmapped { addr })?;
    if ram.load(offset, bytes) {
        Ok(())
    } else {
        Err(SocError::Unmapped { addr })
    }
}

pub fn backdoor_read(ic: &Interconnect, addr: u32, len: u32) -> Option<Vec<u8>> {
    let (entry, offset) = ic.route(addr)?;
    let dev = match entry.target {
        Target::Device(d) | Target::Guarded(d) => d,
        Target::Monitor(_) => return None,
    };
    let ram = ic.wrapper(dev).device().ram()?;
    (offset as u64 + len as u64 <= ram.size() as u64).then(|| ram.bytes(offset, len))
}

fn words_le(words: impl IntoIterator<Item = u32>) -> Vec<u8> {
    words.into_iter().flat_map(|w| w.to_le_bytes()).collect()
}

impl Machine {
    pub fn from_config(config: &SocConfig, base_dir: &Path, mut trace: Trace) -> Result<Self, SocError> {
        let sd = match &config.sd_image {
            Some(p) => read_file(base_dir, p)?.1,
            None => Vec::new(),
        };
        let (mut ic, master) = default_interconnect(
            sd,
            [config.reset.ree, config.reset.rvscp],
            config.reset_notice_ticks,
        );
        check_topology(&ic)?;
        for p in &config.preload {
            match p {
                Preload::Words { addr, words } => {
                    backdoor_load(&mut ic, addr.0, &words_le(words.iter().map(|w| w.0)))?
                }
                Preload::Asm { file, addr } => {
                    let (path, bytes) = read_file(base_dir, file)?;
                    let src = String::from_utf8_lossy(&bytes);
                    let prog = assemble(&src).map_err(|source| SocError::Asm {
                        path: path.clone(),
                        source,
                    })?;
                    let at = addr.map_or(prog.origin, |a| a.0);
                    backdoor_load(&mut ic, at, &prog.to_le_bytes())?;
                }
                Preload::Trustlet {
                    file,
                    addr,
                    count_prefix,
                } => {
                    let (path, bytes) = read_file(base_dir, file)?;
                    let img = TrustletImage::from_bytes(&bytes)
                        .map_err(|source| SocError::Image { path, source })?;
                    let mut words = img.blob_words();
                    if *count_prefix {
                        words.insert(0, words.len() as u32);
                    }
                    let at = addr.map_or(img.load_base(), |a| a.0);
                    backdoor_load(&mut ic, at, &words_le(words))?;
                }
                Preload::Raw { file, addr } => {
                    let (_, bytes) = read_file(base_dir, file)?;
                    backdoor_load(&mut ic, addr.0, &bytes)?;
                }
            }
        }

        let mut sm = SecurityMonitor::new(&ic, master, config.owner, config.sm_timeout);
        let owner = config.owner;
        for init in &config.initial {
            let device = dev::by_name(&init.device)
                .map(DeviceId)
                .ok_or_else(|| SocError::UnknownDevice(init.device.clone()))?;
            let mut cmds = Vec::new();
            if let Some(list) = &init.allowlist {
                cmds.push(SmCommand::Configure {
                    device,
                    allowlist: list.clone(),
                });
            }
            if let Some(bind) = init.bind {
                cmds.push(SmCommand::Claim { device, bind });
            }
            for c in cmds {
                let (rsp, _) = sm.execute(&mut ic, owner, &c);
                trace.push(TraceEvent::SmCommand {
                    tick: 0,
                    issuer: owner,
                    value: rsp.register_value(),
                    command: c,
                    result: rsp.result,
                });
                if rsp.result != SmResult::Ok {
                    return Err(SocError::Initial {
                        device: init.device.clone(),
                        result: rsp.result,
                    });
                }
            }
        }
        for r in &config.mpu_regions {
            match ic.wrapper_mut(DeviceId(dev::MPU)).device_mut() {
                Device::Mpu(m) => m.set_region(r.clone()).map_err(|e| SocError::Region {
                    index: r.index,
                    msg: e.to_string(),
                })?,
                _ => unreachable!("device 8 is the MPU"),
            }
        }

        let mut enabled = [false; layout::SLOTS];
        for &s in &config.slots {
            *enabled.get_mut(s as usize).ok_or(SocError::BadSlot(s))? = true;
        }
        let mut uart_rx: Vec<(u64, Vec<u8>)> = config
            .uart_rx
            .iter()
            .map(|u| (u.tick, u.data.clone().into_bytes()))
            .collect();
        uart_rx.sort_by_key(|(t, _)| std::cmp::Reverse(*t));

        let mut m = Self {
            ic,
            sm,
            ree: Hart::new(HartKind::Ree, layout::REE_RESET_VECTOR),
            rvscp: Rvscp::new(enabled, config.quantum),
            trace,
            tick: 0,
            uart_out: Vec::new(),
            halts: Vec::new(),
            ports: Ports::default(),
            events: Vec::new(),
            held: [config.reset.ree, config.reset.rvscp],
            ree_enabled: config.ree_enabled(),
            uart_rx,
            scenario: config.scenario,
            config: config.clone(),
        };
        if !m.ree_enabled {
            m.ree.status = crate::cpu::hart::Status::Halted(Halt::Disabled);
        }
        Ok(m)
    }

    pub fn config(&self) -> &SocConfig {
        &self.config
    }

    fn reset_lines(&self) -> [bool; 2] {
        match self.ic.wrapper(DeviceId(dev::RESET)).device() {
            Device::ResetUnit(r) => r.lines(),
            _ => unreachable!("device 7 is the reset unit"),
        }
    }

    fn bus(&mut self) -> (SocBus<'_>, &mut Hart, &mut Rvscp) {
        (
            SocBus {
                ic: &mut self.ic,
                sm: &mut self.sm,
                ports: &mut self.ports,
                events: &mut self.events,
                trace: &mut self.trace,
                tick: self.tick,
            },
            &mut self.ree,
            &mut self.rvscp,
        )
    }

    fn record(&mut self, core: u8, slot: Option<u8>, step: Step, a0: u32, pc: u32) {
        match step {
            Step::Trap(t) => self.trace.push(TraceEvent::trap(self.tick, core, slot, &t)),
            Step::Halted(h) => {
                self.trace.push(TraceEvent::Halt {
                    tick: self.tick,
                    core,
                    slot,
                    pc: hex(pc),
                    a0: hex(a0),
                    halt: h,
                });
                self.halts.push(HaltRecord {
                    tick: self.tick,
                    core,
                    slot,
                    halt: h,
                    a0,
                });
            }
            _ => {}
        }
    }

    /// One tick: REE step, secure-core step, monitor tick, reset unit,
    /// interrupt routing, scheduled UART input.
    pub fn step(&mut self) {
        let lines = self.reset_lines();
        for core in 0..2 {
            if lines[core] != self.held[core] {
                self.held[core] = lines[core];
                self.trace.push(TraceEvent::Reset {
                    tick: self.tick,
                    core: core as u8,
                    asserted: lines[core],
                });
                // Entering or leaving reset wipes the core.
                if core == 0 {
                    if self.ree_enabled {
                        self.ree.reset();
                    }
                } else {
                    self.rvscp.reset();
                }
            }
        }

        if !self.held[0] {
            let (mut bus, ree, _) = self.bus();
            let step = ree.step(&mut bus);
            let (a0, pc) = (self.ree.a0(), self.ree.pc);
            self.record(0, None, step, a0, pc);
        }
        if !self.held[1] {
            let (mut bus, _, rvscp) = self.bus();
            if let Some(s) = rvscp.step(&mut bus) {
                if let Some(sw) = s.switch {
                    self.trace.push(TraceEvent::Sched {
                        tick: self.tick,
                        from: sw.from,
                        to: sw.to,
                        forced: sw.forced,
                    });
                }
                let h = &self.rvscp.slots[s.slot as usize];
                let (a0, pc) = (h.a0(), h.pc);
                self.record(1, Some(s.slot), s.step, a0, pc);
            }
        }

        let ev = self.sm.tick_apply(&mut self.ic);
        self.events.extend(ev);
        if let Device::ResetUnit(r) = self.ic.wrapper_mut(DeviceId(dev::RESET)).device_mut() {
            r.tick();
            for core in r.take_notices() {
                let c = cause::device_irq(dev::RESET);
                if core == 0 {
                    self.ree.raise(c);
                } else {
                    self.rvscp.raise(0, c);
                }
            }
        }

        for (d, owner) in self.ic.poll_irqs() {
            self.deliver(owner, cause::device_irq(d.0));
        }
        for e in std::mem::take(&mut self.events) {
            self.trace.push(TraceEvent::SmEvent {
                tick: self.tick,
                event: e,
            });
            if let SmEvent::WithdrawNotify { device, owner } = e {
                self.deliver(owner, cause::withdraw(device.0));
            }
        }

        if let Device::Uart(u) = self.ic.wrapper_mut(DeviceId(dev::UART)).device_mut() {
            let out = u.take_tx();
            if !out.is_empty() {
                self.trace.push(TraceEvent::Uart {
                    tick: self.tick,
                    text: String::from_utf8_lossy(&out).into_owned(),
                });
                self.uart_out.extend_from_slice(&out);
            }
            while self.uart_rx.last().is_some_and(|(t, _)| *t <= self.tick) {
                let (_, data) = self.uart_rx.pop().unwrap();
                u.push_rx(&data);
            }
        }
        self.tick += 1;
    }

    fn deliver(&mut self, owner: Identifier, c: u32) {
        if owner.core() == 0 {
            self.ree.raise(c);
        } else {
            self.rvscp.raise(owner.process(), c);
        }
    }

    pub fn uart_text(&self) -> String {
        String::from_utf8_lossy(&self.uart_out).into_owned()
    }

    fn expectations(&self) -> Result<(), String> {
        let e = &self.config.expect;
        let text = self.uart_text();
        if let Some(u) = &e.uart {
            if &text != u {
                return Err(format!("uart output {text:?}, expected {u:?}"));
            }
        }
        if let Some(u) = &e.uart_contains {
            if !text.contains(u.as_str()) {
                return Err(format!("uart output {text:?} lacks {u:?}"));
            }
        }
        if let Some(o) = e.owner {
            if self.sm.owner() != o {
                return Err(format!("monitor owner {}, expected {o}", self.sm.owner()));
            }
        }
        Ok(())
    }

    /// Verdict from what has happened so far, or `None` to keep running.
    pub fn verdict(&self) -> Option<Verdict> {
        for h in &self.halts {
            if let Halt::Fault { cause, epc, .. } = h.halt {
                return Some(Verdict::Violation {
                    core: h.core,
                    slot: h.slot,
                    cause,
                    epc,
                });
            }
        }
        let ree_halt = self.halts.iter().find(|h| h.core == 0);
        match self.scenario {
            Scenario::SecureBoot => {
                if self
                    .halts
                    .iter()
                    .any(|h| h.core == 1 && h.slot == Some(0) && h.a0 == ZSBL_ABORT)
                {
                    return Some(Verdict::BootAborted { stage: Stage::Zsbl });
                }
                let h = ree_halt?;
                Some(match h.a0 {
                    0 => match self.expectations() {
                        Ok(()) => Verdict::BootOk,
                        Err(reason) => Verdict::Failed { reason },
                    },
                    BBL_ABORT => Verdict::BootAborted { stage: Stage::Bbl },
                    v => Verdict::Failed {
                        reason: format!("REE stopped with a0={v:#x}"),
                    },
                })
            }
            Scenario::Trustlet => {
                let h = ree_halt?;
                Some(match (h.a0, self.expectations()) {
                    (0, Ok(())) => Verdict::TrustletOk,
                    (0, Err(reason)) => Verdict::Failed { reason },
                    (v, _) => Verdict::Failed {
                        reason: format!("REE stopped with a0={v:#x}"),
                    },
                })
            }
            Scenario::Plain => {
                let ree_done = !self.ree_enabled || self.ree.halted().is_some();
                let slots_done = (0..layout::SLOTS as u8)
                    .all(|s| !self.rvscp.enabled(s) || self.rvscp.slots[s as usize].halted().is_some());
                if !(ree_done && slots_done) {
                    return None;
                }
                Some(match self.expectations() {
                    Ok(()) => Verdict::Ok,
                    Err(reason) => Verdict::Failed { reason },
                })
            }
        }
    }

    /// Runs until a verdict or `max_ticks`, then appends the outcome to the
    /// trace.
    pub fn run(&mut self, max_ticks: u64) -> Outcome {
        let verdict = loop {
            if let Some(v) = self.verdict() {
                break v;
            }
            if self.tick >= max_ticks {
                break Verdict::Timeout { ticks: self.tick };
            }
            self.step();
        };
        let out = Outcome {
            verdict,
            owner: self.sm.owner(),
            ticks: self.tick,
        };
        self.trace.push(TraceEvent::Outcome {
            tick: self.tick,
            outcome: out.clone(),
        });
        out
    }

    /// Issues one request on the data channel as if a core had, for
    /// fault-injection tests.
    pub fn inject(&mut self, req: BusRequest) -> BusResponse {
        let (mut bus, _, _) = self.bus();
        bus.submit(req)
    }

    pub fn read_memory(&self, addr: u32, len: u32) -> Option<Vec<u8>> {
        backdoor_read(&self.ic, addr, len)
    }
}
