// SPDX-License-Identifier: Apache-2.0

//! Control-flow graph of an assembled program. Calls are direct, so every
//! return edge is known statically: a `ret` in function `f` returns to the
//! return site of every call to `f`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::cpu::decode::{decode, Instr};
use crate::scfp::asm::Program;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Terminator {
    Fallthrough,
    Branch { target: u32 },
    Jump { target: u32 },
    Call { callee: u32, ret_site: u32 },
    Return,
    /// `ebreak` or `mret`: no static successor.
    Halt,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub label: Option<String>,
    pub start: u32,
    pub words: Vec<u32>,
    pub term: Terminator,
}

impl Block {
    pub fn end(&self) -> u32 {
        self.start + 4 * self.words.len() as u32
    }

    pub fn last_pc(&self) -> u32 {
        self.end() - 4
    }

    pub fn contains(&self, pc: u32) -> bool {
        pc >= self.start && pc < self.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EdgeKind {
    Fallthrough,
    Taken,
    Call,
    Return,
}

/// A real control transfer, keyed like the patch table: `src` is the pc of
/// the transferring instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub src: u32,
    pub dst: u32,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CallSite {
    pub site: u32,
    pub callee: u32,
    pub ret_site: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("program has no instructions")]
    Empty,
    #[error("word at {pc:#x} is not a valid instruction")]
    BadInstruction { pc: u32 },
    #[error("control transfer at {pc:#x} targets {target:#x}, which is not an instruction")]
    BadTarget { pc: u32, target: u32 },
    #[error("execution falls through from {pc:#x} into data or past the end")]
    FallsOff { pc: u32 },
    #[error("indirect jump at {pc:#x}")]
    Indirect { pc: u32 },
    #[error("return at {pc:#x} does not belong to any called function")]
    OrphanReturn { pc: u32 },
    #[error("block at {start:#x} is unreachable")]
    UnreachableBlock { start: u32 },
    #[error("no instruction at {pc:#x} for a state request")]
    NoSuchPc { pc: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub entry: u32,
    pub isr_roots: Vec<u32>,
    /// Sorted by start address.
    pub blocks: Vec<Block>,
    pub edges: Vec<Edge>,
    pub calls: Vec<CallSite>,
    index: BTreeMap<u32, usize>,
}

impl Cfg {
    pub fn build(prog: &Program) -> Result<Self, CfgError> {
        let instrs: BTreeMap<u32, Instr> = (0..prog.words.len())
            .map(|i| prog.origin + 4 * i as u32)
            .filter(|pc| prog.is_instr(*pc))
            .map(|pc| {
                decode(prog.word_at(pc).unwrap())
                    .map(|d| (pc, d))
                    .ok_or(CfgError::BadInstruction { pc })
            })
            .collect::<Result<_, _>>()?;
        if !instrs.contains_key(&prog.entry()) {
            return Err(CfgError::Empty);
        }
        let is_instr = |pc: u32| instrs.contains_key(&pc);

        let mut leaders: BTreeSet<u32> = BTreeSet::new();
        leaders.insert(prog.entry());
        leaders.extend(prog.isr_roots.iter().copied());
        for (&pc, ins) in &instrs {
            if !is_instr(pc.wrapping_sub(4)) {
                leaders.insert(pc);
            }
            let target = match *ins {
                Instr::Branch { off, .. } | Instr::Jal { off, .. } => {
                    Some(pc.wrapping_add(off as u32))
                }
                Instr::Jalr { .. } if !ins.is_return() => return Err(CfgError::Indirect { pc }),
                _ => None,
            };
            if let Some(t) = target {
                if !is_instr(t) {
                    return Err(CfgError::BadTarget { pc, target: t });
                }
                leaders.insert(t);
            }
            if ends_block(ins) && is_instr(pc + 4) {
                leaders.insert(pc + 4);
            }
        }

        let label_of: BTreeMap<u32, &String> =
            prog.symbols.iter().map(|(n, a)| (*a, n)).rev().collect();
        let mut blocks = Vec::new();
        for &start in &leaders {
            let mut pc = start;
            let mut words = Vec::new();
            let term = loop {
                let ins = instrs[&pc];
                words.push(prog.word_at(pc).unwrap());
                let next = pc + 4;
                let need_next = || {
                    if is_instr(next) {
                        Ok(next)
                    } else {
                        Err(CfgError::FallsOff { pc })
                    }
                };
                match ins {
                    Instr::Branch { off, .. } => {
                        need_next()?;
                        break Terminator::Branch {
                            target: pc.wrapping_add(off as u32),
                        };
                    }
                    Instr::Jal { rd: 0, off } => {
                        break Terminator::Jump {
                            target: pc.wrapping_add(off as u32),
                        }
                    }
                    Instr::Jal { rd: 1, off } => {
                        break Terminator::Call {
                            callee: pc.wrapping_add(off as u32),
                            ret_site: need_next()?,
                        }
                    }
                    Instr::Jal { .. } => return Err(CfgError::Indirect { pc }),
                    Instr::Jalr { .. } => break Terminator::Return,
                    Instr::Ebreak | Instr::Mret => break Terminator::Halt,
                    _ => {
                        let n = need_next()?;
                        if leaders.contains(&n) {
                            break Terminator::Fallthrough;
                        }
                        pc = n;
                    }
                }
            };
            blocks.push(Block {
                label: label_of.get(&start).map(|s| s.to_string()),
                start,
                words,
                term,
            });
        }
        let index = blocks
            .iter()
            .enumerate()
            .map(|(i, b)| (b.start, i))
            .collect();
        let mut cfg = Cfg {
            entry: prog.entry(),
            isr_roots: prog.isr_roots.clone(),
            blocks,
            edges: Vec::new(),
            calls: Vec::new(),
            index,
        };
        cfg.link()?;
        Ok(cfg)
    }

    fn link(&mut self) -> Result<(), CfgError> {
        for b in &self.blocks {
            if let Terminator::Call { callee, ret_site } = b.term {
                self.calls.push(CallSite {
                    site: b.last_pc(),
                    callee,
                    ret_site,
                });
            }
        }
        let mut edges = Vec::new();
        for b in &self.blocks {
            let last = b.last_pc();
            let mut push = |dst, kind| {
                edges.push(Edge {
                    src: last,
                    dst,
                    kind,
                })
            };
            match b.term {
                Terminator::Fallthrough => push(b.end(), EdgeKind::Fallthrough),
                Terminator::Branch { target } => {
                    push(b.end(), EdgeKind::Fallthrough);
                    push(target, EdgeKind::Taken);
                }
                Terminator::Jump { target } => push(target, EdgeKind::Taken),
                Terminator::Call { callee, .. } => push(callee, EdgeKind::Call),
                Terminator::Return | Terminator::Halt => {}
            }
        }
        let mut owned_returns = BTreeSet::new();
        let callees: BTreeSet<u32> = self.calls.iter().map(|c| c.callee).collect();
        for &f in &callees {
            for r in self.function_returns(f) {
                owned_returns.insert(r);
                for c in self.calls.iter().filter(|c| c.callee == f) {
                    let e = Edge {
                        src: self.blocks[r].last_pc(),
                        dst: c.ret_site,
                        kind: EdgeKind::Return,
                    };
                    if !edges.contains(&e) {
                        edges.push(e);
                    }
                }
            }
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.term == Terminator::Return && !owned_returns.contains(&i) {
                return Err(CfgError::OrphanReturn { pc: b.last_pc() });
            }
        }
        self.edges = edges;

        let reachable = self.reachable();
        if let Some(b) = self.blocks.iter().find(|b| !reachable.contains(&b.start)) {
            return Err(CfgError::UnreachableBlock { start: b.start });
        }
        Ok(())
    }

    /// Successors within the same function: calls are summarised as an
    /// edge to their return site.
    fn intra_successors(&self, b: &Block) -> Vec<u32> {
        match b.term {
            Terminator::Fallthrough => vec![b.end()],
            Terminator::Branch { target } => vec![b.end(), target],
            Terminator::Jump { target } => vec![target],
            Terminator::Call { ret_site, .. } => vec![ret_site],
            Terminator::Return | Terminator::Halt => vec![],
        }
    }

    /// Indices of the return blocks of the function starting at `f`.
    fn function_returns(&self, f: u32) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        let mut queue = VecDeque::from([f]);
        let mut rets = Vec::new();
        while let Some(s) = queue.pop_front() {
            if !seen.insert(s) {
                continue;
            }
            let i = self.index[&s];
            let b = &self.blocks[i];
            if b.term == Terminator::Return {
                rets.push(i);
            }
            queue.extend(self.intra_successors(b));
        }
        rets
    }

    fn reachable(&self) -> BTreeSet<u32> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<u32> = std::iter::once(self.entry)
            .chain(self.isr_roots.iter().copied())
            .collect();
        while let Some(s) = queue.pop_front() {
            if !seen.insert(s) {
                continue;
            }
            for (dst, _) in self.successors(&self.blocks[self.index[&s]]) {
                queue.push_back(dst);
            }
        }
        seen
    }

    /// Successors in definition order. The flag is false for the summary
    /// edge from a call to its return site, which no instruction executes.
    pub fn successors(&self, b: &Block) -> Vec<(u32, bool)> {
        match b.term {
            Terminator::Call { callee, ret_site } => vec![(ret_site, false), (callee, true)],
            Terminator::Return => {
                let last = b.last_pc();
                self.edges
                    .iter()
                    .filter(|e| e.src == last && e.kind == EdgeKind::Return)
                    .map(|e| (e.dst, true))
                    .collect()
            }
            _ => self.intra_successors(b).into_iter().map(|d| (d, true)).collect(),
        }
    }

    pub fn block(&self, start: u32) -> Option<&Block> {
        self.index.get(&start).map(|&i| &self.blocks[i])
    }

    pub fn block_containing(&self, pc: u32) -> Option<&Block> {
        let (_, &i) = self.index.range(..=pc).next_back()?;
        let b = &self.blocks[i];
        b.contains(pc).then_some(b)
    }

    pub fn instruction_count(&self) -> usize {
        self.blocks.iter().map(|b| b.words.len()).sum()
    }
}

fn ends_block(ins: &Instr) -> bool {
    matches!(
        ins,
        Instr::Branch { .. } | Instr::Jal { .. } | Instr::Jalr { .. } | Instr::Ebreak | Instr::Mret
    )
}
