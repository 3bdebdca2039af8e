// SPDX-License-Identifier: Apache-2.0

//! Sponge state assignment over the CFG and the patch words that reconcile
//! every join.

use std::collections::{BTreeMap, VecDeque};

use crate::scfp::cfg::{Cfg, CfgError};
use crate::scfp::sponge::{absorb, init_state, trap_entry_state, KeyIv};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateMap {
    pub init: u64,
    /// Entry state per block start.
    pub entry: BTreeMap<u32, u64>,
    /// Exit state per block start, after absorbing the whole block.
    pub exit: BTreeMap<u32, u64>,
    /// Keyed by (transferring pc, destination).
    pub patches: BTreeMap<(u32, u32), u64>,
}

impl StateMap {
    /// State in force just before `pc` is fetched.
    pub fn state_before(&self, cfg: &Cfg, pc: u32) -> Result<u64, CfgError> {
        let b = cfg.block_containing(pc).ok_or(CfgError::NoSuchPc { pc })?;
        let n = ((pc - b.start) / 4) as usize;
        Ok(b.words[..n]
            .iter()
            .fold(self.entry[&b.start], |s, &w| absorb(s, w)))
    }
}

/// Breadth-first from the entry and the ISR roots. The first edge to reach a
/// block defines its entry state; every other real edge gets a patch, even
/// when it happens to be zero, so the runtime never needs to guess.
pub fn assign_states(cfg: &Cfg, k: KeyIv) -> StateMap {
    let init = init_state(k);
    let mut entry = BTreeMap::new();
    let mut exit = BTreeMap::new();
    let mut patches = BTreeMap::new();
    let mut queue = VecDeque::new();

    entry.insert(cfg.entry, init);
    queue.push_back(cfg.entry);
    for &r in &cfg.isr_roots {
        if entry.contains_key(&r) {
            continue;
        }
        entry.insert(r, trap_entry_state(init, r));
        queue.push_back(r);
    }

    while let Some(u) = queue.pop_front() {
        let b = cfg.block(u).expect("block start");
        let out = b.words.iter().fold(entry[&u], |s, &w| absorb(s, w));
        exit.insert(u, out);
        for (v, real) in cfg.successors(b) {
            match entry.get(&v) {
                // A return site reached through a summary edge must not
                // share the callee's entry state, or its first instruction
                // would carry the callee's tag.
                None if !real => {
                    entry.insert(v, absorb(out, v));
                    queue.push_back(v);
                }
                None => {
                    entry.insert(v, out);
                    queue.push_back(v);
                }
                Some(&ev) if real => {
                    patches.insert((b.last_pc(), v), out ^ ev);
                }
                Some(_) => {}
            }
        }
    }

    StateMap {
        init,
        entry,
        exit,
        patches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scfp::asm::assemble;
    use crate::scfp::cfg::EdgeKind;

    const K: KeyIv = KeyIv::new(0x1111_2222_3333_4444, 0x5555_6666_7777_8888);

    fn run(src: &str) -> (Cfg, StateMap) {
        let cfg = Cfg::build(&assemble(src).unwrap()).unwrap();
        let sm = assign_states(&cfg, K);
        (cfg, sm)
    }

    /// Every real edge must land on the destination's entry state, either
    /// directly or through its patch.
    fn check_edges(cfg: &Cfg, sm: &StateMap) {
        for e in &cfg.edges {
            let src_block = cfg.block_containing(e.src).unwrap();
            let out = sm.exit[&src_block.start];
            let patch = sm.patches.get(&(e.src, e.dst)).copied().unwrap_or(0);
            assert_eq!(out ^ patch, sm.entry[&e.dst], "edge {e:?}");
        }
    }

    #[test]
    fn straight_line_needs_no_patches() {
        let (cfg, sm) = run("addi a0, x0, 1\naddi a0, a0, 1\nebreak");
        assert!(sm.patches.is_empty());
        check_edges(&cfg, &sm);
    }

    #[test]
    fn loop_back_edge_is_patched() {
        let (cfg, sm) = run("  li t0, 3\nl:\n  addi t0, t0, -1\n  bnez t0, l\n  ebreak\n");
        assert_eq!(sm.patches.len(), 1);
        check_edges(&cfg, &sm);
    }

    #[test]
    fn diamond_join_is_patched_once() {
        let (cfg, sm) = run(
            "  beqz a0, else\n  addi a1, x0, 1\n  j join\nelse:\n  addi a1, x0, 2\njoin:\n  ebreak\n",
        );
        assert_eq!(sm.patches.len(), 1);
        check_edges(&cfg, &sm);
    }

    #[test]
    fn two_call_sites_patch_second_call_and_every_return() {
        let (cfg, sm) = run("main:\n  call f\n  call f\n  ebreak\nf:\n  addi a0, a0, 1\n  ret\n");
        check_edges(&cfg, &sm);
        let calls = cfg.edges.iter().filter(|e| e.kind == EdgeKind::Call).count();
        let rets = cfg.edges.iter().filter(|e| e.kind == EdgeKind::Return).count();
        // The first call defines f; the second is patched. Return sites were
        // defined by summary edges, so both returns are patched.
        assert_eq!(sm.patches.len(), (calls - 1) + rets);
    }

    #[test]
    fn return_site_does_not_share_callee_state() {
        let (cfg, sm) = run("main:\n  call f\n  ebreak\nf:\n  ret\n");
        check_edges(&cfg, &sm);
        let f = cfg.blocks.iter().find(|b| b.label.as_deref() == Some("f")).unwrap();
        let site = sm.state_before(&cfg, cfg.entry + 4).unwrap();
        assert_ne!(site, sm.entry[&f.start]);
    }

    #[test]
    fn isr_root_starts_from_trap_entry_state() {
        let (cfg, sm) = run("  wfi\n  ebreak\n.isr h\nh:\n  mret\n");
        let h = cfg.isr_roots[0];
        assert_eq!(sm.entry[&h], trap_entry_state(sm.init, h));
        check_edges(&cfg, &sm);
    }

    #[test]
    fn state_before_matches_block_walk() {
        let (cfg, sm) = run("addi a0, x0, 1\naddi a0, a0, 1\nebreak");
        let w = &cfg.blocks[0].words;
        assert_eq!(sm.state_before(&cfg, 0).unwrap(), sm.init);
        assert_eq!(
            sm.state_before(&cfg, 8).unwrap(),
            absorb(absorb(sm.init, w[0]), w[1])
        );
    }
}
