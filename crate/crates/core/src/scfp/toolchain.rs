// SPDX-License-Identifier: Apache-2.0

//! Source to trustlet image: assemble, build the CFG, assign states, encrypt,
//! and prepend a plaintext boot stub that arms the slot and claims devices.

use serde::Deserialize;
use thiserror::Error;

use crate::ident::Identifier;
use crate::layout::{self, dev, smport};
use crate::scfp::asm::{assemble, AsmError, Program};
use crate::scfp::cfg::{Cfg, CfgError};
use crate::scfp::image::{ClaimRecord, PatchRecord, TrustletImage, ISR_ROOT};
use crate::scfp::sponge::{compress_state, encrypt_word, key_check, KeyIv};
use crate::scfp::states::{assign_states, StateMap};

/// Device name that resolves to the secure storage of whichever slot runs
/// the trustlet.
pub const OWN_SECURE_STORAGE: &str = "secure_storage";

/// One entry of a claims file. The peripheral tag is either the CFI digest
/// of the state at `state` (a label) or an explicit value; without either
/// the claim admits any instruction of the slot.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClaimSpec {
    pub device: String,
    #[serde(default)]
    pub state: Option<String>,
    #[serde(default)]
    pub peripheral: Option<u16>,
}

impl ClaimSpec {
    pub fn parse_list(json: &str) -> Result<Vec<ClaimSpec>, serde_json::Error> {
        serde_json::from_str(json)
    }
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error(transparent)]
    Asm(#[from] AsmError),
    #[error(transparent)]
    Cfg(#[from] CfgError),
    #[error("unknown label `{0}` in claims")]
    UnknownLabel(String),
    #[error("unknown device `{0}` in claims")]
    UnknownDevice(String),
    #[error("claim for `{0}` gives both a state and a peripheral")]
    AmbiguousClaim(String),
    #[error("peripheral tag {0:#x} out of range")]
    BadPeripheral(u16),
    #[error("body entry {entry:#x} leaves room for {room} stub words, {need} needed")]
    StubTooLarge { entry: u32, room: u32, need: usize },
    /// Another program point would carry the same tag as a claimed access
    /// state; a different IV reassigns every state.
    #[error("tag {tag:#05x} of `{label}` is shared with the instruction at {pc:#x}; choose another IV")]
    TagCollision { label: String, tag: u16, pc: u32 },
}

#[derive(Debug, Clone)]
pub struct Built {
    pub program: Program,
    pub cfg: Cfg,
    pub states: StateMap,
    pub image: TrustletImage,
}

/// Resolved claim: which device register value the stub writes and the
/// packed identifier (process 0 until the stub fills in its own).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DeviceRef {
    Fixed(u16),
    OwnSecureStorage,
}

fn resolve_device(name: &str) -> Result<DeviceRef, BuildError> {
    if name == OWN_SECURE_STORAGE {
        return Ok(DeviceRef::OwnSecureStorage);
    }
    dev::by_name(name)
        .map(DeviceRef::Fixed)
        .ok_or_else(|| BuildError::UnknownDevice(name.to_string()))
}

/// Encrypts every instruction word of the program with the state in force
/// before it. Data words stay in the clear.
pub fn encrypt_program(prog: &Program, cfg: &Cfg, states: &StateMap) -> Vec<u32> {
    let mut out = prog.words.clone();
    for b in &cfg.blocks {
        let mut s = states.entry[&b.start];
        for (i, &w) in b.words.iter().enumerate() {
            let (c, next) = encrypt_word(s, w);
            out[prog.index(b.start + 4 * i as u32).unwrap()] = c;
            s = next;
        }
    }
    out
}

pub fn patch_records(cfg: &Cfg, states: &StateMap) -> Vec<PatchRecord> {
    let mut out: Vec<PatchRecord> = cfg
        .isr_roots
        .iter()
        .map(|&r| PatchRecord {
            src: ISR_ROOT,
            dst: r,
            patch: 0,
        })
        .collect();
    out.extend(states.patches.iter().map(|(&(src, dst), &patch)| PatchRecord { src, dst, patch }));
    out
}

fn stub_source(
    load_base: u32,
    entry: u32,
    body_end: u32,
    patch_count: u32,
    k: KeyIv,
    claims: &[(DeviceRef, u16)],
) -> String {
    use std::fmt::Write;
    let port = layout::sm_port(1);
    let mut s = format!(".org {load_base:#x}\n");
    for (csr, v) in [
        ("ivlo", k.iv as u32),
        ("ivhi", (k.iv >> 32) as u32),
        ("kchk", key_check(k.key)),
        ("scfpbase", entry),
        ("patches", body_end),
        ("patchcnt", patch_count),
        ("keylo", k.key as u32),
        ("keyhi", (k.key >> 32) as u32),
    ] {
        writeln!(s, "  li t0, {v:#x}\n  csrw {csr}, t0").unwrap();
    }
    s.push_str("  li t0, 0\n");
    if !claims.is_empty() {
        writeln!(
            s,
            "  csrr t1, slotid\n  addi t1, t1, 1\n  slli t1, t1, 10\n  li t2, 0x4000\n  or t1, t1, t2\n  li t2, {port:#x}"
        )
        .unwrap();
    }
    for &(d, tag) in claims {
        match d {
            DeviceRef::Fixed(i) => writeln!(s, "  li t3, {i}").unwrap(),
            DeviceRef::OwnSecureStorage => writeln!(
                s,
                "  csrr t3, slotid\n  addi t3, t3, {}",
                dev::SECURE_STORAGE0
            )
            .unwrap(),
        }
        writeln!(
            s,
            "  sw t3, {dev}(t2)\n  li t4, {tag:#x}\n  or t4, t4, t1\n  sw t4, {arg}(t2)\n  li t5, {op}\n  sw t5, {cmd}(t2)\n  lw t5, {res}(t2)\n  bnez t5, stub_fail",
            dev = smport::DEVICE,
            arg = smport::ARG,
            op = smport::OP_CLAIM,
            cmd = smport::CMD,
            res = smport::RESULT,
        )
        .unwrap();
    }
    for r in ["t1", "t2", "t3", "t4", "t5"] {
        writeln!(s, "  li {r}, 0").unwrap();
    }
    writeln!(
        s,
        "  j stub_body\nstub_fail:\n  li a0, 0xE1\n  ebreak\n.equ stub_body, {entry:#x}"
    )
    .unwrap();
    s
}

/// First instruction other than `access` whose pre-state compresses to `tag`.
fn shared_tag(cfg: &Cfg, states: &StateMap, access: u32, tag: u16) -> Option<u32> {
    cfg.blocks
        .iter()
        .flat_map(|b| (0..b.words.len() as u32).map(move |i| b.start + 4 * i))
        .filter(|&pc| pc != access)
        .find(|&pc| states.state_before(cfg, pc).is_ok_and(|s| compress_state(s) == tag))
}

pub fn build_trustlet(src: &str, k: KeyIv, claims: &[ClaimSpec]) -> Result<Built, BuildError> {
    let program = assemble(src)?;
    let cfg = Cfg::build(&program)?;
    let states = assign_states(&cfg, k);

    let mut resolved = Vec::new();
    let mut records = Vec::new();
    for c in claims {
        let d = resolve_device(&c.device)?;
        let tag = match (&c.state, c.peripheral) {
            (Some(_), Some(_)) => return Err(BuildError::AmbiguousClaim(c.device.clone())),
            (Some(label), None) => {
                let pc = program
                    .symbol(label)
                    .ok_or_else(|| BuildError::UnknownLabel(label.clone()))?;
                let tag = compress_state(states.state_before(&cfg, pc)?);
                if let Some(other) = shared_tag(&cfg, &states, pc, tag) {
                    return Err(BuildError::TagCollision {
                        label: label.clone(),
                        tag,
                        pc: other,
                    });
                }
                tag
            }
            (None, Some(p)) if p > crate::ident::MAX_PERIPHERAL => {
                return Err(BuildError::BadPeripheral(p))
            }
            (None, Some(p)) => p,
            (None, None) => 0,
        };
        resolved.push((d, tag));
        records.push(ClaimRecord {
            device: c.device.clone(),
            id: Identifier::new(1, 0, tag),
        });
    }

    let entry = program.entry();
    let load_base = entry & !0xFFFF;
    let patches = patch_records(&cfg, &states);
    let stub_src = stub_source(
        load_base,
        entry,
        program.end(),
        patches.len() as u32,
        k,
        &resolved,
    );
    let stub_prog = assemble(&stub_src)?;
    let room = (entry - load_base) / 4;
    if stub_prog.words.len() > room as usize {
        return Err(BuildError::StubTooLarge {
            entry,
            room,
            need: stub_prog.words.len(),
        });
    }
    let mut stub = stub_prog.words;
    stub.resize(room as usize, 0);

    let image = TrustletImage {
        flags: 0,
        key_check: key_check(k.key),
        iv: k.iv,
        entry,
        stub,
        body: encrypt_program(&program, &cfg, &states),
        patches,
        claims: records,
    };
    Ok(Built {
        program,
        cfg,
        states,
        image,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scfp::image::{decrypt_walk, WalkError};

    const K: KeyIv = KeyIv::new(0x0123_4567_89AB_CDEF, 0xFEDC_BA98_7654_3210);

    const SRC: &str = "\
.org 0x10200
main:
  li a0, 3
loop:
  call f
  addi a0, a0, -1
  bnez a0, loop
  wfi
  ebreak
f:
  addi a1, a1, 1
store:
  sw a1, 0(s0)
  ret
.isr h
h:
  mret
";

    #[test]
    fn build_and_walk_round_trip() {
        let claims = ClaimSpec::parse_list(
            r#"[{"device":"secure_storage","state":"store"},{"device":"uart"}]"#,
        )
        .unwrap();
        let b = build_trustlet(SRC, K, &claims).unwrap();
        let img = &b.image;
        assert_eq!(img.load_base(), 0x10000);
        assert_eq!(img.stub.len(), 0x80);
        let walk = decrypt_walk(img, K.key).unwrap();
        assert_eq!(walk.plaintext, b.program.words);
        assert_eq!(walk.instructions(), b.cfg.instruction_count());
        assert_ne!(img.body, b.program.words);

        let bytes = img.to_bytes();
        assert_eq!(&TrustletImage::from_bytes(&bytes).unwrap(), img);

        let store = b.program.symbol("store").unwrap();
        assert_eq!(
            img.claims[0].id.peripheral(),
            compress_state(walk.states[&store])
        );
        assert_eq!(img.claims[1].id.peripheral(), 0);
    }

    #[test]
    fn wrong_key_and_tampering_are_detected() {
        let b = build_trustlet(SRC, K, &[]).unwrap();
        assert_eq!(decrypt_walk(&b.image, K.key ^ 1), Err(WalkError::KeyCheck));
        let mut bad = b.image.clone();
        let p = bad.patches.iter_mut().find(|p| p.src != ISR_ROOT).unwrap();
        p.patch ^= 1;
        assert!(decrypt_walk(&bad, K.key).is_err());
    }

    #[test]
    fn claim_errors() {
        let c = |j: &str| ClaimSpec::parse_list(j).unwrap();
        assert!(matches!(
            build_trustlet(SRC, K, &c(r#"[{"device":"nope"}]"#)),
            Err(BuildError::UnknownDevice(_))
        ));
        assert!(matches!(
            build_trustlet(SRC, K, &c(r#"[{"device":"uart","state":"nowhere"}]"#)),
            Err(BuildError::UnknownLabel(_))
        ));
        assert!(matches!(
            build_trustlet(SRC, K, &c(r#"[{"device":"uart","peripheral":4096}]"#)),
            Err(BuildError::BadPeripheral(_))
        ));
    }

    #[test]
    fn stub_that_does_not_fit_is_rejected() {
        let src = SRC.replace(".org 0x10200", ".org 0x10010");
        assert!(matches!(
            build_trustlet(&src, K, &[]),
            Err(BuildError::StubTooLarge { .. })
        ));
    }
}
