// SPDX-License-Identifier: Apache-2.0

//! Trustlet image container and the decrypting verifier.
//!
//! Byte layout, all little-endian:
//!
//! ```text
//! "HVT1" version:u16 flags:u16 key_check:u32 iv:u64 entry:u32
//! stub_words:u32 body_words:u32 patch_count:u32 claim_count:u16 pad:u16
//! stub[stub_words] body[body_words]
//! patch_count * (src:u32 dst:u32 patch:u64)
//! claim_count * (len:u8 name[len] id:u16)
//! ```

use std::collections::{BTreeMap, VecDeque};

use thiserror::Error;

use crate::cpu::decode::{decode, Instr};
use crate::ident::Identifier;
use crate::scfp::sponge::{absorb, decrypt_word, init_state, key_check, trap_entry_state, KeyIv};

pub const MAGIC: &[u8; 4] = b"HVT1";
pub const VERSION: u16 = 1;
/// Patch-record source that marks an interrupt-handler root.
pub const ISR_ROOT: u32 = u32::MAX;
const HEADER_LEN: usize = 36;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PatchRecord {
    pub src: u32,
    pub dst: u32,
    pub patch: u64,
}

/// A device the stub claims at start-up. A process field of 0 in `id` stands
/// for the slot the trustlet ends up running in.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClaimRecord {
    pub device: String,
    pub id: Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrustletImage {
    pub flags: u16,
    pub key_check: u32,
    pub iv: u64,
    pub entry: u32,
    pub stub: Vec<u32>,
    pub body: Vec<u32>,
    pub patches: Vec<PatchRecord>,
    pub claims: Vec<ClaimRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImageError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported image version {0}")]
    BadVersion(u16),
    #[error("image truncated")]
    Truncated,
    #[error("{0} trailing bytes after image")]
    Trailing(usize),
    #[error("claim record has a bad device name or identifier")]
    BadClaim,
}

struct Reader<'a> {
    b: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ImageError> {
        let s = self.b.get(self.at..self.at + n).ok_or(ImageError::Truncated)?;
        self.at += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8, ImageError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, ImageError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32, ImageError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64, ImageError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn words(&mut self, n: usize) -> Result<Vec<u32>, ImageError> {
        if self.b.len() < self.at + 4 * n {
            return Err(ImageError::Truncated);
        }
        (0..n).map(|_| self.u32()).collect()
    }
}

impl TrustletImage {
    pub fn load_base(&self) -> u32 {
        self.entry - 4 * self.stub.len() as u32
    }

    pub fn body_end(&self) -> u32 {
        self.entry + 4 * self.body.len() as u32
    }

    pub fn isr_roots(&self) -> impl Iterator<Item = u32> + '_ {
        self.patches.iter().filter(|p| p.src == ISR_ROOT).map(|p| p.dst)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 4 * (self.stub.len() + self.body.len()));
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.flags.to_le_bytes());
        out.extend_from_slice(&self.key_check.to_le_bytes());
        out.extend_from_slice(&self.iv.to_le_bytes());
        out.extend_from_slice(&self.entry.to_le_bytes());
        out.extend_from_slice(&(self.stub.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.body.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.patches.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.claims.len() as u16).to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        for w in self.stub.iter().chain(&self.body) {
            out.extend_from_slice(&w.to_le_bytes());
        }
        for p in &self.patches {
            out.extend_from_slice(&p.src.to_le_bytes());
            out.extend_from_slice(&p.dst.to_le_bytes());
            out.extend_from_slice(&p.patch.to_le_bytes());
        }
        for c in &self.claims {
            out.push(c.device.len() as u8);
            out.extend_from_slice(c.device.as_bytes());
            out.extend_from_slice(&c.id.pack().to_le_bytes());
        }
        out
    }

    pub fn from_bytes(b: &[u8]) -> Result<Self, ImageError> {
        let mut r = Reader { b, at: 0 };
        if r.take(4)? != MAGIC {
            return Err(ImageError::BadMagic);
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(ImageError::BadVersion(version));
        }
        let flags = r.u16()?;
        let key_check = r.u32()?;
        let iv = r.u64()?;
        let entry = r.u32()?;
        let stub_words = r.u32()? as usize;
        let body_words = r.u32()? as usize;
        let patch_count = r.u32()? as usize;
        let claim_count = r.u16()? as usize;
        r.u16()?;
        let stub = r.words(stub_words)?;
        let body = r.words(body_words)?;
        if b.len() < r.at + 16 * patch_count {
            return Err(ImageError::Truncated);
        }
        let patches = (0..patch_count)
            .map(|_| {
                Ok(PatchRecord {
                    src: r.u32()?,
                    dst: r.u32()?,
                    patch: r.u64()?,
                })
            })
            .collect::<Result<_, ImageError>>()?;
        let mut claims = Vec::with_capacity(claim_count);
        for _ in 0..claim_count {
            let n = r.u8()? as usize;
            let device = std::str::from_utf8(r.take(n)?)
                .map_err(|_| ImageError::BadClaim)?
                .to_string();
            let packed = r.u16()?;
            if packed & 0x8000 != 0 {
                return Err(ImageError::BadClaim);
            }
            let id = Identifier::unpack(packed);
            claims.push(ClaimRecord { device, id });
        }
        if r.at != b.len() {
            return Err(ImageError::Trailing(b.len() - r.at));
        }
        if (4 * stub_words as u64) > entry as u64 {
            return Err(ImageError::Truncated);
        }
        Ok(Self {
            flags,
            key_check,
            iv,
            entry,
            stub,
            body,
            patches,
            claims,
        })
    }

    /// Words as they sit in memory from `load_base`: stub, body, then the
    /// patch table as four words per record (src, dst, patch low, patch high).
    pub fn blob_words(&self) -> Vec<u32> {
        let mut out = self.stub.clone();
        out.extend_from_slice(&self.body);
        for p in &self.patches {
            out.extend_from_slice(&[p.src, p.dst, p.patch as u32, (p.patch >> 32) as u32]);
        }
        out
    }

    pub fn blob(&self) -> Vec<u8> {
        self.blob_words().iter().flat_map(|w| w.to_le_bytes()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WalkError {
    #[error("key-check failed: key does not match the image")]
    KeyCheck,
    #[error("control reaches {pc:#x}, outside the encrypted body")]
    OutsideBody { pc: u32 },
    #[error("word at {pc:#x} does not decrypt to a valid instruction")]
    Illegal { pc: u32 },
    #[error("indirect or linking jump at {pc:#x}")]
    Indirect { pc: u32 },
    #[error("two paths reach {pc:#x} with different sponge states")]
    StateMismatch { pc: u32 },
    #[error("return at {pc:#x} has no patch records")]
    DanglingReturn { pc: u32 },
    #[error("patch record {src:#x} -> {dst:#x} does not describe a valid edge")]
    BadPatch { src: u32, dst: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Walk {
    /// Body with every reached instruction decrypted; other words unchanged.
    pub plaintext: Vec<u32>,
    /// Sponge state before each decrypted instruction.
    pub states: BTreeMap<u32, u64>,
}

impl Walk {
    pub fn instructions(&self) -> usize {
        self.states.len()
    }
}

/// Follows control flow from the entry and every ISR root, decrypting as the
/// core would and applying patches on each transfer. Every path into an
/// instruction must agree on its state, and every patch record must land
/// exactly on its destination's state.
pub fn decrypt_walk(img: &TrustletImage, key: u64) -> Result<Walk, WalkError> {
    if key_check(key) != img.key_check {
        return Err(WalkError::KeyCheck);
    }
    let init = init_state(KeyIv::new(key, img.iv));
    let patch: BTreeMap<(u32, u32), u64> = img
        .patches
        .iter()
        .filter(|p| p.src != ISR_ROOT)
        .map(|p| ((p.src, p.dst), p.patch))
        .collect();
    let mut returns: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(src, dst) in patch.keys() {
        returns.entry(src).or_default().push(dst);
    }
    let in_body = |pc: u32| pc >= img.entry && pc < img.body_end() && pc.is_multiple_of(4);
    let word = |pc: u32| img.body[((pc - img.entry) / 4) as usize];

    let mut states: BTreeMap<u32, u64> = BTreeMap::new();
    let mut plain: BTreeMap<u32, u32> = BTreeMap::new();
    let mut queue = VecDeque::new();
    queue.push_back((img.entry, init));
    for r in img.isr_roots() {
        queue.push_back((r, trap_entry_state(init, r)));
    }
    while let Some((pc, s)) = queue.pop_front() {
        if !in_body(pc) {
            return Err(WalkError::OutsideBody { pc });
        }
        if let Some(&have) = states.get(&pc) {
            if have != s {
                return Err(WalkError::StateMismatch { pc });
            }
            continue;
        }
        states.insert(pc, s);
        let (p, out) = decrypt_word(s, word(pc));
        let ins = decode(p).ok_or(WalkError::Illegal { pc })?;
        plain.insert(pc, p);
        let to = |dst: u32| (dst, out ^ patch.get(&(pc, dst)).copied().unwrap_or(0));
        match ins {
            Instr::Branch { off, .. } => {
                queue.push_back(to(pc + 4));
                queue.push_back(to(pc.wrapping_add(off as u32)));
            }
            Instr::Jal { rd: 0 | 1, off } => queue.push_back(to(pc.wrapping_add(off as u32))),
            Instr::Jal { .. } => return Err(WalkError::Indirect { pc }),
            Instr::Jalr { .. } if ins.is_return() => {
                let sites = returns.get(&pc).ok_or(WalkError::DanglingReturn { pc })?;
                queue.extend(sites.iter().map(|&d| to(d)));
            }
            Instr::Jalr { .. } => return Err(WalkError::Indirect { pc }),
            Instr::Ebreak | Instr::Mret => {}
            _ => queue.push_back(to(pc + 4)),
        }
    }

    for (&(src, dst), &p) in &patch {
        let ok = match (states.get(&src), plain.get(&src), states.get(&dst)) {
            (Some(&s), Some(&w), Some(&d)) => absorb(s, w) ^ p == d,
            _ => false,
        };
        if !ok {
            return Err(WalkError::BadPatch { src, dst });
        }
    }

    let plaintext = img
        .body
        .iter()
        .enumerate()
        .map(|(i, &w)| *plain.get(&(img.entry + 4 * i as u32)).unwrap_or(&w))
        .collect();
    Ok(Walk { plaintext, states })
}
