// SPDX-License-Identifier: Apache-2.0

//! RV32I decoding for the supported subset.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AluOp {
    Add,
    Sub,
    Sll,
    Slt,
    Sltu,
    Xor,
    Srl,
    Sra,
    Or,
    And,
}

impl AluOp {
    pub fn apply(self, a: u32, b: u32) -> u32 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::Sub => a.wrapping_sub(b),
            AluOp::Sll => a << (b & 31),
            AluOp::Slt => ((a as i32) < (b as i32)) as u32,
            AluOp::Sltu => (a < b) as u32,
            AluOp::Xor => a ^ b,
            AluOp::Srl => a >> (b & 31),
            AluOp::Sra => ((a as i32) >> (b & 31)) as u32,
            AluOp::Or => a | b,
            AluOp::And => a & b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BranchOp {
    Eq,
    Ne,
    Lt,
    Ge,
    Ltu,
    Geu,
}

impl BranchOp {
    pub fn taken(self, a: u32, b: u32) -> bool {
        match self {
            BranchOp::Eq => a == b,
            BranchOp::Ne => a != b,
            BranchOp::Lt => (a as i32) < (b as i32),
            BranchOp::Ge => (a as i32) >= (b as i32),
            BranchOp::Ltu => a < b,
            BranchOp::Geu => a >= b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LoadOp {
    Lb,
    Lh,
    Lw,
    Lbu,
    Lhu,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreOp {
    Sb,
    Sh,
    Sw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsrOp {
    /// Read-write.
    Rw,
    /// Read and set bits.
    Rs,
    /// Read and clear bits.
    Rc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CsrSrc {
    Reg(u8),
    Imm(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Instr {
    Lui { rd: u8, imm: u32 },
    Auipc { rd: u8, imm: u32 },
    Jal { rd: u8, off: i32 },
    Jalr { rd: u8, rs1: u8, off: i32 },
    Branch { op: BranchOp, rs1: u8, rs2: u8, off: i32 },
    Load { op: LoadOp, rd: u8, rs1: u8, off: i32 },
    Store { op: StoreOp, rs1: u8, rs2: u8, off: i32 },
    OpImm { op: AluOp, rd: u8, rs1: u8, imm: i32 },
    Op { op: AluOp, rd: u8, rs1: u8, rs2: u8 },
    Csr { op: CsrOp, rd: u8, csr: u16, src: CsrSrc },
    Ecall,
    Ebreak,
    Mret,
    Wfi,
}

pub const RA: u8 = 1;

impl Instr {
    /// `jalr x0, ra, 0`, the only indirect transfer the toolchain accepts.
    pub fn is_return(&self) -> bool {
        matches!(self, Instr::Jalr { rd: 0, rs1: RA, off: 0 })
    }
}

fn sext(value: u32, bits: u32) -> i32 {
    let shift = 32 - bits;
    ((value << shift) as i32) >> shift
}

pub fn decode(w: u32) -> Option<Instr> {
    let opcode = w & 0x7F;
    let rd = ((w >> 7) & 31) as u8;
    let f3 = (w >> 12) & 7;
    let rs1 = ((w >> 15) & 31) as u8;
    let rs2 = ((w >> 20) & 31) as u8;
    let f7 = w >> 25;
    let imm_i = sext(w >> 20, 12);
    let imm_s = sext(((w >> 25) << 5) | ((w >> 7) & 31), 12);
    let imm_b = sext(
        ((w >> 31) << 12) | (((w >> 7) & 1) << 11) | (((w >> 25) & 0x3F) << 5) | (((w >> 8) & 0xF) << 1),
        13,
    );
    let imm_j = sext(
        ((w >> 31) << 20) | (((w >> 12) & 0xFF) << 12) | (((w >> 20) & 1) << 11) | (((w >> 21) & 0x3FF) << 1),
        21,
    );
    Some(match opcode {
        0x37 => Instr::Lui { rd, imm: w & 0xFFFF_F000 },
        0x17 => Instr::Auipc { rd, imm: w & 0xFFFF_F000 },
        0x6F => Instr::Jal { rd, off: imm_j },
        0x67 if f3 == 0 => Instr::Jalr { rd, rs1, off: imm_i },
        0x63 => {
            let op = match f3 {
                0 => BranchOp::Eq,
                1 => BranchOp::Ne,
                4 => BranchOp::Lt,
                5 => BranchOp::Ge,
                6 => BranchOp::Ltu,
                7 => BranchOp::Geu,
                _ => return None,
            };
            Instr::Branch { op, rs1, rs2, off: imm_b }
        }
        0x03 => {
            let op = match f3 {
                0 => LoadOp::Lb,
                1 => LoadOp::Lh,
                2 => LoadOp::Lw,
                4 => LoadOp::Lbu,
                5 => LoadOp::Lhu,
                _ => return None,
            };
            Instr::Load { op, rd, rs1, off: imm_i }
        }
        0x23 => {
            let op = match f3 {
                0 => StoreOp::Sb,
                1 => StoreOp::Sh,
                2 => StoreOp::Sw,
                _ => return None,
            };
            Instr::Store { op, rs1, rs2, off: imm_s }
        }
        0x13 => {
            let (op, imm) = match (f3, f7) {
                (0, _) => (AluOp::Add, imm_i),
                (2, _) => (AluOp::Slt, imm_i),
                (3, _) => (AluOp::Sltu, imm_i),
                (4, _) => (AluOp::Xor, imm_i),
                (6, _) => (AluOp::Or, imm_i),
                (7, _) => (AluOp::And, imm_i),
                (1, 0) => (AluOp::Sll, rs2 as i32),
                (5, 0) => (AluOp::Srl, rs2 as i32),
                (5, 0x20) => (AluOp::Sra, rs2 as i32),
                _ => return None,
            };
            Instr::OpImm { op, rd, rs1, imm }
        }
        0x33 => {
            let op = match (f3, f7) {
                (0, 0) => AluOp::Add,
                (0, 0x20) => AluOp::Sub,
                (1, 0) => AluOp::Sll,
                (2, 0) => AluOp::Slt,
                (3, 0) => AluOp::Sltu,
                (4, 0) => AluOp::Xor,
                (5, 0) => AluOp::Srl,
                (5, 0x20) => AluOp::Sra,
                (6, 0) => AluOp::Or,
                (7, 0) => AluOp::And,
                _ => return None,
            };
            Instr::Op { op, rd, rs1, rs2 }
        }
        0x73 => match f3 {
            0 => match w {
                0x0000_0073 => Instr::Ecall,
                0x0010_0073 => Instr::Ebreak,
                0x3020_0073 => Instr::Mret,
                0x1050_0073 => Instr::Wfi,
                _ => return None,
            },
            4 => return None,
            _ => {
                let op = match f3 & 3 {
                    1 => CsrOp::Rw,
                    2 => CsrOp::Rs,
                    _ => CsrOp::Rc,
                };
                let src = if f3 & 4 != 0 {
                    CsrSrc::Imm(rs1)
                } else {
                    CsrSrc::Reg(rs1)
                };
                Instr::Csr { op, rd, csr: (w >> 20) as u16, src }
            }
        },
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_words() {
        // Words from the standard encoding tables.
        assert_eq!(
            decode(0x00500093),
            Some(Instr::OpImm { op: AluOp::Add, rd: 1, rs1: 0, imm: 5 })
        );
        assert_eq!(decode(0x00008067), Some(Instr::Jalr { rd: 0, rs1: 1, off: 0 }));
        assert!(decode(0x00008067).unwrap().is_return());
        assert_eq!(decode(0xfff00293), Some(Instr::OpImm { op: AluOp::Add, rd: 5, rs1: 0, imm: -1 }));
        assert_eq!(decode(0x40b50533), Some(Instr::Op { op: AluOp::Sub, rd: 10, rs1: 10, rs2: 11 }));
        assert_eq!(decode(0x0000006f), Some(Instr::Jal { rd: 0, off: 0 }));
        assert_eq!(decode(0xffdff06f), Some(Instr::Jal { rd: 0, off: -4 }));
        assert_eq!(
            decode(0xfe000ee3),
            Some(Instr::Branch { op: BranchOp::Eq, rs1: 0, rs2: 0, off: -4 })
        );
        assert_eq!(
            decode(0x00a12223),
            Some(Instr::Store { op: StoreOp::Sw, rs1: 2, rs2: 10, off: 4 })
        );
        assert_eq!(
            decode(0x30529073),
            Some(Instr::Csr { op: CsrOp::Rw, rd: 0, csr: 0x305, src: CsrSrc::Reg(5) })
        );
        assert_eq!(decode(0x4010d093), Some(Instr::OpImm { op: AluOp::Sra, rd: 1, rs1: 1, imm: 1 }));
        assert_eq!(decode(0x00000000), None);
        assert_eq!(decode(0xFFFF_FFFF), None);
    }

    #[test]
    fn alu_semantics() {
        assert_eq!(AluOp::Sra.apply(0x8000_0000, 4), 0xF800_0000);
        assert_eq!(AluOp::Srl.apply(0x8000_0000, 36), 0x0800_0000);
        assert_eq!(AluOp::Slt.apply(u32::MAX, 0), 1);
        assert_eq!(AluOp::Sltu.apply(u32::MAX, 0), 0);
        assert!(BranchOp::Geu.taken(u32::MAX, 1));
        assert!(!BranchOp::Ge.taken(u32::MAX, 1));
    }
}
