// SPDX-License-Identifier: Apache-2.0

//! Two-pass assembler for the RV32I subset plus the usual pseudo
//! instructions. Only direct control flow is accepted; the single indirect
//! form is the `jalr x0, ra, 0` return.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::cpu::csr;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AsmError {
    #[error("{line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error("{line}: unsupported instruction `{text}`")]
    Unsupported { line: usize, text: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WordKind {
    /// An instruction from source line `line`.
    Instr { line: usize },
    /// `.word`/`.ascii` contents and `.org` padding.
    Data,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    pub origin: u32,
    pub words: Vec<u32>,
    pub kinds: Vec<WordKind>,
    pub symbols: BTreeMap<String, u32>,
    /// Entry points of interrupt handlers declared with `.isr`.
    pub isr_roots: Vec<u32>,
}

impl Program {
    pub fn entry(&self) -> u32 {
        self.origin
    }

    pub fn end(&self) -> u32 {
        self.origin + 4 * self.words.len() as u32
    }

    pub fn index(&self, pc: u32) -> Option<usize> {
        if pc < self.origin || pc >= self.end() || !pc.is_multiple_of(4) {
            return None;
        }
        Some(((pc - self.origin) / 4) as usize)
    }

    pub fn word_at(&self, pc: u32) -> Option<u32> {
        self.index(pc).map(|i| self.words[i])
    }

    pub fn is_instr(&self, pc: u32) -> bool {
        self.index(pc)
            .is_some_and(|i| matches!(self.kinds[i], WordKind::Instr { .. }))
    }

    pub fn symbol(&self, name: &str) -> Option<u32> {
        self.symbols.get(name).copied()
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.words.iter().flat_map(|w| w.to_le_bytes()).collect()
    }
}

const REG_NAMES: [&str; 32] = [
    "zero", "ra", "sp", "gp", "tp", "t0", "t1", "t2", "s0", "s1", "a0", "a1", "a2", "a3", "a4", "a5",
    "a6", "a7", "s2", "s3", "s4", "s5", "s6", "s7", "s8", "s9", "s10", "s11", "t3", "t4", "t5",
    "t6",
];

fn reg(name: &str) -> Option<u8> {
    let name = name.trim();
    if let Some(n) = name.strip_prefix('x') {
        if let Ok(v) = n.parse::<u8>() {
            return (v < 32 && !n.starts_with('+')).then_some(v);
        }
    }
    if name == "fp" {
        return Some(8);
    }
    REG_NAMES.iter().position(|r| *r == name).map(|i| i as u8)
}

#[derive(Debug, Clone)]
struct Operand {
    text: String,
    col: usize,
}

#[derive(Debug, Clone)]
struct Stmt {
    line: usize,
    col: usize,
    mnemonic: String,
    ops: Vec<Operand>,
    raw: String,
}

impl Stmt {
    fn err(&self, col: usize, msg: impl Into<String>) -> AsmError {
        AsmError::Parse {
            line: self.line,
            col,
            msg: msg.into(),
        }
    }

    fn unsupported(&self) -> AsmError {
        AsmError::Unsupported {
            line: self.line,
            text: self.raw.clone(),
        }
    }

    fn expect_ops(&self, n: usize) -> Result<(), AsmError> {
        if self.ops.len() != n {
            return Err(self.err(
                self.col,
                format!("`{}` takes {} operand(s), got {}", self.mnemonic, n, self.ops.len()),
            ));
        }
        Ok(())
    }

    fn reg(&self, i: usize) -> Result<u8, AsmError> {
        let op = &self.ops[i];
        reg(&op.text).ok_or_else(|| self.err(op.col, format!("bad register `{}`", op.text)))
    }
}

/// Strips a `#` comment, ignoring `#` inside quotes.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if in_str => escaped = !escaped,
            '"' if !escaped => in_str = !in_str,
            '#' if !in_str => return &line[..i],
            _ => escaped = false,
        }
        if c != '\\' {
            escaped = false;
        }
    }
    line
}

fn split_operands(s: &str, base_col: usize) -> Vec<Operand> {
    let mut out = Vec::new();
    let mut depth = 0;
    let mut in_str = false;
    let mut start = 0;
    for (i, c) in s.char_indices() {
        match c {
            '"' => in_str = !in_str,
            '(' if !in_str => depth += 1,
            ')' if !in_str => depth -= 1,
            ',' if !in_str && depth == 0 => {
                push_operand(&mut out, &s[start..i], base_col + start);
                start = i + 1;
            }
            _ => {}
        }
    }
    push_operand(&mut out, &s[start..], base_col + start);
    out
}

fn push_operand(out: &mut Vec<Operand>, raw: &str, col: usize) {
    let lead = raw.len() - raw.trim_start().len();
    let text = raw.trim();
    if !text.is_empty() {
        out.push(Operand {
            text: text.to_string(),
            col: col + lead,
        });
    }
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_' || c == '.')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

enum Line {
    Label(String, usize),
    Stmt(Stmt),
}

fn parse_lines(src: &str) -> Result<Vec<Line>, AsmError> {
    let mut out = Vec::new();
    for (n, raw_line) in src.lines().enumerate() {
        let line = n + 1;
        let text = strip_comment(raw_line);
        let mut rest = text;
        let mut offset = 0;
        // Any number of leading `label:` definitions.
        loop {
            let trimmed = rest.trim_start();
            offset += rest.len() - trimmed.len();
            rest = trimmed;
            let Some(colon) = rest.find(':') else { break };
            let candidate = &rest[..colon];
            if !is_ident(candidate) {
                break;
            }
            out.push(Line::Label(candidate.to_string(), line));
            rest = &rest[colon + 1..];
            offset += colon + 1;
        }
        let rest_trim = rest.trim_end();
        if rest_trim.is_empty() {
            continue;
        }
        let split = rest_trim
            .find(char::is_whitespace)
            .unwrap_or(rest_trim.len());
        let mnemonic = rest_trim[..split].to_ascii_lowercase();
        let ops = split_operands(&rest_trim[split..], offset + split + 1);
        out.push(Line::Stmt(Stmt {
            line,
            col: offset + 1,
            mnemonic,
            ops,
            raw: rest_trim.to_string(),
        }));
    }
    Ok(out)
}

fn parse_number(s: &str) -> Option<i64> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(b) => (true, b),
        None => (false, s),
    };
    let v = if let Some(h) = body.strip_prefix("0x").or_else(|| body.strip_prefix("0X")) {
        i64::from_str_radix(&h.replace('_', ""), 16).ok()?
    } else if let Some(b) = body.strip_prefix("0b") {
        i64::from_str_radix(&b.replace('_', ""), 2).ok()?
    } else if body.len() == 3 && body.starts_with('\'') && body.ends_with('\'') {
        body.as_bytes()[1] as i64
    } else {
        body.replace('_', "").parse::<i64>().ok()?
    };
    Some(if neg { -v } else { v })
}

/// Evaluates `term ((+|-) term)*`. `Ok(None)` means a symbol is not yet
/// known (first pass).
fn eval(s: &str, symbols: &BTreeMap<String, u32>) -> Result<Option<i64>, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty expression".into());
    }
    let mut total = 0i64;
    let mut unknown = false;
    let mut sign = 1i64;
    let mut term = String::new();
    let bytes: Vec<char> = s.chars().collect();
    let mut i = 0;
    let flush = |term: &mut String, sign: i64, total: &mut i64, unknown: &mut bool| -> Result<(), String> {
        let t = term.trim();
        if t.is_empty() {
            return Err(format!("malformed expression `{s}`"));
        }
        if let Some(v) = parse_number(t) {
            *total += sign * v;
        } else if is_ident(t) {
            match symbols.get(t) {
                Some(v) => *total += sign * *v as i64,
                None => *unknown = true,
            }
        } else {
            return Err(format!("bad operand `{t}`"));
        }
        term.clear();
        Ok(())
    };
    while i < bytes.len() {
        let c = bytes[i];
        let is_op = (c == '+' || c == '-') && !term.trim().is_empty() && !term.ends_with('\'');
        if is_op {
            flush(&mut term, sign, &mut total, &mut unknown)?;
            sign = if c == '+' { 1 } else { -1 };
        } else {
            term.push(c);
        }
        i += 1;
    }
    flush(&mut term, sign, &mut total, &mut unknown)?;
    Ok((!unknown).then_some(total))
}

fn r_type(f7: u32, rs2: u8, rs1: u8, f3: u32, rd: u8, op: u32) -> u32 {
    f7 << 25 | (rs2 as u32) << 20 | (rs1 as u32) << 15 | f3 << 12 | (rd as u32) << 7 | op
}

fn i_type(imm: i32, rs1: u8, f3: u32, rd: u8, op: u32) -> u32 {
    ((imm as u32) & 0xFFF) << 20 | (rs1 as u32) << 15 | f3 << 12 | (rd as u32) << 7 | op
}

fn s_type(imm: i32, rs2: u8, rs1: u8, f3: u32, op: u32) -> u32 {
    let imm = imm as u32;
    ((imm >> 5) & 0x7F) << 25
        | (rs2 as u32) << 20
        | (rs1 as u32) << 15
        | f3 << 12
        | (imm & 0x1F) << 7
        | op
}

fn b_type(off: i32, rs2: u8, rs1: u8, f3: u32) -> u32 {
    let o = off as u32;
    ((o >> 12) & 1) << 31
        | ((o >> 5) & 0x3F) << 25
        | (rs2 as u32) << 20
        | (rs1 as u32) << 15
        | f3 << 12
        | ((o >> 1) & 0xF) << 8
        | ((o >> 11) & 1) << 7
        | 0x63
}

fn j_type(off: i32, rd: u8) -> u32 {
    let o = off as u32;
    ((o >> 20) & 1) << 31
        | ((o >> 1) & 0x3FF) << 21
        | ((o >> 11) & 1) << 20
        | ((o >> 12) & 0xFF) << 12
        | (rd as u32) << 7
        | 0x6F
}

fn u_type(imm20: u32, rd: u8, op: u32) -> u32 {
    (imm20 & 0xF_FFFF) << 12 | (rd as u32) << 7 | op
}

/// Splits a 32-bit constant into `lui`/`addi` parts.
pub fn hi_lo(v: u32) -> (u32, i32) {
    let hi = v.wrapping_add(0x800) >> 12;
    let lo = v.wrapping_sub(hi << 12) as i32;
    (hi & 0xF_FFFF, lo)
}

fn fits_i12(v: i64) -> bool {
    (-2048..=2047).contains(&v)
}

struct Asm {
    symbols: BTreeMap<String, u32>,
    /// `li` sizes fixed in pass one, keyed by statement order.
    li_sizes: Vec<u32>,
}

const ALU_R: &[(&str, u32, u32)] = &[
    ("add", 0, 0),
    ("sub", 0x20, 0),
    ("sll", 0, 1),
    ("slt", 0, 2),
    ("sltu", 0, 3),
    ("xor", 0, 4),
    ("srl", 0, 5),
    ("sra", 0x20, 5),
    ("or", 0, 6),
    ("and", 0, 7),
];

const ALU_I: &[(&str, u32)] = &[
    ("addi", 0),
    ("slti", 2),
    ("sltiu", 3),
    ("xori", 4),
    ("ori", 6),
    ("andi", 7),
];

const LOADS: &[(&str, u32)] = &[("lb", 0), ("lh", 1), ("lw", 2), ("lbu", 4), ("lhu", 5)];
const STORES: &[(&str, u32)] = &[("sb", 0), ("sh", 1), ("sw", 2)];
const BRANCHES: &[(&str, u32)] = &[
    ("beq", 0),
    ("bne", 1),
    ("blt", 4),
    ("bge", 5),
    ("bltu", 6),
    ("bgeu", 7),
];

impl Asm {
    fn value(&self, st: &Stmt, i: usize) -> Result<i64, AsmError> {
        let op = &st.ops[i];
        match eval(&op.text, &self.symbols) {
            Ok(Some(v)) => Ok(v),
            Ok(None) => Err(st.err(op.col, format!("undefined symbol in `{}`", op.text))),
            Err(m) => Err(st.err(op.col, m)),
        }
    }

    fn imm12(&self, st: &Stmt, i: usize) -> Result<i32, AsmError> {
        let v = self.value(st, i)?;
        if !fits_i12(v) {
            return Err(st.err(st.ops[i].col, format!("immediate {v} out of 12-bit range")));
        }
        Ok(v as i32)
    }

    fn u32_value(&self, st: &Stmt, i: usize) -> Result<u32, AsmError> {
        let v = self.value(st, i)?;
        if !(-(1i64 << 31)..(1i64 << 32)).contains(&v) {
            return Err(st.err(st.ops[i].col, format!("value {v} does not fit 32 bits")));
        }
        Ok(v as u32)
    }

    fn pc_offset(&self, st: &Stmt, i: usize, pc: u32, bits: u32) -> Result<i32, AsmError> {
        let target = self.u32_value(st, i)?;
        let off = target.wrapping_sub(pc) as i32 as i64;
        let lim = 1i64 << (bits - 1);
        if off % 2 != 0 || off < -lim || off >= lim {
            return Err(st.err(st.ops[i].col, format!("branch target {target:#x} out of range")));
        }
        Ok(off as i32)
    }

    /// `imm(reg)` or `(reg)`.
    fn mem(&self, st: &Stmt, i: usize) -> Result<(i32, u8), AsmError> {
        let op = &st.ops[i];
        let t = op.text.trim();
        let bad = || st.err(op.col, format!("bad memory operand `{t}`"));
        let open = t.find('(').ok_or_else(bad)?;
        if !t.ends_with(')') {
            return Err(bad());
        }
        let base = reg(&t[open + 1..t.len() - 1]).ok_or_else(bad)?;
        let imm_text = t[..open].trim();
        let imm = if imm_text.is_empty() {
            0
        } else {
            match eval(imm_text, &self.symbols) {
                Ok(Some(v)) if fits_i12(v) => v as i32,
                Ok(Some(v)) => return Err(st.err(op.col, format!("offset {v} out of range"))),
                Ok(None) => return Err(st.err(op.col, "undefined symbol in offset")),
                Err(m) => return Err(st.err(op.col, m)),
            }
        };
        Ok((imm, base))
    }

    fn csr(&self, st: &Stmt, i: usize) -> Result<u16, AsmError> {
        let op = &st.ops[i];
        if let Some(n) = csr::by_name(&op.text) {
            return Ok(n);
        }
        let v = self.value(st, i)?;
        if !(0..4096).contains(&v) {
            return Err(st.err(op.col, format!("CSR number {v} out of range")));
        }
        Ok(v as u16)
    }

    /// Encodes one instruction statement (possibly a multi-word pseudo).
    fn encode(&self, st: &Stmt, pc: u32, li_size: Option<u32>) -> Result<Vec<u32>, AsmError> {
        let m = st.mnemonic.as_str();
        let one = |w: u32| Ok(vec![w]);
        if let Some(&(_, f7, f3)) = ALU_R.iter().find(|(n, _, _)| *n == m) {
            st.expect_ops(3)?;
            return one(r_type(f7, st.reg(2)?, st.reg(1)?, f3, st.reg(0)?, 0x33));
        }
        if let Some(&(_, f3)) = ALU_I.iter().find(|(n, _)| *n == m) {
            st.expect_ops(3)?;
            return one(i_type(self.imm12(st, 2)?, st.reg(1)?, f3, st.reg(0)?, 0x13));
        }
        if let Some(&(_, f3)) = LOADS.iter().find(|(n, _)| *n == m) {
            st.expect_ops(2)?;
            let (imm, base) = self.mem(st, 1)?;
            return one(i_type(imm, base, f3, st.reg(0)?, 0x03));
        }
        if let Some(&(_, f3)) = STORES.iter().find(|(n, _)| *n == m) {
            st.expect_ops(2)?;
            let (imm, base) = self.mem(st, 1)?;
            return one(s_type(imm, st.reg(0)?, base, f3, 0x23));
        }
        if let Some(&(_, f3)) = BRANCHES.iter().find(|(n, _)| *n == m) {
            st.expect_ops(3)?;
            let off = self.pc_offset(st, 2, pc, 13)?;
            return one(b_type(off, st.reg(1)?, st.reg(0)?, f3));
        }
        let branch = |f3: u32, a: u8, b: u8, target: usize| -> Result<Vec<u32>, AsmError> {
            let off = self.pc_offset(st, target, pc, 13)?;
            Ok(vec![b_type(off, b, a, f3)])
        };
        match m {
            "slli" | "srli" | "srai" => {
                st.expect_ops(3)?;
                let sh = self.value(st, 2)?;
                if !(0..32).contains(&sh) {
                    return Err(st.err(st.ops[2].col, "shift amount out of range"));
                }
                let (f7, f3) = match m {
                    "slli" => (0, 1),
                    "srli" => (0, 5),
                    _ => (0x20, 5),
                };
                one(r_type(f7, sh as u8, st.reg(1)?, f3, st.reg(0)?, 0x13))
            }
            "lui" | "auipc" => {
                st.expect_ops(2)?;
                let v = self.value(st, 1)?;
                if !(0..=0xF_FFFF).contains(&v) {
                    return Err(st.err(st.ops[1].col, "upper immediate out of 20-bit range"));
                }
                let op = if m == "lui" { 0x37 } else { 0x17 };
                one(u_type(v as u32, st.reg(0)?, op))
            }
            "beqz" | "bnez" | "bltz" | "bgez" => {
                st.expect_ops(2)?;
                let f3 = match m {
                    "beqz" => 0,
                    "bnez" => 1,
                    "bltz" => 4,
                    _ => 5,
                };
                branch(f3, st.reg(0)?, 0, 1)
            }
            "blez" => {
                st.expect_ops(2)?;
                branch(5, 0, st.reg(0)?, 1)
            }
            "bgtz" => {
                st.expect_ops(2)?;
                branch(4, 0, st.reg(0)?, 1)
            }
            "bgt" | "ble" | "bgtu" | "bleu" => {
                st.expect_ops(3)?;
                let f3 = match m {
                    "bgt" => 4,
                    "ble" => 5,
                    "bgtu" => 6,
                    _ => 7,
                };
                branch(f3, st.reg(1)?, st.reg(0)?, 2)
            }
            "jal" => {
                let (rd, t) = match st.ops.len() {
                    1 => (1, 0),
                    2 => (st.reg(0)?, 1),
                    _ => return Err(st.err(st.col, "`jal` takes 1 or 2 operands")),
                };
                if rd > 1 {
                    return Err(st.unsupported());
                }
                one(j_type(self.pc_offset(st, t, pc, 21)?, rd))
            }
            "j" => {
                st.expect_ops(1)?;
                one(j_type(self.pc_offset(st, 0, pc, 21)?, 0))
            }
            "call" => {
                st.expect_ops(1)?;
                one(j_type(self.pc_offset(st, 0, pc, 21)?, 1))
            }
            "ret" => {
                st.expect_ops(0)?;
                one(RET)
            }
            "jr" => {
                st.expect_ops(1)?;
                if st.reg(0)? != 1 {
                    return Err(st.unsupported());
                }
                one(RET)
            }
            "jalr" => {
                let ok = match st.ops.len() {
                    3 => {
                        reg(&st.ops[0].text) == Some(0)
                            && reg(&st.ops[1].text) == Some(1)
                            && eval(&st.ops[2].text, &self.symbols) == Ok(Some(0))
                    }
                    2 => reg(&st.ops[0].text) == Some(0) && self.mem(st, 1).ok() == Some((0, 1)),
                    _ => false,
                };
                if !ok {
                    return Err(st.unsupported());
                }
                one(RET)
            }
            "nop" => {
                st.expect_ops(0)?;
                one(NOP)
            }
            "mv" => {
                st.expect_ops(2)?;
                one(i_type(0, st.reg(1)?, 0, st.reg(0)?, 0x13))
            }
            "not" => {
                st.expect_ops(2)?;
                one(i_type(-1, st.reg(1)?, 4, st.reg(0)?, 0x13))
            }
            "neg" => {
                st.expect_ops(2)?;
                one(r_type(0x20, st.reg(1)?, 0, 0, st.reg(0)?, 0x33))
            }
            "seqz" => {
                st.expect_ops(2)?;
                one(i_type(1, st.reg(1)?, 3, st.reg(0)?, 0x13))
            }
            "snez" => {
                st.expect_ops(2)?;
                one(r_type(0, st.reg(1)?, 0, 3, st.reg(0)?, 0x33))
            }
            "sltz" => {
                st.expect_ops(2)?;
                one(r_type(0, 0, st.reg(1)?, 2, st.reg(0)?, 0x33))
            }
            "sgtz" => {
                st.expect_ops(2)?;
                one(r_type(0, st.reg(1)?, 0, 2, st.reg(0)?, 0x33))
            }
            "li" | "la" => {
                st.expect_ops(2)?;
                let rd = st.reg(0)?;
                let v = self.u32_value(st, 1)?;
                let words = li_size.unwrap_or(2);
                if words == 1 {
                    return one(i_type(v as i32, 0, 0, rd, 0x13));
                }
                let (hi, lo) = hi_lo(v);
                Ok(vec![u_type(hi, rd, 0x37), i_type(lo, rd, 0, rd, 0x13)])
            }
            "ecall" => one(0x0000_0073),
            "ebreak" => one(0x0010_0073),
            "mret" => one(0x3020_0073),
            "wfi" => one(0x1050_0073),
            "csrrw" | "csrrs" | "csrrc" | "csrrwi" | "csrrsi" | "csrrci" => {
                st.expect_ops(3)?;
                let f3 = match m {
                    "csrrw" => 1,
                    "csrrs" => 2,
                    "csrrc" => 3,
                    "csrrwi" => 5,
                    "csrrsi" => 6,
                    _ => 7,
                };
                let src = if f3 >= 5 {
                    let v = self.value(st, 2)?;
                    if !(0..32).contains(&v) {
                        return Err(st.err(st.ops[2].col, "CSR immediate out of range"));
                    }
                    v as u8
                } else {
                    st.reg(2)?
                };
                one(csr_word(self.csr(st, 1)?, src, f3, st.reg(0)?))
            }
            "csrr" => {
                st.expect_ops(2)?;
                one(csr_word(self.csr(st, 1)?, 0, 2, st.reg(0)?))
            }
            "csrw" | "csrs" | "csrc" => {
                st.expect_ops(2)?;
                let f3 = match m {
                    "csrw" => 1,
                    "csrs" => 2,
                    _ => 3,
                };
                one(csr_word(self.csr(st, 0)?, st.reg(1)?, f3, 0))
            }
            "csrwi" => {
                st.expect_ops(2)?;
                let v = self.value(st, 1)?;
                if !(0..32).contains(&v) {
                    return Err(st.err(st.ops[1].col, "CSR immediate out of range"));
                }
                one(csr_word(self.csr(st, 0)?, v as u8, 5, 0))
            }
            _ => Err(st.err(st.col, format!("unknown mnemonic `{m}`"))),
        }
    }
}

pub const NOP: u32 = 0x0000_0013;
pub const RET: u32 = 0x0000_8067;

fn csr_word(csr: u16, src: u8, f3: u32, rd: u8) -> u32 {
    (csr as u32) << 20 | (src as u32) << 15 | f3 << 12 | (rd as u32) << 7 | 0x73
}

fn ascii_bytes(st: &Stmt) -> Result<Vec<u8>, AsmError> {
    st.expect_ops(1)?;
    let op = &st.ops[0];
    let t = op.text.trim();
    if t.len() < 2 || !t.starts_with('"') || !t.ends_with('"') {
        return Err(st.err(op.col, "expected a quoted string"));
    }
    let mut out = Vec::new();
    let mut chars = t[1..t.len() - 1].chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push(b'\n'),
                Some('t') => out.push(b'\t'),
                Some('0') => out.push(0),
                Some('\\') => out.push(b'\\'),
                Some('"') => out.push(b'"'),
                _ => return Err(st.err(op.col, "bad escape")),
            }
        } else if c.is_ascii() {
            out.push(c as u8);
        } else {
            return Err(st.err(op.col, "non-ASCII character"));
        }
    }
    Ok(out)
}

fn pack_bytes(bytes: &[u8]) -> Vec<u32> {
    bytes
        .chunks(4)
        .map(|c| {
            let mut b = [0u8; 4];
            b[..c.len()].copy_from_slice(c);
            u32::from_le_bytes(b)
        })
        .collect()
}

/// Size in bytes of one statement during pass one (`None` for directives
/// that emit nothing).
fn li_words(asm: &Asm, st: &Stmt) -> u32 {
    if st.mnemonic == "la" || st.ops.len() != 2 {
        return 2;
    }
    match eval(&st.ops[1].text, &asm.symbols) {
        Ok(Some(v)) if fits_i12(v) => 1,
        _ => 2,
    }
}

pub fn assemble(src: &str) -> Result<Program, AsmError> {
    let lines = parse_lines(src)?;
    let mut asm = Asm {
        symbols: BTreeMap::new(),
        li_sizes: Vec::new(),
    };
    let mut origin: Option<u32> = None;

    // Pass one: addresses.
    let mut pc = 0u32;
    let mut emitted = false;
    for l in &lines {
        match l {
            Line::Label(name, line) => {
                if asm.symbols.contains_key(name) {
                    return Err(AsmError::Parse {
                        line: *line,
                        col: 1,
                        msg: format!("duplicate label `{name}`"),
                    });
                }
                asm.symbols.insert(name.clone(), pc);
            }
            Line::Stmt(st) => match st.mnemonic.as_str() {
                ".org" => {
                    st.expect_ops(1)?;
                    let target = asm.u32_value(st, 0)?;
                    if target % 4 != 0 {
                        return Err(st.err(st.ops[0].col, ".org address must be word aligned"));
                    }
                    if !emitted {
                        if origin.is_some_and(|o| target < o) {
                            return Err(st.err(st.ops[0].col, ".org may only move forward"));
                        }
                        // Labels defined before the first .org follow it.
                        for v in asm.symbols.values_mut() {
                            if *v == pc {
                                *v = target;
                            }
                        }
                        origin = Some(target);
                        pc = target;
                    } else if target < pc {
                        return Err(st.err(st.ops[0].col, ".org may only move forward"));
                    } else {
                        pc = target;
                    }
                }
                ".equ" | ".set" => {
                    st.expect_ops(2)?;
                    let name = st.ops[0].text.clone();
                    if !is_ident(&name) || asm.symbols.contains_key(&name) {
                        return Err(st.err(st.ops[0].col, format!("bad or duplicate symbol `{name}`")));
                    }
                    let v = asm.u32_value(st, 1)?;
                    asm.symbols.insert(name, v);
                }
                ".isr" | ".globl" | ".global" | ".text" => {}
                ".word" => {
                    if st.ops.is_empty() {
                        return Err(st.err(st.col, ".word needs a value"));
                    }
                    pc += 4 * st.ops.len() as u32;
                    emitted = true;
                }
                ".ascii" | ".asciz" => {
                    let mut b = ascii_bytes(st)?;
                    if st.mnemonic == ".asciz" {
                        b.push(0);
                    }
                    pc += 4 * b.len().div_ceil(4) as u32;
                    emitted = true;
                }
                "li" => {
                    let n = li_words(&asm, st);
                    asm.li_sizes.push(n);
                    pc += 4 * n;
                    emitted = true;
                }
                "la" => {
                    pc += 8;
                    emitted = true;
                }
                m if m.starts_with('.') => {
                    return Err(st.err(st.col, format!("unknown directive `{m}`")));
                }
                _ => {
                    pc += 4;
                    emitted = true;
                }
            },
        }
        if pc < origin.unwrap_or(0) {
            unreachable!("pc moved backwards");
        }
    }
    let origin = origin.unwrap_or(0);

    // Pass two: encoding.
    let mut prog = Program {
        origin,
        words: Vec::new(),
        kinds: Vec::new(),
        symbols: asm.symbols.clone(),
        isr_roots: Vec::new(),
    };
    let mut li_index = 0;
    for l in &lines {
        let Line::Stmt(st) = l else { continue };
        let pc = prog.end();
        match st.mnemonic.as_str() {
            ".org" => {
                let target = asm.u32_value(st, 0)?;
                while prog.end() < target {
                    prog.words.push(0);
                    prog.kinds.push(WordKind::Data);
                }
            }
            ".equ" | ".set" | ".globl" | ".global" | ".text" => {}
            ".isr" => {
                st.expect_ops(1)?;
                let v = asm.u32_value(st, 0)?;
                prog.isr_roots.push(v);
            }
            ".word" => {
                for i in 0..st.ops.len() {
                    let v = asm.u32_value(st, i)?;
                    prog.words.push(v);
                    prog.kinds.push(WordKind::Data);
                }
            }
            ".ascii" | ".asciz" => {
                let mut b = ascii_bytes(st)?;
                if st.mnemonic == ".asciz" {
                    b.push(0);
                }
                for w in pack_bytes(&b) {
                    prog.words.push(w);
                    prog.kinds.push(WordKind::Data);
                }
            }
            m => {
                let li_size = if m == "li" {
                    li_index += 1;
                    Some(asm.li_sizes[li_index - 1])
                } else {
                    None
                };
                for w in asm.encode(st, pc, li_size)? {
                    prog.words.push(w);
                    prog.kinds.push(WordKind::Instr { line: st.line });
                }
            }
        }
    }
    for &root in &prog.isr_roots {
        if !prog.is_instr(root) {
            return Err(AsmError::Parse {
                line: 0,
                col: 0,
                msg: format!(".isr target {root:#x} is not an instruction"),
            });
        }
    }
    Ok(prog)
}
