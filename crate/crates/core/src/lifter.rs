//! Lifting decoded instructions into a small effect IR.
//!
//! Only the effects that matter for syscall-number flow are modeled: constant
//! and register moves, stack-slot traffic, a few immediate arithmetic forms,
//! push/pop and control flow. Anything else havocs every register it writes.

use thiserror::Error;

use crate::decoder::{
    DecodeError, Flow, Gpr, IcedDecoder, Insn, InstructionDecoder, MemBase, MemOperand, Opcode, Operand, RegId,
    Width,
};
use crate::loader::BinaryImage;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LiftError {
    #[error("decode failure at {0:#x}")]
    DecodeFailure(u64),
    #[error("{0:#x} is not in a code range")]
    NotCode(u64),
}

impl From<DecodeError> for LiftError {
    fn from(e: DecodeError) -> Self {
        LiftError::DecodeFailure(e.addr)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    And,
    Or,
    Xor,
}

impl ArithOp {
    pub fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            ArithOp::Add => a.wrapping_add(b),
            ArithOp::Sub => a.wrapping_sub(b),
            ArithOp::And => a & b,
            ArithOp::Or => a | b,
            ArithOp::Xor => a ^ b,
        }
    }
}

/// Value written by a store or push.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StoreSrc {
    Reg(RegId),
    Const(u64),
    Unknown,
}

/// Source of an effective-address computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EaSource {
    /// rip-relative or absolute: a constant address.
    Absolute(u64),
    /// `base + disp` with no index.
    RegDisp(Gpr, i64),
    /// Anything with an index register or segment override.
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroOpKind {
    WriteRegConst { dst: RegId, value: u64 },
    CopyRegReg { dst: RegId, src: RegId },
    LoadEffectiveAddress { dst: RegId, src: EaSource },
    /// Store to `[base + disp]` where base is rsp or rbp.
    StoreStack { base: Gpr, disp: i64, src: StoreSrc, width: Width },
    /// Load from `[base + disp]` where base is rsp or rbp.
    LoadStack { dst: RegId, base: Gpr, disp: i64 },
    StoreUnknown,
    LoadUnknown { dst: RegId },
    ArithImm { dst: RegId, op: ArithOp, imm: u64 },
    HavocReg { reg: Gpr },
    Push { src: StoreSrc },
    /// `None` when popping into memory.
    Pop { dst: Option<RegId> },
    CallDirect { target: u64 },
    /// `slot` is the absolute memory operand (`call *slot(%rip)`), if any.
    CallIndirect { slot: Option<u64> },
    Return,
    JumpDirect { target: u64 },
    /// `slot` as for calls; `table` is the absolute base of a
    /// `jmp *table(,%reg,8)` dispatch; `reg` the register jumped through.
    JumpIndirect { slot: Option<u64>, table: Option<u64>, reg: Option<Gpr> },
    Branch { target: u64 },
    Syscall,
    Nop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MicroOp {
    /// Address of the instruction this op was lifted from.
    pub addr: u64,
    pub kind: MicroOpKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminator {
    /// Falls into the block starting at the given address.
    Fallthrough(u64),
    JumpDirect(u64),
    JumpIndirect,
    Branch { taken: u64, fallthrough: u64 },
    CallDirect { target: u64, ret: u64 },
    CallIndirect { ret: u64 },
    Return,
    /// The last instruction is a syscall and execution continues at `next`.
    SyscallContinuing(u64),
    /// hlt, ud2, int3: no successor.
    Halt,
    /// Synthetic block standing for undecodable bytes: unknown effects.
    Poisoned,
}

impl Terminator {
    pub fn name(&self) -> &'static str {
        match self {
            Terminator::Fallthrough(_) => "fallthrough",
            Terminator::JumpDirect(_) => "jump",
            Terminator::JumpIndirect => "jump-indirect",
            Terminator::Branch { .. } => "branch",
            Terminator::CallDirect { .. } => "call",
            Terminator::CallIndirect { .. } => "call-indirect",
            Terminator::Return => "return",
            Terminator::SyscallContinuing(_) => "syscall-continuing",
            Terminator::Halt => "halt",
            Terminator::Poisoned => "poisoned",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LiftedBlock {
    pub start: u64,
    pub byte_len: u64,
    pub ops: Vec<MicroOp>,
    pub terminator: Terminator,
    /// Code addresses materialized in this block (lea or immediate operands).
    pub addresses_taken_here: Vec<u64>,
    /// `int $0x80` / `sysenter` instructions, reported but not analyzed.
    pub legacy_syscalls: Vec<u64>,
    /// Instruction addresses in order.
    pub insns: Vec<u64>,
}

impl LiftedBlock {
    pub fn end(&self) -> u64 {
        self.start + self.byte_len
    }

    pub fn poisoned(addr: u64) -> LiftedBlock {
        LiftedBlock {
            start: addr,
            byte_len: 0,
            ops: Vec::new(),
            terminator: Terminator::Poisoned,
            addresses_taken_here: Vec::new(),
            legacy_syscalls: Vec::new(),
            insns: Vec::new(),
        }
    }

    pub fn syscall_sites(&self) -> impl Iterator<Item = u64> + '_ {
        self.ops
            .iter()
            .filter(|o| o.kind == MicroOpKind::Syscall)
            .map(|o| o.addr)
    }

    pub fn contains_insn(&self, addr: u64) -> bool {
        self.insns.binary_search(&addr).is_ok()
    }
}

/// Lifts one block: decodes from `start` until a control-flow terminator.
pub fn lift_block(img: &BinaryImage, start: u64) -> Result<LiftedBlock, LiftError> {
    lift_block_with(img, &IcedDecoder, start, &|_| false)
}

/// Lifts from `start` until a terminator or until the next instruction would
/// start at an address for which `is_leader` holds.
pub fn lift_block_with(
    img: &BinaryImage,
    decoder: &dyn InstructionDecoder,
    start: u64,
    is_leader: &dyn Fn(u64) -> bool,
) -> Result<LiftedBlock, LiftError> {
    let mut insns = Vec::new();
    let mut addr = start;
    loop {
        let bytes = img.code_bytes_from(addr).ok_or(LiftError::NotCode(addr))?;
        let insn = decoder.decode(bytes, addr)?;
        let next = insn.end();
        let stop = insn.flow != Flow::Next;
        insns.push(insn);
        if stop || is_leader(next) || !img.is_code(next) {
            break;
        }
        addr = next;
    }
    Ok(lift_insns(img, &insns))
}

/// Lifts a straight-line instruction sequence into a block. The last
/// instruction decides the terminator.
pub fn lift_insns(img: &BinaryImage, insns: &[Insn]) -> LiftedBlock {
    let code = |a: u64| img.is_code(a);
    lift_insns_with(&code, insns)
}

pub fn lift_insns_with(is_code: &dyn Fn(u64) -> bool, insns: &[Insn]) -> LiftedBlock {
    assert!(!insns.is_empty(), "a block has at least one instruction");
    let start = insns[0].addr;
    let last = insns.last().unwrap();
    let mut block = LiftedBlock {
        start,
        byte_len: last.end() - start,
        ops: Vec::with_capacity(insns.len()),
        terminator: Terminator::Fallthrough(last.end()),
        addresses_taken_here: Vec::new(),
        legacy_syscalls: Vec::new(),
        insns: insns.iter().map(|i| i.addr).collect(),
    };
    for insn in insns {
        lift_insn(is_code, insn, &mut block);
    }
    block.terminator = terminator_of(last);
    block.addresses_taken_here.sort_unstable();
    block.addresses_taken_here.dedup();
    block
}

fn terminator_of(insn: &Insn) -> Terminator {
    let next = insn.end();
    let target = insn.operands.iter().find_map(|o| match o {
        Operand::Target(t) => Some(*t),
        _ => None,
    });
    match insn.flow {
        Flow::Next if insn.opcode == Opcode::Syscall => Terminator::SyscallContinuing(next),
        Flow::Next => Terminator::Fallthrough(next),
        Flow::Jump => target.map(Terminator::JumpDirect).unwrap_or(Terminator::JumpIndirect),
        Flow::IndirectJump => Terminator::JumpIndirect,
        Flow::Branch => match target {
            Some(t) => Terminator::Branch { taken: t, fallthrough: next },
            None => Terminator::Fallthrough(next),
        },
        Flow::Call => match target {
            Some(t) => Terminator::CallDirect { target: t, ret: next },
            None => Terminator::CallIndirect { ret: next },
        },
        Flow::IndirectCall => Terminator::CallIndirect { ret: next },
        Flow::Return => Terminator::Return,
        Flow::Stop => Terminator::Halt,
    }
}

fn stack_base(m: &MemOperand) -> Option<Gpr> {
    match (m.base, m.index, m.segment_override) {
        (MemBase::Reg(g @ (Gpr::Rsp | Gpr::Rbp)), None, false) => Some(g),
        _ => None,
    }
}

fn push(block: &mut LiftedBlock, addr: u64, kind: MicroOpKind) {
    block.ops.push(MicroOp { addr, kind });
}

fn note_code_address(is_code: &dyn Fn(u64) -> bool, block: &mut LiftedBlock, value: u64) {
    if is_code(value) {
        block.addresses_taken_here.push(value);
    }
}

/// Fallback for instructions outside the modeled subset: havoc every written
/// register and record a memory write.
fn havoc(block: &mut LiftedBlock, insn: &Insn) {
    for &g in &insn.writes {
        push(block, insn.addr, MicroOpKind::HavocReg { reg: g });
    }
    if insn.writes_memory {
        let stack_dst = insn.operands.iter().find_map(|o| match o {
            Operand::Mem(m) => stack_base(m).map(|b| (b, m.disp, m.size)),
            _ => None,
        });
        let kind = match stack_dst {
            Some((base, disp, size)) if size > 0 => MicroOpKind::StoreStack {
                base,
                disp,
                src: StoreSrc::Unknown,
                width: Width::from_bytes(size).unwrap_or(Width::W64),
            },
            _ => MicroOpKind::StoreUnknown,
        };
        // Wide stores (vector spills) cover several slots; model them as an
        // unknown store so every overlapped slot is invalidated.
        let kind = match kind {
            MicroOpKind::StoreStack { .. } if !matches!(stack_dst, Some((_, _, 1 | 2 | 4 | 8))) => {
                MicroOpKind::StoreUnknown
            }
            k => k,
        };
        push(block, insn.addr, kind);
    }
}

fn lift_insn(is_code: &dyn Fn(u64) -> bool, insn: &Insn, block: &mut LiftedBlock) {
    use MicroOpKind as K;
    let a = insn.addr;
    let ops = &insn.operands;
    match (insn.opcode, ops.as_slice()) {
        (Opcode::Syscall, _) => push(block, a, K::Syscall),
        (Opcode::Sysenter | Opcode::Int, _) => {
            let is_int80 = insn.opcode == Opcode::Sysenter || matches!(ops.first(), Some(Operand::Imm(0x80)));
            if is_int80 {
                block.legacy_syscalls.push(a);
            }
            havoc(block, insn);
            // The kernel writes rax on return even if the decoder does not say so.
            if !insn.writes.contains(&Gpr::Rax) {
                push(block, a, K::HavocReg { reg: Gpr::Rax });
            }
        }
        (Opcode::Nop | Opcode::Endbr, _) => push(block, a, K::Nop),
        (Opcode::Mov, [Operand::Reg(dst), Operand::Imm(v)]) => {
            note_code_address(is_code, block, *v);
            push(block, a, K::WriteRegConst { dst: *dst, value: *v & dst.width.mask() });
        }
        (Opcode::Mov, [Operand::Reg(dst), Operand::Reg(src)]) => {
            push(block, a, K::CopyRegReg { dst: *dst, src: *src })
        }
        (Opcode::Mov, [Operand::Reg(dst), Operand::Mem(m)]) => match stack_base(m) {
            Some(base) => push(block, a, K::LoadStack { dst: *dst, base, disp: m.disp }),
            None => push(block, a, K::LoadUnknown { dst: *dst }),
        },
        (Opcode::Mov, [Operand::Mem(m), src @ (Operand::Reg(_) | Operand::Imm(_))]) => {
            let width = Width::from_bytes(m.size).unwrap_or(Width::W64);
            let src = match src {
                Operand::Reg(r) => StoreSrc::Reg(*r),
                Operand::Imm(v) => {
                    note_code_address(is_code, block, *v);
                    StoreSrc::Const(*v & width.mask())
                }
                _ => unreachable!(),
            };
            match stack_base(m) {
                Some(base) => push(block, a, K::StoreStack { base, disp: m.disp, src, width }),
                None => push(block, a, K::StoreUnknown),
            }
        }
        (Opcode::Lea, [Operand::Reg(dst), Operand::Mem(m)]) => {
            let src = if let Some(abs) = m.absolute() {
                note_code_address(is_code, block, abs);
                EaSource::Absolute(abs)
            } else {
                match (m.base, m.index, m.segment_override) {
                    (MemBase::Reg(b), None, false) => EaSource::RegDisp(b, m.disp),
                    _ => EaSource::Complex,
                }
            };
            push(block, a, K::LoadEffectiveAddress { dst: *dst, src });
        }
        (Opcode::Xor, [Operand::Reg(d), Operand::Reg(s)]) if d == s => {
            push(block, a, K::WriteRegConst { dst: *d, value: 0 })
        }
        (Opcode::Add | Opcode::Sub | Opcode::And | Opcode::Or | Opcode::Xor, [Operand::Reg(dst), Operand::Imm(v)]) => {
            let op = match insn.opcode {
                Opcode::Add => ArithOp::Add,
                Opcode::Sub => ArithOp::Sub,
                Opcode::And => ArithOp::And,
                Opcode::Or => ArithOp::Or,
                _ => ArithOp::Xor,
            };
            push(block, a, K::ArithImm { dst: *dst, op, imm: *v & dst.width.mask() });
        }
        (Opcode::Push, [src]) if insn.len > 0 && pushes_qword(insn) => {
            let src = match src {
                Operand::Reg(r) if r.width == Width::W64 => StoreSrc::Reg(*r),
                Operand::Imm(v) => {
                    note_code_address(is_code, block, *v);
                    StoreSrc::Const(*v)
                }
                _ => StoreSrc::Unknown,
            };
            push(block, a, K::Push { src });
        }
        (Opcode::Pop, [dst]) if pushes_qword(insn) => {
            let dst = match dst {
                Operand::Reg(r) if r.width == Width::W64 => Some(*r),
                _ => None,
            };
            if dst.is_none() && insn.writes_memory {
                push(block, a, K::Pop { dst: None });
                push(block, a, K::StoreUnknown);
            } else {
                push(block, a, K::Pop { dst });
            }
        }
        (Opcode::Leave, _) => {
            push(block, a, K::CopyRegReg { dst: RegId::full(Gpr::Rsp), src: RegId::full(Gpr::Rbp) });
            push(block, a, K::Pop { dst: Some(RegId::full(Gpr::Rbp)) });
        }
        (Opcode::Call, _) => match (insn.flow, ops.first()) {
            (Flow::Call, Some(Operand::Target(t))) => push(block, a, K::CallDirect { target: *t }),
            (_, Some(Operand::Mem(m))) => push(block, a, K::CallIndirect { slot: m.absolute() }),
            _ => push(block, a, K::CallIndirect { slot: None }),
        },
        (Opcode::Ret, _) => push(block, a, K::Return),
        (Opcode::Jmp, _) => match (insn.flow, ops.first()) {
            (Flow::Jump, Some(Operand::Target(t))) => push(block, a, K::JumpDirect { target: *t }),
            (_, Some(Operand::Mem(m))) => {
                let table = match (m.base, m.index, m.segment_override) {
                    (MemBase::None, Some((_, 8)), false) => Some(m.disp as u64),
                    _ => None,
                };
                push(block, a, K::JumpIndirect { slot: m.absolute(), table, reg: None })
            }
            (_, Some(Operand::Reg(r))) => push(block, a, K::JumpIndirect { slot: None, table: None, reg: Some(r.gpr) }),
            _ => push(block, a, K::JumpIndirect { slot: None, table: None, reg: None }),
        },
        (Opcode::Jcc, _) => match ops.first() {
            Some(Operand::Target(t)) => push(block, a, K::Branch { target: *t }),
            _ => havoc(block, insn),
        },
        _ => {
            // Remaining control transfers (loop, jrcxz, far forms) keep their
            // flow but havoc what they write.
            havoc(block, insn);
            if insn.flow == Flow::Branch {
                if let Some(Operand::Target(t)) = ops.iter().find(|o| matches!(o, Operand::Target(_))) {
                    push(block, a, K::Branch { target: *t });
                }
            }
        }
    }
}

/// push/pop with a 64-bit stack slot (the only form emitted in 64-bit code
/// apart from the rare 0x66-prefixed variant).
fn pushes_qword(insn: &Insn) -> bool {
    match insn.operands.first() {
        Some(Operand::Reg(r)) => r.width == Width::W64,
        Some(Operand::Mem(m)) => m.size == 8,
        Some(Operand::Imm(_)) => true,
        _ => false,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::decoder::IcedDecoder;

    fn lift_bytes(bytes: &[u8]) -> LiftedBlock {
        let base = 0x401000u64;
        let mut insns = Vec::new();
        let mut off = 0usize;
        while off < bytes.len() {
            let i = IcedDecoder.decode(&bytes[off..], base + off as u64).unwrap();
            off += i.len;
            insns.push(i);
        }
        let end = base + bytes.len() as u64;
        lift_insns_with(&|a| (base..end + 0x1000).contains(&a), &insns)
    }

    fn kinds(b: &LiftedBlock) -> Vec<MicroOpKind> {
        b.ops.iter().map(|o| o.kind).collect()
    }

    #[test]
    fn mov_imm_then_syscall() {
        // mov eax, 1; syscall
        let b = lift_bytes(&[0xb8, 0x01, 0, 0, 0, 0x0f, 0x05]);
        assert_eq!(
            kinds(&b),
            vec![
                MicroOpKind::WriteRegConst { dst: RegId::new(Gpr::Rax, Width::W32), value: 1 },
                MicroOpKind::Syscall
            ]
        );
        assert_eq!(b.terminator, Terminator::SyscallContinuing(0x401007));
        assert_eq!(b.byte_len, 7);
    }

    #[test]
    fn stack_round_trip_shape() {
        // mov [rsp-8], rdi; mov rax, [rsp-8]; syscall
        let b = lift_bytes(&[0x48, 0x89, 0x7c, 0x24, 0xf8, 0x48, 0x8b, 0x44, 0x24, 0xf8, 0x0f, 0x05]);
        assert_eq!(
            kinds(&b),
            vec![
                MicroOpKind::StoreStack {
                    base: Gpr::Rsp,
                    disp: -8,
                    src: StoreSrc::Reg(RegId::full(Gpr::Rdi)),
                    width: Width::W64
                },
                MicroOpKind::LoadStack { dst: RegId::full(Gpr::Rax), base: Gpr::Rsp, disp: -8 },
                MicroOpKind::Syscall,
            ]
        );
    }

    #[test]
    fn lea_of_code_address_is_address_taken() {
        // lea rdi, [rip+0x10]; ret
        let b = lift_bytes(&[0x48, 0x8d, 0x3d, 0x10, 0, 0, 0, 0xc3]);
        assert_eq!(b.addresses_taken_here, vec![0x401017]);
        assert_eq!(b.terminator, Terminator::Return);
    }

    #[test]
    fn self_xor_is_zero_and_other_ops_havoc() {
        // xor eax, eax; imul ecx, edx
        let b = lift_bytes(&[0x31, 0xc0, 0x0f, 0xaf, 0xca]);
        assert_eq!(
            kinds(&b),
            vec![
                MicroOpKind::WriteRegConst { dst: RegId::new(Gpr::Rax, Width::W32), value: 0 },
                MicroOpKind::HavocReg { reg: Gpr::Rcx }
            ]
        );
    }

    #[test]
    fn legacy_entry_points_are_recorded() {
        // int 0x80; sysenter
        let b = lift_bytes(&[0xcd, 0x80, 0x0f, 0x34]);
        assert_eq!(b.legacy_syscalls, vec![0x401000, 0x401002]);
        assert!(b.ops.iter().all(|o| o.kind != MicroOpKind::Syscall));
    }
}
