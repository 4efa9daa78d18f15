//! Instruction decoding boundary.
//!
//! The rest of the crate never sees a third-party instruction type: a
//! [`InstructionDecoder`] turns bytes at an address into an [`Insn`], a small
//! structured view (opcode class, operands, written registers). The default
//! backend is [`IcedDecoder`].

use iced_x86::{
    Code, Decoder, DecoderOptions, FlowControl, Instruction, InstructionInfoFactory, MemorySize,
    Mnemonic, OpAccess, OpKind, Register,
};
use thiserror::Error;

/// The sixteen general purpose registers, by 64-bit parent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gpr {
    Rax,
    Rcx,
    Rdx,
    Rbx,
    Rsp,
    Rbp,
    Rsi,
    Rdi,
    R8,
    R9,
    R10,
    R11,
    R12,
    R13,
    R14,
    R15,
}

impl Gpr {
    pub const ALL: [Gpr; 16] = [
        Gpr::Rax,
        Gpr::Rcx,
        Gpr::Rdx,
        Gpr::Rbx,
        Gpr::Rsp,
        Gpr::Rbp,
        Gpr::Rsi,
        Gpr::Rdi,
        Gpr::R8,
        Gpr::R9,
        Gpr::R10,
        Gpr::R11,
        Gpr::R12,
        Gpr::R13,
        Gpr::R14,
        Gpr::R15,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Gpr::Rax => "rax",
            Gpr::Rcx => "rcx",
            Gpr::Rdx => "rdx",
            Gpr::Rbx => "rbx",
            Gpr::Rsp => "rsp",
            Gpr::Rbp => "rbp",
            Gpr::Rsi => "rsi",
            Gpr::Rdi => "rdi",
            Gpr::R8 => "r8",
            Gpr::R9 => "r9",
            Gpr::R10 => "r10",
            Gpr::R11 => "r11",
            Gpr::R12 => "r12",
            Gpr::R13 => "r13",
            Gpr::R14 => "r14",
            Gpr::R15 => "r15",
        }
    }

    /// Registers a callee may clobber under the System V x86-64 convention.
    pub fn is_caller_saved(self) -> bool {
        matches!(
            self,
            Gpr::Rax
                | Gpr::Rcx
                | Gpr::Rdx
                | Gpr::Rsi
                | Gpr::Rdi
                | Gpr::R8
                | Gpr::R9
                | Gpr::R10
                | Gpr::R11
        )
    }
}

impl std::fmt::Display for Gpr {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Width of a register access.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Width {
    /// Bits 0..8.
    Low8,
    /// Bits 8..16 (ah, ch, dh, bh).
    High8,
    W16,
    W32,
    W64,
}

impl Width {
    pub fn bits(self) -> u32 {
        match self {
            Width::Low8 | Width::High8 => 8,
            Width::W16 => 16,
            Width::W32 => 32,
            Width::W64 => 64,
        }
    }

    pub fn shift(self) -> u32 {
        if self == Width::High8 {
            8
        } else {
            0
        }
    }

    pub fn mask(self) -> u64 {
        match self.bits() {
            64 => u64::MAX,
            b => (1u64 << b) - 1,
        }
    }

    pub fn from_bytes(bytes: u32) -> Option<Width> {
        match bytes {
            1 => Some(Width::Low8),
            2 => Some(Width::W16),
            4 => Some(Width::W32),
            8 => Some(Width::W64),
            _ => None,
        }
    }
}

/// A register operand: parent register plus access width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RegId {
    pub gpr: Gpr,
    pub width: Width,
}

impl RegId {
    pub const fn new(gpr: Gpr, width: Width) -> Self {
        RegId { gpr, width }
    }

    pub const fn full(gpr: Gpr) -> Self {
        RegId { gpr, width: Width::W64 }
    }
}

/// Base of a memory operand.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MemBase {
    None,
    Rip,
    Reg(Gpr),
    /// Segment-relative or otherwise exotic addressing.
    Other,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MemOperand {
    pub base: MemBase,
    pub index: Option<(Gpr, u32)>,
    /// Displacement. For rip-relative operands this is already the absolute
    /// effective address.
    pub disp: i64,
    /// Access size in bytes, 0 when the instruction does not access memory
    /// through the operand (lea) or the size is unknown.
    pub size: u32,
    /// fs/gs override present.
    pub segment_override: bool,
}

impl MemOperand {
    /// The absolute address when the operand is rip-relative or absolute.
    pub fn absolute(&self) -> Option<u64> {
        match (self.base, self.index, self.segment_override) {
            (MemBase::Rip, None, false) | (MemBase::None, None, false) => Some(self.disp as u64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Operand {
    Reg(RegId),
    /// A register outside the general purpose set (vector, segment, ...).
    OtherReg,
    Imm(u64),
    Mem(MemOperand),
    /// Direct branch or call target.
    Target(u64),
}

/// Opcode classes the lifter distinguishes; everything else is `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Opcode {
    Mov,
    Lea,
    Xor,
    Add,
    Sub,
    And,
    Or,
    Cmp,
    Push,
    Pop,
    Call,
    Ret,
    Jmp,
    Jcc,
    Syscall,
    Sysenter,
    Int,
    Endbr,
    Nop,
    Leave,
    Hlt,
    Ud,
    Other,
}

/// How control leaves an instruction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Flow {
    Next,
    Jump,
    IndirectJump,
    Branch,
    Call,
    IndirectCall,
    Return,
    /// No architectural successor (hlt, ud2, int3).
    Stop,
}

/// A decoded instruction.
#[derive(Debug, Clone, PartialEq)]
pub struct Insn {
    pub addr: u64,
    pub len: usize,
    pub opcode: Opcode,
    pub flow: Flow,
    pub operands: Vec<Operand>,
    /// General purpose registers (64-bit parents) the instruction may write,
    /// including conditional writes.
    pub writes: Vec<Gpr>,
    /// Whether the instruction may write memory (explicit operand or implicit
    /// stack traffic).
    pub writes_memory: bool,
    /// Textual form, for dumps and diagnostics.
    pub text: String,
}

impl Insn {
    pub fn end(&self) -> u64 {
        self.addr + self.len as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot decode instruction at {addr:#x}")]
pub struct DecodeError {
    pub addr: u64,
}

/// Decoder plug-in boundary: bytes at an address in, structured instruction out.
pub trait InstructionDecoder: Send + Sync {
    fn decode(&self, bytes: &[u8], addr: u64) -> Result<Insn, DecodeError>;
}

/// x86-64 decoding backed by iced-x86.
#[derive(Debug, Default, Clone, Copy)]
pub struct IcedDecoder;

impl InstructionDecoder for IcedDecoder {
    fn decode(&self, bytes: &[u8], addr: u64) -> Result<Insn, DecodeError> {
        let mut decoder = Decoder::with_ip(64, bytes, addr, DecoderOptions::NONE);
        if !decoder.can_decode() {
            return Err(DecodeError { addr });
        }
        let instr = decoder.decode();
        if instr.is_invalid() {
            return Err(DecodeError { addr });
        }
        Ok(convert(&instr))
    }
}

fn gpr_of(reg: Register) -> Option<RegId> {
    if !reg.is_gpr() {
        return None;
    }
    let full = reg.full_register();
    let gpr = match full {
        Register::RAX => Gpr::Rax,
        Register::RCX => Gpr::Rcx,
        Register::RDX => Gpr::Rdx,
        Register::RBX => Gpr::Rbx,
        Register::RSP => Gpr::Rsp,
        Register::RBP => Gpr::Rbp,
        Register::RSI => Gpr::Rsi,
        Register::RDI => Gpr::Rdi,
        Register::R8 => Gpr::R8,
        Register::R9 => Gpr::R9,
        Register::R10 => Gpr::R10,
        Register::R11 => Gpr::R11,
        Register::R12 => Gpr::R12,
        Register::R13 => Gpr::R13,
        Register::R14 => Gpr::R14,
        Register::R15 => Gpr::R15,
        _ => return None,
    };
    let width = if reg.is_gpr64() {
        Width::W64
    } else if reg.is_gpr32() {
        Width::W32
    } else if reg.is_gpr16() {
        Width::W16
    } else if matches!(reg, Register::AH | Register::CH | Register::DH | Register::BH) {
        Width::High8
    } else {
        Width::Low8
    };
    Some(RegId { gpr, width })
}

fn opcode_of(instr: &Instruction) -> Opcode {
    match instr.mnemonic() {
        Mnemonic::Mov => Opcode::Mov,
        Mnemonic::Lea => Opcode::Lea,
        Mnemonic::Xor => Opcode::Xor,
        Mnemonic::Add => Opcode::Add,
        Mnemonic::Sub => Opcode::Sub,
        Mnemonic::And => Opcode::And,
        Mnemonic::Or => Opcode::Or,
        Mnemonic::Cmp => Opcode::Cmp,
        Mnemonic::Push => Opcode::Push,
        Mnemonic::Pop => Opcode::Pop,
        Mnemonic::Call => Opcode::Call,
        Mnemonic::Ret => Opcode::Ret,
        Mnemonic::Jmp => Opcode::Jmp,
        Mnemonic::Syscall => Opcode::Syscall,
        Mnemonic::Sysenter => Opcode::Sysenter,
        Mnemonic::Int | Mnemonic::Int1 | Mnemonic::Into => Opcode::Int,
        Mnemonic::Endbr64 | Mnemonic::Endbr32 => Opcode::Endbr,
        Mnemonic::Nop => Opcode::Nop,
        Mnemonic::Leave => Opcode::Leave,
        Mnemonic::Hlt => Opcode::Hlt,
        Mnemonic::Ud0 | Mnemonic::Ud1 | Mnemonic::Ud2 | Mnemonic::Int3 => Opcode::Ud,
        _ if instr.flow_control() == FlowControl::ConditionalBranch => Opcode::Jcc,
        _ => Opcode::Other,
    }
}

fn flow_of(instr: &Instruction) -> Flow {
    // iced classifies the kernel entry instructions as calls; for control
    // flow purposes they return to the next instruction.
    if matches!(instr.mnemonic(), Mnemonic::Syscall | Mnemonic::Sysenter | Mnemonic::Int | Mnemonic::Into) {
        return Flow::Next;
    }
    if instr.mnemonic() == Mnemonic::Hlt {
        return Flow::Stop;
    }
    match instr.flow_control() {
        FlowControl::Next | FlowControl::XbeginXabortXend => Flow::Next,
        FlowControl::UnconditionalBranch => Flow::Jump,
        FlowControl::IndirectBranch => Flow::IndirectJump,
        FlowControl::ConditionalBranch => Flow::Branch,
        FlowControl::Call => Flow::Call,
        FlowControl::IndirectCall => Flow::IndirectCall,
        FlowControl::Return => Flow::Return,
        // syscall/sysenter/int return to the next instruction; int3 and ud*
        // do not fall through in well-formed code.
        FlowControl::Interrupt => {
            if matches!(instr.mnemonic(), Mnemonic::Int3 | Mnemonic::Ud0 | Mnemonic::Ud1 | Mnemonic::Ud2) {
                Flow::Stop
            } else {
                Flow::Next
            }
        }
        FlowControl::Exception => Flow::Stop,
    }
}

fn convert(instr: &Instruction) -> Insn {
    let mut operands = Vec::with_capacity(instr.op_count() as usize);
    for i in 0..instr.op_count() {
        let op = match instr.op_kind(i) {
            OpKind::Register => match gpr_of(instr.op_register(i)) {
                Some(r) => Operand::Reg(r),
                None => Operand::OtherReg,
            },
            OpKind::NearBranch16 | OpKind::NearBranch32 | OpKind::NearBranch64 => {
                Operand::Target(instr.near_branch_target())
            }
            OpKind::Immediate8
            | OpKind::Immediate8_2nd
            | OpKind::Immediate16
            | OpKind::Immediate32
            | OpKind::Immediate64
            | OpKind::Immediate8to16
            | OpKind::Immediate8to32
            | OpKind::Immediate8to64
            | OpKind::Immediate32to64 => Operand::Imm(instr.immediate(i)),
            OpKind::Memory => Operand::Mem(memory_operand(instr)),
            _ => Operand::OtherReg,
        };
        operands.push(op);
    }

    let mut factory = InstructionInfoFactory::new();
    let info = factory.info(instr);
    let mut writes: Vec<Gpr> = Vec::new();
    for used in info.used_registers() {
        let writes_reg = matches!(
            used.access(),
            OpAccess::Write | OpAccess::CondWrite | OpAccess::ReadWrite | OpAccess::ReadCondWrite
        );
        if writes_reg {
            if let Some(r) = gpr_of(used.register()) {
                if !writes.contains(&r.gpr) {
                    writes.push(r.gpr);
                }
            }
        }
    }
    writes.sort();
    let writes_memory = info.used_memory().iter().any(|m| {
        matches!(
            m.access(),
            OpAccess::Write | OpAccess::CondWrite | OpAccess::ReadWrite | OpAccess::ReadCondWrite
        )
    });

    Insn {
        addr: instr.ip(),
        len: instr.len(),
        opcode: opcode_of(instr),
        flow: flow_of(instr),
        operands,
        writes,
        writes_memory,
        text: format!("{instr}"),
    }
}

fn memory_operand(instr: &Instruction) -> MemOperand {
    let base_reg = instr.memory_base();
    let index_reg = instr.memory_index();
    let segment_override = matches!(instr.segment_prefix(), Register::FS | Register::GS);
    let size = match instr.memory_size() {
        MemorySize::Unknown => 0,
        s => s.size() as u32,
    };
    let size = if instr.code() == Code::Lea_r64_m || instr.mnemonic() == Mnemonic::Lea {
        0
    } else {
        size
    };
    let base = if base_reg == Register::RIP || base_reg == Register::EIP {
        MemBase::Rip
    } else if base_reg == Register::None {
        MemBase::None
    } else {
        match gpr_of(base_reg) {
            Some(r) if r.width == Width::W64 => MemBase::Reg(r.gpr),
            _ => MemBase::Other,
        }
    };
    let index = if index_reg == Register::None {
        None
    } else {
        gpr_of(index_reg).map(|r| (r.gpr, instr.memory_index_scale()))
    };
    let base = if index_reg != Register::None && index.is_none() {
        MemBase::Other
    } else {
        base
    };
    // iced reports rip-relative displacements as the final address already.
    let disp = instr.memory_displacement64() as i64;
    MemOperand {
        base,
        index,
        disp,
        size,
        segment_override,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dec(bytes: &[u8]) -> Insn {
        IcedDecoder.decode(bytes, 0x401000).unwrap()
    }

    #[test]
    fn mov_imm32_to_eax() {
        // mov eax, 60
        let i = dec(&[0xb8, 0x3c, 0x00, 0x00, 0x00]);
        assert_eq!(i.opcode, Opcode::Mov);
        assert_eq!(i.len, 5);
        assert_eq!(i.operands, vec![Operand::Reg(RegId::new(Gpr::Rax, Width::W32)), Operand::Imm(60)]);
        assert_eq!(i.writes, vec![Gpr::Rax]);
    }

    #[test]
    fn rip_relative_lea_resolves_absolute_address() {
        // lea rdi, [rip + 0x10]
        let i = dec(&[0x48, 0x8d, 0x3d, 0x10, 0x00, 0x00, 0x00]);
        assert_eq!(i.opcode, Opcode::Lea);
        match i.operands[1] {
            Operand::Mem(m) => {
                assert_eq!(m.base, MemBase::Rip);
                assert_eq!(m.absolute(), Some(0x401000 + 7 + 0x10));
            }
            ref other => panic!("unexpected operand {other:?}"),
        }
    }

    #[test]
    fn syscall_and_invalid_bytes() {
        let i = dec(&[0x0f, 0x05]);
        assert_eq!(i.opcode, Opcode::Syscall);
        assert_eq!(i.flow, Flow::Next);
        // push es is invalid in 64-bit mode
        assert_eq!(IcedDecoder.decode(&[0x06], 0x10), Err(DecodeError { addr: 0x10 }));
        assert!(IcedDecoder.decode(&[], 0x10).is_err());
    }

    #[test]
    fn high_byte_registers() {
        // mov ah, 1
        let i = dec(&[0xb4, 0x01]);
        assert_eq!(i.operands[0], Operand::Reg(RegId::new(Gpr::Rax, Width::High8)));
    }
}
