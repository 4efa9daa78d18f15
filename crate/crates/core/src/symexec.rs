//! Value-set symbolic execution over lifted micro-ops.
//!
//! Values are either a bounded set of 64-bit constants or an opaque symbol.
//! Execution is forward and directed: only blocks in a caller-supplied
//! allowed set are explored, branch conditions are ignored, and states that
//! meet at the same block with the same call stack and stack-pointer position
//! are joined.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::cfg::{Cfg, EdgeKind};
use crate::decoder::{Gpr, RegId, Width};
use crate::lifter::{EaSource, MicroOpKind, StoreSrc, Terminator};

/// What an unknown value stands for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "kebab-case")]
pub enum Sym {
    /// The value a register held when execution started.
    EntryReg(Gpr),
    /// The value of the stack slot at this byte offset from the starting
    /// stack pointer (0 is the return address at a function entry).
    EntrySlot(i64),
    /// Something the engine does not track (memory, havoc, arithmetic).
    Opaque,
    /// A join of different symbols, or of symbols and constants.
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymValue {
    Consts(BTreeSet<u64>),
    Unknown(Sym),
}

pub const DEFAULT_MAX_VALUE_SET: usize = 64;

impl SymValue {
    pub fn konst(v: u64) -> SymValue {
        SymValue::Consts(BTreeSet::from([v]))
    }

    pub fn opaque() -> SymValue {
        SymValue::Unknown(Sym::Opaque)
    }

    pub fn is_known(&self) -> bool {
        matches!(self, SymValue::Consts(_))
    }

    pub fn consts(&self) -> Option<&BTreeSet<u64>> {
        match self {
            SymValue::Consts(c) => Some(c),
            SymValue::Unknown(_) => None,
        }
    }

    /// Least upper bound. Constant sets union up to `bound` elements; any
    /// disagreement involving a symbol yields `Mixed`.
    pub fn join(&self, other: &SymValue, bound: usize) -> SymValue {
        match (self, other) {
            (SymValue::Consts(a), SymValue::Consts(b)) => {
                let u: BTreeSet<u64> = a.union(b).copied().collect();
                if u.len() > bound {
                    SymValue::Unknown(Sym::Mixed)
                } else {
                    SymValue::Consts(u)
                }
            }
            (SymValue::Unknown(a), SymValue::Unknown(b)) if a == b => SymValue::Unknown(*a),
            _ => SymValue::Unknown(Sym::Mixed),
        }
    }

    /// Applies `f` to every constant; unknown values stay as they are.
    fn map(&self, f: impl Fn(u64) -> u64) -> SymValue {
        match self {
            SymValue::Consts(c) => SymValue::Consts(c.iter().map(|&v| f(v)).collect()),
            u => u.clone(),
        }
    }

    /// Applies `f` to every constant; unknown values become opaque.
    fn compute(&self, f: impl Fn(u64) -> u64) -> SymValue {
        match self {
            SymValue::Consts(c) => SymValue::Consts(c.iter().map(|&v| f(v)).collect()),
            SymValue::Unknown(_) => SymValue::opaque(),
        }
    }
}

/// Position of a stack address: offset from the base of a stack epoch. Epoch
/// 0 is the stack pointer at the start of execution; realignment (`and` on
/// rsp) opens a new epoch identified by the instruction address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StackPos {
    pub epoch: u64,
    pub offset: i64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct Slot {
    value: SymValue,
    size: u8,
}

#[derive(Debug, Clone)]
pub struct SymState {
    regs: [SymValue; 16],
    /// Registers known to hold a stack address.
    pos: [Option<StackPos>; 16],
    slots: BTreeMap<(u64, i64), Slot>,
    /// Set in strict mode after a write through an untracked address.
    stack_havocked: bool,
    /// Return blocks of calls being followed.
    call_stack: Vec<u64>,
    pub steps: u64,
}

// The step counter is bookkeeping, not abstract state: two states differing
// only in steps are the same fixpoint candidate.
impl PartialEq for SymState {
    fn eq(&self, other: &Self) -> bool {
        self.regs == other.regs
            && self.pos == other.pos
            && self.slots == other.slots
            && self.stack_havocked == other.stack_havocked
            && self.call_stack == other.call_stack
    }
}

impl Eq for SymState {}

/// The location whose value a directed run reports at the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "kebab-case")]
pub enum Location {
    Register(Gpr),
    /// The 8-byte slot at `rsp + offset` when the target is reached.
    StackAtSp(i64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecBudget {
    pub max_states: usize,
    pub max_steps_per_state: u64,
    pub max_loop_visits: u32,
    /// Seconds per query.
    pub wall_clock_limit: f64,
    pub max_value_set: usize,
    /// Nesting bound for following calls.
    pub max_call_depth: usize,
}

impl Default for ExecBudget {
    fn default() -> Self {
        ExecBudget {
            max_states: 4096,
            max_steps_per_state: 10_000,
            max_loop_visits: 2,
            wall_clock_limit: 60.0,
            max_value_set: DEFAULT_MAX_VALUE_SET,
            max_call_depth: 8,
        }
    }
}

impl ExecBudget {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_states == 0
            || self.max_steps_per_state == 0
            || self.max_loop_visits == 0
            || self.max_value_set == 0
            || self.wall_clock_limit.is_nan()
            || self.wall_clock_limit <= 0.0
        {
            return Err("all budget values must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecConfig {
    pub budget: ExecBudget,
    /// Writes through untracked addresses invalidate every stack slot.
    pub strict_memory: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BudgetKind {
    States,
    Steps,
    WallClock,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DirectedOutcome {
    /// Every path reaching the target carries a constant; the union. Empty
    /// when no path reaches the target.
    Resolved(BTreeSet<u64>),
    StillSymbolic(Sym),
    BudgetExhausted(BudgetKind),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DirectedResult {
    pub outcome: DirectedOutcome,
    /// Block visits performed.
    pub paths_explored: u64,
}

impl SymState {
    /// Fresh state at the start of a directed run: every register holds its
    /// own entry symbol and rsp points at offset 0 of epoch 0.
    pub fn entry() -> SymState {
        let regs = Gpr::ALL.map(|g| SymValue::Unknown(Sym::EntryReg(g)));
        let mut pos = [None; 16];
        pos[Gpr::Rsp.index()] = Some(StackPos { epoch: 0, offset: 0 });
        SymState {
            regs,
            pos,
            slots: BTreeMap::new(),
            stack_havocked: false,
            call_stack: Vec::new(),
            steps: 0,
        }
    }

    pub fn reg(&self, g: Gpr) -> &SymValue {
        &self.regs[g.index()]
    }

    pub fn sp(&self) -> Option<StackPos> {
        self.pos[Gpr::Rsp.index()]
    }

    pub fn sp_lost(&self) -> bool {
        self.sp().is_none()
    }

    pub fn set_reg(&mut self, g: Gpr, v: SymValue) {
        self.regs[g.index()] = v;
        self.pos[g.index()] = None;
    }

    /// Reads a register at the given width.
    pub fn read_reg(&self, r: RegId) -> SymValue {
        let v = &self.regs[r.gpr.index()];
        match r.width {
            Width::W64 => v.clone(),
            // Narrow reads of an entry symbol keep the symbol: `mov %edi,%eax`
            // forwards the same parameter.
            Width::W32 => v.map(|x| x & 0xffff_ffff),
            w => match v {
                SymValue::Consts(_) => v.map(|x| (x >> w.shift()) & w.mask()),
                SymValue::Unknown(_) => SymValue::opaque(),
            },
        }
    }

    /// Writes a register with x86-64 width semantics: 32-bit writes
    /// zero-extend, 8/16-bit writes keep the untouched parent bits.
    pub fn write_reg(&mut self, r: RegId, v: SymValue, bound: usize) {
        let i = r.gpr.index();
        let new = match r.width {
            Width::W64 => v,
            Width::W32 => v.map(|x| x & 0xffff_ffff),
            w => match (&self.regs[i], &v) {
                (SymValue::Consts(old), SymValue::Consts(new)) => {
                    let keep = !(w.mask() << w.shift());
                    let mut out = BTreeSet::new();
                    for &o in old {
                        for &n in new {
                            out.insert((o & keep) | ((n & w.mask()) << w.shift()));
                        }
                    }
                    if out.len() > bound {
                        SymValue::Unknown(Sym::Mixed)
                    } else {
                        SymValue::Consts(out)
                    }
                }
                _ => SymValue::opaque(),
            },
        };
        self.regs[i] = new;
        self.pos[i] = None;
    }

    fn default_slot(&self, epoch: u64, offset: i64) -> SymValue {
        if !self.stack_havocked && epoch == 0 && offset >= 0 {
            SymValue::Unknown(Sym::EntrySlot(offset))
        } else {
            SymValue::opaque()
        }
    }

    fn overlapping(&self, epoch: u64, offset: i64, size: u8) -> Vec<(i64, Slot)> {
        let lo = offset - 8;
        let hi = offset + i64::from(size);
        self.slots
            .range((epoch, lo)..(epoch, hi))
            .filter(|((_, o), s)| *o + i64::from(s.size) > offset)
            .map(|((_, o), s)| (*o, s.clone()))
            .collect()
    }

    pub fn read_slot(&self, at: StackPos, size: u8) -> SymValue {
        let (epoch, offset) = (at.epoch, at.offset);
        let hits = self.overlapping(epoch, offset, size);
        if hits.is_empty() {
            return self.default_slot(epoch, offset);
        }
        let end = offset + i64::from(size);
        for (o, s) in &hits {
            if *o <= offset && o + i64::from(s.size) >= end {
                let shift = 8 * (offset - o) as u32;
                let mask = if size >= 8 { u64::MAX } else { (1u64 << (8 * u32::from(size))) - 1 };
                return match &s.value {
                    SymValue::Consts(_) => s.value.map(|x| (x >> shift) & mask),
                    SymValue::Unknown(_) if *o == offset => s.value.clone(),
                    SymValue::Unknown(_) => SymValue::opaque(),
                };
            }
        }
        SymValue::opaque()
    }

    pub fn write_slot(&mut self, at: StackPos, size: u8, value: SymValue) {
        let (epoch, offset) = (at.epoch, at.offset);
        let end = offset + i64::from(size);
        for (o, s) in self.overlapping(epoch, offset, size) {
            self.slots.remove(&(epoch, o));
            let s_end = o + i64::from(s.size);
            if o < offset {
                self.slots.insert((epoch, o), Slot { value: SymValue::opaque(), size: (offset - o) as u8 });
            }
            if s_end > end {
                self.slots.insert((epoch, end), Slot { value: SymValue::opaque(), size: (s_end - end) as u8 });
            }
        }
        let value = if size < 8 {
            let mask = (1u64 << (8 * u32::from(size))) - 1;
            value.map(|x| x & mask)
        } else {
            value
        };
        self.slots.insert((epoch, offset), Slot { value, size });
    }

    /// Gives up on the stack pointer: every tracked position and slot is
    /// dropped, later stack reads are opaque.
    pub fn forget_stack(&mut self) {
        self.pos = [None; 16];
        self.havoc_memory();
    }

    fn havoc_memory(&mut self) {
        self.slots.clear();
        self.stack_havocked = true;
    }

    /// Pointwise join; states must share call stack (the merge key).
    pub fn join(&self, other: &SymState, bound: usize) -> SymState {
        let mut out = self.clone();
        for i in 0..16 {
            out.regs[i] = self.regs[i].join(&other.regs[i], bound);
            if self.pos[i] != other.pos[i] {
                out.pos[i] = None;
                if self.pos[i].is_some() || other.pos[i].is_some() {
                    out.regs[i] = SymValue::Unknown(Sym::Mixed);
                }
            }
        }
        out.stack_havocked = self.stack_havocked || other.stack_havocked;
        let keys: BTreeSet<(u64, i64)> = self.slots.keys().chain(other.slots.keys()).copied().collect();
        let mut slots = BTreeMap::new();
        for k in keys {
            let (a, b) = (self.slots.get(&k), other.slots.get(&k));
            let size = a.or(b).map(|s| s.size).unwrap();
            let pos = StackPos { epoch: k.0, offset: k.1 };
            let va = match a {
                Some(s) if s.size == size => s.value.clone(),
                _ => self.read_slot(pos, size),
            };
            let vb = match b {
                Some(s) if s.size == size => s.value.clone(),
                _ => other.read_slot(pos, size),
            };
            slots.insert(k, Slot { value: va.join(&vb, bound), size });
        }
        // Overlapping slots of different sizes from the two sides are
        // resolved conservatively.
        let mut cleaned: BTreeMap<(u64, i64), Slot> = BTreeMap::new();
        for (k, s) in slots {
            if let Some(((pe, po), prev)) = cleaned.iter_mut().next_back() {
                if *pe == k.0 && *po + i64::from(prev.size) > k.1 {
                    let end = (k.1 + i64::from(s.size)).max(*po + i64::from(prev.size));
                    prev.size = (end - *po).min(255) as u8;
                    prev.value = SymValue::Unknown(Sym::Mixed);
                    continue;
                }
            }
            cleaned.insert(k, s);
        }
        out.slots = cleaned;
        out.steps = self.steps.max(other.steps);
        out
    }

    /// Every location that differs between `self` (older) and `newer` goes
    /// to top in the result.
    fn widen(&self, newer: &SymState) -> SymState {
        let mut out = newer.clone();
        for i in 0..16 {
            if self.regs[i] != newer.regs[i] {
                out.regs[i] = SymValue::Unknown(Sym::Mixed);
            }
        }
        for (k, s) in out.slots.iter_mut() {
            if self.slots.get(k) != Some(s) {
                s.value = SymValue::Unknown(Sym::Mixed);
            }
        }
        out
    }

    fn stack_pos_of(&self, base: Gpr, disp: i64) -> Option<StackPos> {
        self.pos[base.index()].map(|p| StackPos { epoch: p.epoch, offset: p.offset + disp })
    }

    fn push_value(&mut self, v: SymValue) {
        if let Some(sp) = self.sp() {
            let new = StackPos { epoch: sp.epoch, offset: sp.offset - 8 };
            self.write_slot(new, 8, v);
            self.pos[Gpr::Rsp.index()] = Some(new);
        }
    }

    fn pop_value(&mut self) -> SymValue {
        match self.sp() {
            Some(sp) => {
                let v = self.read_slot(sp, 8);
                self.pos[Gpr::Rsp.index()] = Some(StackPos { epoch: sp.epoch, offset: sp.offset + 8 });
                v
            }
            None => SymValue::opaque(),
        }
    }

    /// Reads a query location.
    pub fn query(&self, loc: Location) -> SymValue {
        match loc {
            Location::Register(g) => self.reg(g).clone(),
            Location::StackAtSp(off) => match self.stack_pos_of(Gpr::Rsp, off) {
                Some(p) => self.read_slot(p, 8),
                None => SymValue::opaque(),
            },
        }
    }

    /// Executes one non-control micro-op.
    pub fn exec(&mut self, op: &MicroOpKind, addr: u64, cfg: &ExecConfig) {
        let bound = cfg.budget.max_value_set;
        match *op {
            MicroOpKind::WriteRegConst { dst, value } => self.write_reg(dst, SymValue::konst(value), bound),
            MicroOpKind::CopyRegReg { dst, src } => {
                let v = self.read_reg(src);
                let p = self.pos[src.gpr.index()];
                self.write_reg(dst, v, bound);
                if dst.width == Width::W64 && src.width == Width::W64 {
                    self.pos[dst.gpr.index()] = p;
                }
            }
            MicroOpKind::LoadEffectiveAddress { dst, src } => match src {
                EaSource::Absolute(a) => self.write_reg(dst, SymValue::konst(a), bound),
                EaSource::RegDisp(base, disp) => {
                    let p = self.stack_pos_of(base, disp);
                    let v = self.regs[base.index()].compute(|x| x.wrapping_add(disp as u64));
                    let v = if p.is_some() { SymValue::opaque() } else { v };
                    self.write_reg(dst, v, bound);
                    if dst.width == Width::W64 {
                        self.pos[dst.gpr.index()] = p;
                    }
                }
                EaSource::Complex => self.write_reg(dst, SymValue::opaque(), bound),
            },
            MicroOpKind::StoreStack { base, disp, src, width } => {
                let value = match src {
                    StoreSrc::Reg(r) => self.read_reg(r),
                    StoreSrc::Const(c) => SymValue::konst(c),
                    StoreSrc::Unknown => SymValue::opaque(),
                };
                match self.stack_pos_of(base, disp) {
                    Some(p) => self.write_slot(p, (width.bits() / 8) as u8, value),
                    None if cfg.strict_memory => self.havoc_memory(),
                    None => {}
                }
            }
            MicroOpKind::LoadStack { dst, base, disp } => {
                let v = match self.stack_pos_of(base, disp) {
                    Some(p) => {
                        let size = (dst.width.bits() / 8) as u8;
                        if dst.width == Width::High8 {
                            SymValue::opaque()
                        } else {
                            self.read_slot(p, size)
                        }
                    }
                    None => SymValue::opaque(),
                };
                self.write_reg(dst, v, bound);
            }
            MicroOpKind::StoreUnknown => {
                if cfg.strict_memory {
                    self.havoc_memory();
                }
            }
            MicroOpKind::LoadUnknown { dst } => self.write_reg(dst, SymValue::opaque(), bound),
            MicroOpKind::ArithImm { dst, op, imm } => {
                let i = dst.gpr.index();
                if let (Some(p), Width::W64) = (self.pos[i], dst.width) {
                    let np = match op {
                        crate::lifter::ArithOp::Add => Some(StackPos { offset: p.offset.wrapping_add(imm as i64), ..p }),
                        crate::lifter::ArithOp::Sub => Some(StackPos { offset: p.offset.wrapping_sub(imm as i64), ..p }),
                        // Realignment: a fresh epoch based at the aligned address.
                        crate::lifter::ArithOp::And => Some(StackPos { epoch: addr, offset: 0 }),
                        _ => None,
                    };
                    self.regs[i] = SymValue::opaque();
                    self.pos[i] = np;
                    return;
                }
                let w = dst.width;
                let cur = self.read_reg(dst);
                let v = cur.compute(|x| op.apply(x, imm) & w.mask());
                self.write_reg(dst, v, bound);
            }
            MicroOpKind::HavocReg { reg } => self.set_reg(reg, SymValue::opaque()),
            MicroOpKind::Push { src } => {
                let v = match src {
                    StoreSrc::Reg(r) => self.read_reg(r),
                    StoreSrc::Const(c) => SymValue::konst(c),
                    StoreSrc::Unknown => SymValue::opaque(),
                };
                self.push_value(v);
            }
            MicroOpKind::Pop { dst } => {
                let v = self.pop_value();
                if let Some(d) = dst {
                    if d.gpr == Gpr::Rsp {
                        self.set_reg(Gpr::Rsp, SymValue::opaque());
                    } else {
                        self.write_reg(d, v, bound);
                    }
                }
            }
            MicroOpKind::Syscall => {
                for g in [Gpr::Rax, Gpr::Rcx, Gpr::R11] {
                    self.set_reg(g, SymValue::opaque());
                }
            }
            MicroOpKind::CallDirect { .. }
            | MicroOpKind::CallIndirect { .. }
            | MicroOpKind::Return
            | MicroOpKind::JumpDirect { .. }
            | MicroOpKind::JumpIndirect { .. }
            | MicroOpKind::Branch { .. }
            | MicroOpKind::Nop => {}
        }
    }
}

/// Effect of a call that is not followed: caller-saved registers are
/// clobbered, callee-saved registers and the caller's frame survive, the
/// stack pointer is unchanged.
pub fn summarize_call(state: &SymState) -> SymState {
    let mut out = state.clone();
    for g in Gpr::ALL {
        if g.is_caller_saved() {
            out.set_reg(g, SymValue::opaque());
        }
    }
    if let Some(sp) = out.sp() {
        out.slots.retain(|&(epoch, off), _| epoch != sp.epoch || off >= sp.offset);
    }
    out
}

type Key = (u64, Vec<u64>, Option<StackPos>);

struct KeyEntry {
    block: u64,
    pending: Option<SymState>,
    last: Option<SymState>,
    processed: u32,
}

struct Engine<'a> {
    cfg: &'a Cfg,
    allowed: &'a BTreeSet<u64>,
    target: u64,
    query: Location,
    conf: &'a ExecConfig,
    rpo: HashMap<u64, usize>,
    keys: HashMap<Key, usize>,
    /// Distinct stack pointers seen per (block, call stack).
    sp_variants: HashMap<(u64, Vec<u64>), u32>,
    entries: Vec<KeyEntry>,
    queue: BTreeSet<(usize, usize)>,
    collected: Option<SymValue>,
    exhausted: Option<BudgetKind>,
    visits: u64,
}

impl Engine<'_> {
    fn rpo_index(&self, block: u64) -> usize {
        self.rpo.get(&block).copied().unwrap_or(usize::MAX)
    }

    /// `retreating` marks a loop back edge: a loop that keeps moving the
    /// stack pointer would otherwise create a new key every iteration.
    fn enqueue(&mut self, block: u64, mut state: SymState, retreating: bool) {
        if !self.allowed.contains(&block) || self.exhausted.is_some() {
            return;
        }
        let mut key: Key = (block, state.call_stack.clone(), state.sp());
        if key.2.is_some() && !self.keys.contains_key(&key) {
            let seen = self.sp_variants.get(&(block, key.1.clone())).copied().unwrap_or(0);
            if retreating && seen >= self.conf.budget.max_loop_visits {
                state.forget_stack();
                key.2 = None;
            }
        }
        let id = match self.keys.get(&key) {
            Some(&id) => id,
            None => {
                if self.entries.len() >= self.conf.budget.max_states {
                    self.exhausted = Some(BudgetKind::States);
                    return;
                }
                if key.2.is_some() {
                    *self.sp_variants.entry((block, key.1.clone())).or_default() += 1;
                }
                let id = self.entries.len();
                self.keys.insert(key, id);
                self.entries.push(KeyEntry { block, pending: None, last: None, processed: 0 });
                id
            }
        };
        let bound = self.conf.budget.max_value_set;
        let e = &mut self.entries[id];
        let cand = match (&e.pending, &e.last) {
            (Some(p), _) => p.join(&state, bound),
            (None, Some(l)) => l.join(&state, bound),
            (None, None) => state,
        };
        if e.pending.is_none() && e.last.as_ref() == Some(&cand) {
            return;
        }
        let was_pending = e.pending.is_some();
        e.pending = Some(cand);
        if !was_pending {
            let r = self.rpo_index(block);
            self.queue.insert((r, id));
        }
    }

    fn collect(&mut self, v: SymValue) {
        self.collected = Some(match self.collected.take() {
            None => v,
            Some(c) => c.join(&v, usize::MAX),
        });
    }

    fn process(&mut self, id: usize) {
        let e = &mut self.entries[id];
        let block_addr = e.block;
        let mut state = e.pending.take().expect("queued entry has a pending state");
        if let Some(last) = &e.last {
            if e.processed >= self.conf.budget.max_loop_visits {
                state = last.widen(&state);
            }
        }
        e.last = Some(state.clone());
        e.processed += 1;
        self.visits += 1;

        let block = &self.cfg.blocks[&block_addr];
        let mut prev_addr = None;
        for op in &block.ops {
            if op.addr == self.target && prev_addr != Some(op.addr) {
                let v = state.query(self.query);
                self.collect(v);
            }
            prev_addr = Some(op.addr);
            state.exec(&op.kind, op.addr, self.conf);
            state.steps += 1;
        }
        if state.steps > self.conf.budget.max_steps_per_state {
            self.exhausted = Some(BudgetKind::Steps);
            return;
        }

        match block.terminator {
            Terminator::CallDirect { ret, .. } | Terminator::CallIndirect { ret } => {
                let callees: Vec<u64> = self
                    .cfg
                    .succs(block_addr)
                    .iter()
                    .filter(|(_, k)| matches!(k, EdgeKind::Call | EdgeKind::IndirectResolved))
                    .map(|(d, _)| *d)
                    .collect();
                if state.call_stack.len() < self.conf.budget.max_call_depth {
                    for callee in callees {
                        if !self.allowed.contains(&callee) {
                            continue;
                        }
                        let mut s = state.clone();
                        s.push_value(SymValue::konst(ret));
                        s.call_stack.push(ret);
                        self.enqueue(callee, s, false);
                    }
                }
                if let Some(r) = self.cfg.return_site(block_addr) {
                    if self.allowed.contains(&r) {
                        self.enqueue(r, summarize_call(&state), false);
                    }
                }
            }
            Terminator::Return => {
                if let Some(ret) = state.call_stack.pop() {
                    state.pop_value();
                    self.enqueue(ret, state, false);
                }
            }
            Terminator::Poisoned | Terminator::Halt => {}
            _ => {
                let succs: Vec<u64> = self.cfg.succs(block_addr).iter().map(|(d, _)| *d).collect();
                let n = succs.len();
                let here = self.rpo_index(block_addr);
                for (i, s) in succs.into_iter().enumerate() {
                    let back = self.rpo_index(s) <= here;
                    if i + 1 == n {
                        self.enqueue(s, std::mem::replace(&mut state, SymState::entry()), back);
                    } else {
                        self.enqueue(s, state.clone(), back);
                    }
                }
            }
        }
    }
}

fn reverse_postorder(cfg: &Cfg, start: u64, allowed: &BTreeSet<u64>) -> HashMap<u64, usize> {
    let mut post = Vec::new();
    let mut seen = BTreeSet::new();
    let mut stack: Vec<(u64, usize)> = vec![(start, 0)];
    seen.insert(start);
    while let Some((b, i)) = stack.pop() {
        let succs = cfg.succs(b);
        if i < succs.len() {
            stack.push((b, i + 1));
            let d = succs[i].0;
            if allowed.contains(&d) && seen.insert(d) {
                stack.push((d, 0));
            }
        } else {
            post.push(b);
        }
    }
    post.iter().rev().enumerate().map(|(i, b)| (*b, i)).collect()
}

#[cfg(not(target_arch = "wasm32"))]
struct Clock(std::time::Instant);
#[cfg(not(target_arch = "wasm32"))]
impl Clock {
    fn start() -> Self {
        Clock(std::time::Instant::now())
    }
    fn elapsed_secs(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

// No monotonic clock on wasm32-unknown-unknown; the step and state budgets
// still bound every query.
#[cfg(target_arch = "wasm32")]
struct Clock;
#[cfg(target_arch = "wasm32")]
impl Clock {
    fn start() -> Self {
        Clock
    }
    fn elapsed_secs(&self) -> f64 {
        0.0
    }
}

/// Explores forward from `start` inside `allowed` and reports the value of
/// `query` just before the instruction at `target` executes.
pub fn run_directed(
    cfg: &Cfg,
    start: u64,
    target: u64,
    allowed: &BTreeSet<u64>,
    query: Location,
    conf: &ExecConfig,
) -> DirectedResult {
    run_directed_from(cfg, start, SymState::entry(), target, allowed, query, conf)
}

pub fn run_directed_from(
    cfg: &Cfg,
    start: u64,
    initial: SymState,
    target: u64,
    allowed: &BTreeSet<u64>,
    query: Location,
    conf: &ExecConfig,
) -> DirectedResult {
    debug_assert!(allowed.contains(&start), "start block must be allowed");
    debug_assert!(
        cfg.block_containing(target).is_some_and(|b| allowed.contains(&b.start)),
        "target block must be allowed"
    );
    let mut engine = Engine {
        cfg,
        allowed,
        target,
        query,
        conf,
        rpo: reverse_postorder(cfg, start, allowed),
        keys: HashMap::new(),
        sp_variants: HashMap::new(),
        entries: Vec::new(),
        queue: BTreeSet::new(),
        collected: None,
        exhausted: None,
        visits: 0,
    };
    let clock = Clock::start();
    engine.enqueue(start, initial, false);
    while let Some((r, id)) = engine.queue.pop_first() {
        let _ = r;
        engine.process(id);
        if engine.exhausted.is_some() {
            break;
        }
        if engine.visits % 256 == 0 && clock.elapsed_secs() > conf.budget.wall_clock_limit {
            engine.exhausted = Some(BudgetKind::WallClock);
            break;
        }
    }
    let outcome = match (engine.exhausted, engine.collected) {
        (Some(kind), _) => DirectedOutcome::BudgetExhausted(kind),
        (None, None) => DirectedOutcome::Resolved(BTreeSet::new()),
        (None, Some(SymValue::Consts(c))) => DirectedOutcome::Resolved(c),
        (None, Some(SymValue::Unknown(s))) => DirectedOutcome::StillSymbolic(s),
    };
    DirectedResult { outcome, paths_explored: engine.visits }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(vals: &[u64]) -> SymValue {
        SymValue::Consts(vals.iter().copied().collect())
    }

    #[test]
    fn join_basics() {
        assert_eq!(c(&[1]).join(&c(&[2]), 64), c(&[1, 2]));
        assert_eq!(c(&[1, 2]).join(&c(&[3]), 2), SymValue::Unknown(Sym::Mixed));
        let u = SymValue::Unknown(Sym::EntryReg(Gpr::Rdi));
        assert_eq!(u.join(&u, 64), u);
        assert_eq!(u.join(&c(&[1]), 64), SymValue::Unknown(Sym::Mixed));
    }

    #[test]
    fn width_semantics() {
        let mut s = SymState::entry();
        s.write_reg(RegId::full(Gpr::Rax), SymValue::konst(0xffff_ffff_ffff_ffff), 64);
        s.write_reg(RegId::new(Gpr::Rax, Width::W32), SymValue::konst(60), 64);
        assert_eq!(s.reg(Gpr::Rax), &c(&[60]));
        s.write_reg(RegId::new(Gpr::Rax, Width::High8), SymValue::konst(1), 64);
        assert_eq!(s.reg(Gpr::Rax), &c(&[0x13c]));
        s.write_reg(RegId::new(Gpr::Rax, Width::Low8), SymValue::konst(0xff), 64);
        assert_eq!(s.reg(Gpr::Rax), &c(&[0x1ff]));
    }

    #[test]
    fn summary_keeps_callee_saved_and_frame() {
        let mut s = SymState::entry();
        s.set_reg(Gpr::Rax, SymValue::konst(1));
        s.set_reg(Gpr::Rbx, SymValue::konst(7));
        s.write_slot(StackPos { epoch: 0, offset: 16 }, 8, SymValue::konst(2));
        s.pos[Gpr::Rsp.index()] = Some(StackPos { epoch: 0, offset: 0 });
        let out = summarize_call(&s);
        assert_eq!(out.reg(Gpr::Rax), &SymValue::opaque());
        assert_eq!(out.reg(Gpr::Rbx), &c(&[7]));
        assert_eq!(out.read_slot(StackPos { epoch: 0, offset: 16 }, 8), c(&[2]));
        assert_eq!(out.sp(), s.sp());
    }

    #[test]
    fn partial_slot_overwrite_is_opaque() {
        let mut s = SymState::entry();
        let p = StackPos { epoch: 0, offset: -16 };
        s.write_slot(p, 8, SymValue::konst(0x1122_3344_5566_7788));
        assert_eq!(s.read_slot(p, 4), c(&[0x5566_7788]));
        s.write_slot(StackPos { epoch: 0, offset: -12 }, 4, SymValue::konst(9));
        assert_eq!(s.read_slot(p, 8), SymValue::opaque());
        assert_eq!(s.read_slot(p, 4), SymValue::opaque());
        assert_eq!(s.read_slot(StackPos { epoch: 0, offset: -12 }, 4), c(&[9]));
    }

    #[test]
    fn missing_slots_read_entry_symbols_above_sp_only() {
        let s = SymState::entry();
        assert_eq!(s.read_slot(StackPos { epoch: 0, offset: 8 }, 8), SymValue::Unknown(Sym::EntrySlot(8)));
        assert_eq!(s.read_slot(StackPos { epoch: 0, offset: -8 }, 8), SymValue::opaque());
        assert_eq!(s.read_slot(StackPos { epoch: 5, offset: 8 }, 8), SymValue::opaque());
    }
}
