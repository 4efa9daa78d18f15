//! Control-flow graph recovery.
//!
//! Discovery is recursive descent over instructions, seeded with every
//! function start the image tells us about (symbols, unwind ranges, entry
//! points, init functions) plus every code address materialized in code.
//! Indirect calls are resolved by the active-addresses-taken fixpoint.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;

use thiserror::Error;

use crate::decoder::{Flow, IcedDecoder, Insn, InstructionDecoder, MemBase, Opcode, Operand};
use crate::lifter::{lift_insns, LiftedBlock, MicroOpKind, Terminator};
use crate::loader::{list_entry_points, BinaryImage};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfgError {
    #[error("no entry nodes to analyze")]
    NoEntryNodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeKind {
    Fallthrough,
    Jump,
    BranchTaken,
    Call,
    ReturnTo,
    IndirectResolved,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Fallthrough => "fallthrough",
            EdgeKind::Jump => "jump",
            EdgeKind::BranchTaken => "branch-taken",
            EdgeKind::Call => "call",
            EdgeKind::ReturnTo => "return-to",
            EdgeKind::IndirectResolved => "indirect-resolved",
        }
    }

    /// Edges that stay inside a function.
    pub fn is_intra(self) -> bool {
        matches!(
            self,
            EdgeKind::Fallthrough | EdgeKind::Jump | EdgeKind::BranchTaken | EdgeKind::ReturnTo
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Edge {
    pub src: u64,
    pub dst: u64,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FuncInfo {
    pub entry: u64,
    pub blocks: BTreeSet<u64>,
    pub name: Option<String>,
    pub is_wrapper: bool,
    pub contains_syscall_sites: Vec<u64>,
    /// Contains a block that could not be decoded.
    pub poisoned: bool,
}

/// A call (or tail jump) into another shared object.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct ImportCall {
    pub block: u64,
    pub insn: u64,
    pub symbol: String,
    pub tail: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cfg {
    pub blocks: BTreeMap<u64, LiftedBlock>,
    /// Sorted, duplicate free.
    pub edges: Vec<Edge>,
    pub functions: Vec<FuncInfo>,
    pub entry_nodes: Vec<u64>,
    pub active_addresses_taken: BTreeSet<u64>,
    /// Blocks ending in an indirect call or jump not through the GOT.
    pub unresolved_indirects: BTreeSet<u64>,
    pub import_calls: Vec<ImportCall>,
    pub poisoned_blocks: BTreeSet<u64>,
    /// Jump-table targets recovered per indirect-jump block.
    pub jump_tables: BTreeMap<u64, Vec<u64>>,
    succs: BTreeMap<u64, Vec<(u64, EdgeKind)>>,
    preds: BTreeMap<u64, Vec<(u64, EdgeKind)>>,
    block_func: BTreeMap<u64, u64>,
    reachable: BTreeSet<u64>,
}

const MAX_TABLE_ENTRIES: usize = 512;

struct Discovery<'a> {
    img: &'a BinaryImage,
    decoder: &'a dyn InstructionDecoder,
    insns: BTreeMap<u64, Insn>,
    /// end address → instruction address, for walking back along fallthrough.
    by_end: BTreeMap<u64, u64>,
    leaders: BTreeSet<u64>,
    poisoned: BTreeSet<u64>,
    func_starts: BTreeSet<u64>,
    jump_tables: BTreeMap<u64, Vec<u64>>,
    work: Vec<u64>,
}

impl<'a> Discovery<'a> {
    fn seed(&mut self, addr: u64, is_func: bool) {
        if !self.img.is_code(addr) {
            return;
        }
        if is_func {
            self.func_starts.insert(addr);
        }
        self.leaders.insert(addr);
        self.work.push(addr);
    }

    fn run(&mut self) {
        while let Some(start) = self.work.pop() {
            let mut cur = start;
            loop {
                if self.insns.contains_key(&cur) || self.poisoned.contains(&cur) {
                    break;
                }
                if let Some((_, prev)) = self.insns.range(..cur).next_back() {
                    if prev.end() > cur {
                        log::debug!("{}: {cur:#x} is inside the instruction at {:#x}", self.img.path, prev.addr);
                        self.leaders.remove(&cur);
                        break;
                    }
                }
                let Some(bytes) = self.img.code_bytes_from(cur) else {
                    break;
                };
                let insn = match self.decoder.decode(bytes, cur) {
                    Ok(i) => i,
                    Err(_) => {
                        self.poisoned.insert(cur);
                        self.leaders.insert(cur);
                        break;
                    }
                };
                let next = insn.end();
                let flow = insn.flow;
                let target = insn.operands.iter().find_map(|o| match o {
                    Operand::Target(t) => Some(*t),
                    _ => None,
                });
                let taken = lift_insns(self.img, std::slice::from_ref(&insn)).addresses_taken_here;
                self.by_end.insert(next, cur);
                self.insns.insert(cur, insn);
                for t in taken {
                    self.seed(t, true);
                }
                match flow {
                    Flow::Next => {}
                    Flow::Branch => {
                        if let Some(t) = target {
                            self.seed(t, false);
                        }
                        self.seed(next, false);
                        break;
                    }
                    Flow::Jump => {
                        if let Some(t) = target {
                            if !self.img.plt_stubs.contains_key(&t) {
                                self.seed(t, false);
                            }
                        }
                        break;
                    }
                    Flow::Call => {
                        if let Some(t) = target {
                            if !self.img.plt_stubs.contains_key(&t) {
                                self.seed(t, true);
                            }
                        }
                        self.seed(next, false);
                        break;
                    }
                    Flow::IndirectCall => {
                        self.seed(next, false);
                        break;
                    }
                    Flow::IndirectJump => {
                        let targets = self.jump_table_targets(cur);
                        if !targets.is_empty() {
                            for &t in &targets {
                                self.seed(t, false);
                            }
                            self.jump_tables.insert(cur, targets);
                        }
                        break;
                    }
                    Flow::Return | Flow::Stop => break,
                }
                cur = next;
            }
        }
    }

    /// Instructions preceding `addr` along straight-line fallthrough, nearest
    /// first.
    fn preceding(&self, addr: u64, limit: usize) -> Vec<&Insn> {
        let mut out = Vec::new();
        let mut cur = addr;
        while out.len() < limit {
            let Some(&prev) = self.by_end.get(&cur) else { break };
            let insn = &self.insns[&prev];
            if !matches!(insn.flow, Flow::Next | Flow::Branch) {
                break;
            }
            out.push(insn);
            cur = prev;
        }
        out
    }

    /// Bound from a dominating `cmp idx, imm` (entries = imm + 1).
    fn table_bound(&self, before: &[&Insn]) -> usize {
        before
            .iter()
            .find_map(|i| match (i.opcode, i.operands.as_slice()) {
                (Opcode::Cmp, [Operand::Reg(_), Operand::Imm(n)]) if (*n as usize) < MAX_TABLE_ENTRIES => {
                    Some(*n as usize + 1)
                }
                _ => None,
            })
            .unwrap_or(MAX_TABLE_ENTRIES)
    }

    fn jump_table_targets(&self, jmp: u64) -> Vec<u64> {
        let insn = &self.insns[&jmp];
        let before = self.preceding(jmp, 12);
        let bound = self.table_bound(&before);
        let mut targets = Vec::new();
        match insn.operands.first() {
            // jmp *table(,%reg,8)
            Some(Operand::Mem(m)) if m.base == MemBase::None && matches!(m.index, Some((_, 8))) => {
                let base = m.disp as u64;
                for i in 0..bound {
                    match self.img.read_u64(base + 8 * i as u64) {
                        Some(t) if self.img.is_code(t) => targets.push(t),
                        _ => break,
                    }
                }
            }
            // lea base(%rip), %r; movslq (%r,%idx,4), %x; add %r, %x; jmp *%x
            Some(Operand::Reg(_)) => {
                let base = before.iter().find_map(|i| match (i.opcode, i.operands.as_slice()) {
                    (Opcode::Lea, [Operand::Reg(_), Operand::Mem(m)]) => {
                        m.absolute().filter(|a| !self.img.is_code(*a) && self.img.is_mapped(*a))
                    }
                    _ => None,
                });
                if let Some(base) = base {
                    for i in 0..bound {
                        match self.img.read_i32(base + 4 * i as u64) {
                            Some(off) => {
                                let t = base.wrapping_add(off as i64 as u64);
                                if !self.img.is_code(t) {
                                    break;
                                }
                                targets.push(t);
                            }
                            None => break,
                        }
                    }
                }
            }
            _ => {}
        }
        targets.sort_unstable();
        targets.dedup();
        targets
    }

    fn form_blocks(&self) -> BTreeMap<u64, LiftedBlock> {
        let mut blocks = BTreeMap::new();
        for &leader in &self.leaders {
            if !self.insns.contains_key(&leader) {
                if self.poisoned.contains(&leader) {
                    blocks.insert(leader, LiftedBlock::poisoned(leader));
                }
                continue;
            }
            let mut seq: Vec<Insn> = Vec::new();
            let mut cur = leader;
            while let Some(insn) = self.insns.get(&cur) {
                let next = insn.end();
                let stop = insn.flow != Flow::Next;
                seq.push(insn.clone());
                if stop || self.leaders.contains(&next) {
                    break;
                }
                cur = next;
            }
            blocks.insert(leader, lift_insns(self.img, &seq));
        }
        blocks
    }
}

/// Builds the CFG before indirect-call resolution.
pub fn build_base_cfg(img: &BinaryImage) -> Cfg {
    build_base_cfg_with(img, &IcedDecoder)
}

pub fn build_base_cfg_with(img: &BinaryImage, decoder: &dyn InstructionDecoder) -> Cfg {
    let mut d = Discovery {
        img,
        decoder,
        insns: BTreeMap::new(),
        by_end: BTreeMap::new(),
        leaders: BTreeSet::new(),
        poisoned: BTreeSet::new(),
        func_starts: BTreeSet::new(),
        jump_tables: BTreeMap::new(),
        work: Vec::new(),
    };
    let mut entry_nodes: BTreeSet<u64> = list_entry_points(img).into_iter().filter(|a| img.is_code(*a)).collect();
    entry_nodes.extend(img.init_functions.iter().copied());

    for &e in &entry_nodes {
        d.seed(e, true);
    }
    for f in img.function_starts() {
        if !img.plt_stubs.contains_key(&f) {
            d.seed(f, true);
        }
    }
    for &(start, _) in &img.unwind_ranges {
        d.seed(start, true);
    }
    d.run();

    let blocks = d.form_blocks();
    let mut edges = BTreeSet::new();
    let mut unresolved = BTreeSet::new();
    let mut import_calls = Vec::new();
    let import_of_slot = |slot: Option<u64>| slot.and_then(|s| img.got_imports.get(&s).cloned());
    let local_def = |name: &str| -> Option<u64> {
        // Calls through the PLT to a symbol this object defines itself.
        img.exported.get(name).copied().filter(|a| blocks.contains_key(a))
    };

    for (&start, b) in &blocks {
        let last_op = b.ops.last().map(|o| o.kind);
        let last_insn = b.insns.last().copied().unwrap_or(start);
        let mut add = |dst: u64, kind: EdgeKind| {
            if blocks.contains_key(&dst) {
                edges.insert(Edge { src: start, dst, kind });
            }
        };
        match b.terminator {
            Terminator::Fallthrough(n) | Terminator::SyscallContinuing(n) => add(n, EdgeKind::Fallthrough),
            Terminator::Branch { taken, fallthrough } => {
                add(taken, EdgeKind::BranchTaken);
                add(fallthrough, EdgeKind::Fallthrough);
            }
            Terminator::JumpDirect(t) => match img.plt_stubs.get(&t) {
                Some(name) => match local_def(name) {
                    Some(def) => add(def, EdgeKind::Jump),
                    None => import_calls.push(ImportCall { block: start, insn: last_insn, symbol: name.clone(), tail: true }),
                },
                None => add(t, EdgeKind::Jump),
            },
            Terminator::CallDirect { target, ret } => {
                match img.plt_stubs.get(&target) {
                    Some(name) => match local_def(name) {
                        Some(def) => add(def, EdgeKind::Call),
                        None => import_calls.push(ImportCall { block: start, insn: last_insn, symbol: name.clone(), tail: false }),
                    },
                    None => add(target, EdgeKind::Call),
                }
                add(ret, EdgeKind::ReturnTo);
            }
            Terminator::CallIndirect { ret } => {
                let slot = match last_op {
                    Some(MicroOpKind::CallIndirect { slot }) => slot,
                    _ => None,
                };
                match import_of_slot(slot) {
                    Some(name) => match local_def(&name) {
                        Some(def) => add(def, EdgeKind::Call),
                        None => import_calls.push(ImportCall { block: start, insn: last_insn, symbol: name, tail: false }),
                    },
                    None => {
                        unresolved.insert(start);
                    }
                }
                add(ret, EdgeKind::ReturnTo);
            }
            Terminator::JumpIndirect => {
                let slot = match last_op {
                    Some(MicroOpKind::JumpIndirect { slot, .. }) => slot,
                    _ => None,
                };
                match import_of_slot(slot) {
                    Some(name) => match local_def(&name) {
                        Some(def) => add(def, EdgeKind::Jump),
                        None => import_calls.push(ImportCall { block: start, insn: last_insn, symbol: name, tail: true }),
                    },
                    None => {
                        if let Some(targets) = d.jump_tables.get(&last_insn) {
                            for &t in targets {
                                add(t, EdgeKind::Jump);
                            }
                        }
                        unresolved.insert(start);
                    }
                }
            }
            Terminator::Return | Terminator::Halt | Terminator::Poisoned => {}
        }
    }

    let jump_tables = d
        .jump_tables
        .iter()
        .filter_map(|(insn, targets)| {
            let (&blk, b) = blocks.range(..=*insn).next_back()?;
            b.contains_insn(*insn).then(|| (blk, targets.clone()))
        })
        .collect();

    let mut cfg = Cfg {
        poisoned_blocks: blocks.values().filter(|b| b.terminator == Terminator::Poisoned).map(|b| b.start).collect(),
        blocks,
        edges: edges.into_iter().collect(),
        functions: Vec::new(),
        entry_nodes: entry_nodes.into_iter().collect(),
        active_addresses_taken: BTreeSet::new(),
        unresolved_indirects: unresolved,
        import_calls,
        jump_tables,
        succs: BTreeMap::new(),
        preds: BTreeMap::new(),
        block_func: BTreeMap::new(),
        reachable: BTreeSet::new(),
    };
    cfg.import_calls.sort();
    let mut func_entries: BTreeSet<u64> = d.func_starts.iter().copied().filter(|a| cfg.blocks.contains_key(a)).collect();
    func_entries.extend(cfg.edges.iter().filter(|e| e.kind == EdgeKind::Call).map(|e| e.dst));
    cfg.rebuild_index();
    cfg.partition_functions(&|a| img.symbol_name(a).map(str::to_string), &func_entries);
    cfg.reachable = cfg.compute_reachable(&cfg.entry_nodes);
    cfg
}

/// Runs the active-addresses-taken fixpoint to completion.
pub fn resolve_active_addresses_taken(mut cfg: Cfg) -> Cfg {
    loop {
        let reach = cfg.compute_reachable(&cfg.entry_nodes);
        let active: BTreeSet<u64> = reach
            .iter()
            .flat_map(|b| cfg.blocks[b].addresses_taken_here.iter().copied())
            .filter(|a| cfg.blocks.contains_key(a))
            .collect();
        assert!(
            active.is_superset(&cfg.active_addresses_taken),
            "active addresses taken shrank across iterations"
        );
        let mut new_edges: Vec<Edge> = Vec::new();
        for &src in &cfg.unresolved_indirects {
            for &dst in &active {
                new_edges.push(Edge { src, dst, kind: EdgeKind::IndirectResolved });
            }
        }
        let before = cfg.edges.len();
        let mut all: BTreeSet<Edge> = cfg.edges.iter().copied().collect();
        all.extend(new_edges);
        let grew = all.len() != before || active != cfg.active_addresses_taken;
        cfg.active_addresses_taken = active;
        cfg.edges = all.into_iter().collect();
        cfg.rebuild_index();
        cfg.reachable = reach;
        if !grew {
            break;
        }
    }
    cfg.reachable = cfg.compute_reachable(&cfg.entry_nodes);
    cfg
}

/// Convenience: base CFG plus fixpoint.
pub fn build_cfg(img: &BinaryImage) -> Cfg {
    resolve_active_addresses_taken(build_base_cfg(img))
}

/// Addresses of syscall instructions in reachable blocks, ascending.
pub fn reachable_syscall_sites(cfg: &Cfg) -> Vec<u64> {
    let mut sites: Vec<u64> = cfg
        .reachable
        .iter()
        .flat_map(|b| cfg.blocks[b].syscall_sites())
        .collect();
    sites.sort_unstable();
    sites
}

impl Cfg {
    fn rebuild_index(&mut self) {
        self.succs.clear();
        self.preds.clear();
        for e in &self.edges {
            self.succs.entry(e.src).or_default().push((e.dst, e.kind));
            self.preds.entry(e.dst).or_default().push((e.src, e.kind));
        }
    }

    /// Assembles a CFG from already-lifted blocks, e.g. for synthetic tests.
    /// Calls targets are added to `function_entries`; unresolved indirects
    /// are the blocks ending in an indirect transfer with no outgoing edge.
    pub fn from_parts(
        blocks: BTreeMap<u64, LiftedBlock>,
        edges: impl IntoIterator<Item = Edge>,
        entry_nodes: Vec<u64>,
        function_entries: &BTreeSet<u64>,
    ) -> Cfg {
        let edges: BTreeSet<Edge> = edges.into_iter().collect();
        let poisoned_blocks = blocks
            .values()
            .filter(|b| b.terminator == Terminator::Poisoned)
            .map(|b| b.start)
            .collect();
        let mut cfg = Cfg {
            blocks,
            edges: edges.into_iter().collect(),
            functions: Vec::new(),
            entry_nodes,
            active_addresses_taken: BTreeSet::new(),
            unresolved_indirects: BTreeSet::new(),
            import_calls: Vec::new(),
            poisoned_blocks,
            jump_tables: BTreeMap::new(),
            succs: BTreeMap::new(),
            preds: BTreeMap::new(),
            block_func: BTreeMap::new(),
            reachable: BTreeSet::new(),
        };
        let mut entries: BTreeSet<u64> = function_entries.iter().copied().filter(|a| cfg.blocks.contains_key(a)).collect();
        entries.extend(cfg.edges.iter().filter(|e| e.kind == EdgeKind::Call).map(|e| e.dst));
        cfg.rebuild_index();
        cfg.partition_functions(&|_| None, &entries);
        cfg.reachable = cfg.compute_reachable(&cfg.entry_nodes);
        cfg
    }

    fn partition_functions(&mut self, name_of: &dyn Fn(u64) -> Option<String>, entries: &BTreeSet<u64>) {
        let mut owner: BTreeMap<u64, u64> = BTreeMap::new();
        let mut funcs: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
        for &entry in entries {
            if owner.contains_key(&entry) {
                // Already absorbed by an earlier function; still a separate
                // entry for calls, but blocks stay disjoint.
                continue;
            }
            let set = self.claim(entry, entries, &mut owner);
            funcs.insert(entry, set);
        }
        // Blocks only reachable through indirect edges start their own function.
        let orphans: Vec<u64> = self.blocks.keys().copied().filter(|b| !owner.contains_key(b)).collect();
        for b in orphans {
            if owner.contains_key(&b) {
                continue;
            }
            let set = self.claim(b, entries, &mut owner);
            funcs.insert(b, set);
        }
        self.block_func = owner;
        self.functions = funcs
            .into_iter()
            .map(|(entry, blocks)| {
                let mut sites: Vec<u64> = blocks.iter().flat_map(|b| self.blocks[b].syscall_sites()).collect();
                sites.sort_unstable();
                FuncInfo {
                    entry,
                    name: name_of(entry),
                    is_wrapper: false,
                    poisoned: blocks.iter().any(|b| self.poisoned_blocks.contains(b)),
                    contains_syscall_sites: sites,
                    blocks,
                }
            })
            .collect();
    }

    fn claim(&self, entry: u64, entries: &BTreeSet<u64>, owner: &mut BTreeMap<u64, u64>) -> BTreeSet<u64> {
        let mut set = BTreeSet::new();
        let mut stack = vec![entry];
        while let Some(b) = stack.pop() {
            if owner.contains_key(&b) || !self.blocks.contains_key(&b) {
                continue;
            }
            owner.insert(b, entry);
            set.insert(b);
            for &(dst, kind) in self.succs.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
                if kind.is_intra() && !entries.contains(&dst) && !owner.contains_key(&dst) {
                    stack.push(dst);
                }
            }
        }
        set
    }

    pub fn compute_reachable(&self, roots: &[u64]) -> BTreeSet<u64> {
        let mut seen = BTreeSet::new();
        let mut queue: VecDeque<u64> = roots.iter().copied().filter(|r| self.blocks.contains_key(r)).collect();
        while let Some(b) = queue.pop_front() {
            if !seen.insert(b) {
                continue;
            }
            for &(dst, _) in self.succs(b) {
                if !seen.contains(&dst) {
                    queue.push_back(dst);
                }
            }
        }
        seen
    }

    pub fn succs(&self, block: u64) -> &[(u64, EdgeKind)] {
        self.succs.get(&block).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn preds(&self, block: u64) -> &[(u64, EdgeKind)] {
        self.preds.get(&block).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_reachable(&self, block: u64) -> bool {
        self.reachable.contains(&block)
    }

    pub fn reachable_blocks(&self) -> &BTreeSet<u64> {
        &self.reachable
    }

    /// Entry address of the function owning `block`.
    pub fn function_of(&self, block: u64) -> Option<u64> {
        self.block_func.get(&block).copied()
    }

    pub fn function(&self, entry: u64) -> Option<&FuncInfo> {
        self.functions
            .binary_search_by_key(&entry, |f| f.entry)
            .ok()
            .map(|i| &self.functions[i])
    }

    pub fn function_mut(&mut self, entry: u64) -> Option<&mut FuncInfo> {
        self.functions
            .binary_search_by_key(&entry, |f| f.entry)
            .ok()
            .map(move |i| &mut self.functions[i])
    }

    /// The block containing the instruction at `addr`.
    pub fn block_containing(&self, addr: u64) -> Option<&LiftedBlock> {
        let (_, b) = self.blocks.range(..=addr).next_back()?;
        (b.contains_insn(addr) || (b.start == addr)).then_some(b)
    }

    /// Blocks transferring control into the function entered at `entry` from
    /// outside it: call sites, indirect-resolved sources and tail jumps.
    pub fn callers_of(&self, entry: u64) -> Vec<(u64, EdgeKind)> {
        let mut out: Vec<(u64, EdgeKind)> = self
            .preds(entry)
            .iter()
            .copied()
            .filter(|&(src, kind)| match kind {
                EdgeKind::Call | EdgeKind::IndirectResolved => true,
                EdgeKind::Jump => self.function_of(src) != Some(entry),
                _ => false,
            })
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    /// The block control returns to after the call ending `block`.
    pub fn return_site(&self, block: u64) -> Option<u64> {
        self.succs(block)
            .iter()
            .find(|(_, k)| *k == EdgeKind::ReturnTo)
            .map(|(d, _)| *d)
    }

    pub fn indirect_edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.iter().filter(|e| e.kind == EdgeKind::IndirectResolved)
    }

    pub fn legacy_syscalls(&self) -> Vec<u64> {
        let mut v: Vec<u64> = self
            .reachable
            .iter()
            .flat_map(|b| self.blocks[b].legacy_syscalls.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }

    /// Poisoned functions with at least one reachable block.
    pub fn reachable_poisoned_functions(&self) -> Vec<u64> {
        self.functions
            .iter()
            .filter(|f| f.poisoned && f.blocks.iter().any(|b| self.reachable.contains(b)))
            .map(|f| f.entry)
            .collect()
    }

    /// Text dump: one `src -> dst kind` line per edge, then unresolved
    /// indirects and import calls.
    pub fn dump_edges(&self) -> String {
        let mut out = String::new();
        for e in &self.edges {
            let _ = writeln!(out, "{:#x} -> {:#x} {}", e.src, e.dst, e.kind.name());
        }
        for b in &self.unresolved_indirects {
            let _ = writeln!(out, "{b:#x} indirect");
        }
        for c in &self.import_calls {
            let _ = writeln!(
                out,
                "{:#x} import {}{}",
                c.block,
                c.symbol,
                if c.tail { " tail" } else { "" }
            );
        }
        out
    }
}
