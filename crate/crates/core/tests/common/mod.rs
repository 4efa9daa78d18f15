//! Random synthetic programs and brute-force oracles shared by the property
//! and acceptance suites. The oracles never call into the analysis code.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use sysscope::cfg::{Cfg, Edge, EdgeKind};
use sysscope::decoder::{Gpr, RegId, Width};
use sysscope::lifter::{ArithOp, LiftedBlock, MicroOp, MicroOpKind, StoreSrc, Terminator};
use sysscope::phases::SyscallNfa;
use sysscope::symexec::ExecBudget;
use sysscope::syscall_id::{IdentifyOptions, Resolution};

pub const MAX_NR: u64 = 547;
const BASE: u64 = 0x1000;
const STRIDE: u64 = 0x100;
const DATA: [Gpr; 6] = [Gpr::Rax, Gpr::Rbx, Gpr::Rcx, Gpr::Rdx, Gpr::Rsi, Gpr::Rdi];
/// Acyclic programs are regenerated until they have at most this many paths.
const PATH_CAP: u64 = 3000;

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn addr(i: usize) -> u64 {
    BASE + i as u64 * STRIDE
}

/// A single-function program. Block 0 is the entry, the last block holds
/// the one syscall (after its ops).
#[derive(Debug, Clone)]
pub struct Synth {
    pub ops: Vec<Vec<MicroOpKind>>,
    pub succs: Vec<Vec<usize>>,
}

impl Synth {
    pub fn target(&self) -> usize {
        self.ops.len() - 1
    }

    pub fn site(&self) -> u64 {
        let t = self.target();
        addr(t) + self.ops[t].len() as u64
    }

    pub fn cfg(&self) -> Cfg {
        let t = self.target();
        let mut blocks = BTreeMap::new();
        let mut edges = Vec::new();
        for (i, ops) in self.ops.iter().enumerate() {
            let start = addr(i);
            let mut lifted: Vec<MicroOp> =
                ops.iter().enumerate().map(|(k, &kind)| MicroOp { addr: start + k as u64, kind }).collect();
            if i == t {
                lifted.push(MicroOp { addr: start + ops.len() as u64, kind: MicroOpKind::Syscall });
            }
            let terminator = match self.succs[i].as_slice() {
                [] => Terminator::Halt,
                [j] if *j == i + 1 => Terminator::Fallthrough(addr(*j)),
                [j] => Terminator::JumpDirect(addr(*j)),
                [a, b] => Terminator::Branch { taken: addr(*a), fallthrough: addr(*b) },
                _ => unreachable!(),
            };
            match self.succs[i].as_slice() {
                [j] => edges.push(Edge {
                    src: start,
                    dst: addr(*j),
                    kind: if *j == i + 1 { EdgeKind::Fallthrough } else { EdgeKind::Jump },
                }),
                [a, b] => {
                    edges.push(Edge { src: start, dst: addr(*a), kind: EdgeKind::BranchTaken });
                    edges.push(Edge { src: start, dst: addr(*b), kind: EdgeKind::Fallthrough });
                }
                _ => {}
            }
            let insns = lifted.iter().map(|o| o.addr).collect();
            blocks.insert(
                start,
                LiftedBlock {
                    start,
                    byte_len: lifted.len().max(1) as u64,
                    ops: lifted,
                    terminator,
                    addresses_taken_here: Vec::new(),
                    legacy_syscalls: Vec::new(),
                    insns,
                },
            );
        }
        Cfg::from_parts(blocks, edges, vec![addr(0)], &BTreeSet::from([addr(0)]))
    }
}

/// Budgets large enough that a synthetic program never exhausts them.
pub fn oracle_options() -> IdentifyOptions {
    let mut o = IdentifyOptions { parallel: false, ..IdentifyOptions::default() };
    o.exec.budget = ExecBudget {
        max_states: 1_000_000,
        max_steps_per_state: 1_000_000,
        max_value_set: 1 << 16,
        ..ExecBudget::default()
    };
    o
}

fn pick<T: Copy>(rng: &mut StdRng, xs: &[T]) -> T {
    xs[rng.gen_range(0..xs.len())]
}

fn data_reg(rng: &mut StdRng) -> Gpr {
    // rax is the interesting register: bias towards it.
    if rng.gen_bool(0.4) {
        Gpr::Rax
    } else {
        pick(rng, &DATA)
    }
}

fn store_src(rng: &mut StdRng) -> StoreSrc {
    match rng.gen_range(0..6) {
        0 => StoreSrc::Unknown,
        1 | 2 => StoreSrc::Const(rng.gen_range(0..600)),
        _ => StoreSrc::Reg(RegId::full(data_reg(rng))),
    }
}

/// `tame` leaves out ops that make a register unknown outright.
fn gen_op(rng: &mut StdRng, tame: bool) -> MicroOpKind {
    let disp = pick(rng, &[-16i64, -8, 0, 8, 16]);
    let wide = pick(rng, &[Width::W64, Width::W32]);
    let kind = if tame { pick(rng, &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 18, 19]) } else { rng.gen_range(0..20) };
    match kind {
        0..=5 => {
            let width = pick(rng, &[Width::W64, Width::W64, Width::W32, Width::W32, Width::W16, Width::Low8, Width::High8]);
            MicroOpKind::WriteRegConst { dst: RegId::new(data_reg(rng), width), value: rng.gen_range(0..600) }
        }
        6 | 7 => MicroOpKind::CopyRegReg { dst: RegId::new(data_reg(rng), wide), src: RegId::new(data_reg(rng), wide) },
        8 | 9 => MicroOpKind::ArithImm {
            dst: RegId::new(data_reg(rng), wide),
            op: pick(rng, &[ArithOp::Add, ArithOp::Sub, ArithOp::And, ArithOp::Or, ArithOp::Xor]),
            imm: rng.gen_range(0..8),
        },
        10 => MicroOpKind::HavocReg { reg: data_reg(rng) },
        11 => MicroOpKind::LoadUnknown { dst: RegId::full(data_reg(rng)) },
        12 | 13 => MicroOpKind::StoreStack { base: Gpr::Rsp, disp, src: store_src(rng), width: Width::W64 },
        14 | 15 => MicroOpKind::LoadStack { dst: RegId::full(data_reg(rng)), base: Gpr::Rsp, disp },
        16 => MicroOpKind::Push { src: store_src(rng) },
        17 => MicroOpKind::Pop { dst: Some(RegId::full(data_reg(rng))) },
        18 => MicroOpKind::ArithImm {
            dst: RegId::full(Gpr::Rsp),
            op: pick(rng, &[ArithOp::Add, ArithOp::Sub]),
            imm: 8,
        },
        _ => MicroOpKind::Nop,
    }
}

/// Number of entry-to-target paths of an acyclic program.
fn path_count(succs: &[Vec<usize>]) -> u64 {
    let n = succs.len();
    let mut count = vec![0u64; n];
    count[n - 1] = 1;
    for i in (0..n - 1).rev() {
        count[i] = succs[i].iter().map(|&j| count[j]).fold(0u64, |a, b| a.saturating_add(b));
    }
    count[0]
}

/// A random acyclic program with at most `max_blocks` blocks where every
/// block is reachable from the entry and reaches the target.
pub fn gen_acyclic(rng: &mut StdRng, max_blocks: usize) -> Synth {
    loop {
        let n = rng.gen_range(2..=max_blocks);
        let mut succs: Vec<Vec<usize>> = vec![Vec::new(); n];
        for j in 1..n {
            let open: Vec<usize> = (0..j).filter(|&i| succs[i].len() < 2).collect();
            let p = pick(rng, &open);
            succs[p].push(j);
        }
        for i in 0..n - 1 {
            if succs[i].is_empty() {
                let j = rng.gen_range(i + 1..n);
                succs[i].push(j);
            }
        }
        for _ in 0..rng.gen_range(0..n) {
            let i = rng.gen_range(0..n - 1);
            let j = rng.gen_range(i + 1..n);
            if succs[i].len() < 2 && !succs[i].contains(&j) {
                succs[i].push(j);
            }
        }
        if path_count(&succs) > PATH_CAP {
            continue;
        }
        let tame = rng.gen_bool(0.5);
        let mut ops: Vec<Vec<MicroOpKind>> =
            (0..n).map(|_| (0..rng.gen_range(0..=5)).map(|_| gen_op(rng, tame)).collect()).collect();
        // Mostly start from a defined rax so that many programs resolve.
        if rng.gen_bool(0.75) {
            ops[0].insert(0, MicroOpKind::WriteRegConst { dst: RegId::full(Gpr::Rax), value: rng.gen_range(0..400) });
        }
        return Synth { ops, succs };
    }
}

/// An acyclic program plus up to three back edges (never out of the target).
pub fn gen_looping(rng: &mut StdRng, max_blocks: usize) -> Synth {
    let mut s = gen_acyclic(rng, max_blocks);
    let t = s.target();
    for _ in 0..rng.gen_range(1..=3) {
        if t == 0 {
            break;
        }
        let i = rng.gen_range(0..t);
        let j = rng.gen_range(0..=i);
        if s.succs[i].len() < 2 && !s.succs[i].contains(&j) {
            s.succs[i].push(j);
        }
    }
    s
}

/// Concrete state of the oracle interpreter. `None` is a value the
/// program does not determine (entry registers, unknown memory).
#[derive(Debug, Clone)]
struct Concrete {
    regs: [Option<u64>; 16],
    sp: i64,
    mem: BTreeMap<i64, Option<u64>>,
}

fn width_mask(w: Width) -> u64 {
    match w {
        Width::Low8 | Width::High8 => 0xff,
        Width::W16 => 0xffff,
        Width::W32 => 0xffff_ffff,
        Width::W64 => u64::MAX,
    }
}

fn width_shift(w: Width) -> u32 {
    if w == Width::High8 {
        8
    } else {
        0
    }
}

impl Concrete {
    fn new() -> Self {
        Concrete { regs: [None; 16], sp: 0, mem: BTreeMap::new() }
    }

    fn read(&self, r: RegId) -> Option<u64> {
        self.regs[r.gpr.index()].map(|v| (v >> width_shift(r.width)) & width_mask(r.width))
    }

    fn write(&mut self, r: RegId, v: Option<u64>) {
        let i = r.gpr.index();
        self.regs[i] = match r.width {
            Width::W64 | Width::W32 => v.map(|x| x & width_mask(r.width)),
            w => match (self.regs[i], v) {
                (Some(old), Some(new)) => {
                    let m = width_mask(w) << width_shift(w);
                    Some((old & !m) | ((new << width_shift(w)) & m))
                }
                _ => None,
            },
        };
    }

    fn src(&self, s: StoreSrc) -> Option<u64> {
        match s {
            StoreSrc::Reg(r) => self.read(r),
            StoreSrc::Const(c) => Some(c),
            StoreSrc::Unknown => None,
        }
    }

    fn step(&mut self, op: &MicroOpKind) {
        match *op {
            MicroOpKind::WriteRegConst { dst, value } => self.write(dst, Some(value)),
            MicroOpKind::CopyRegReg { dst, src } => self.write(dst, self.read(src)),
            MicroOpKind::ArithImm { dst, op, imm } if dst.gpr == Gpr::Rsp => match op {
                ArithOp::Add => self.sp += imm as i64,
                ArithOp::Sub => self.sp -= imm as i64,
                _ => unreachable!("generator only adjusts rsp by add/sub"),
            },
            MicroOpKind::ArithImm { dst, op, imm } => {
                let v = self.read(dst).map(|x| {
                    let r = match op {
                        ArithOp::Add => x.wrapping_add(imm),
                        ArithOp::Sub => x.wrapping_sub(imm),
                        ArithOp::And => x & imm,
                        ArithOp::Or => x | imm,
                        ArithOp::Xor => x ^ imm,
                    };
                    r & width_mask(dst.width)
                });
                self.write(dst, v);
            }
            MicroOpKind::HavocReg { reg } => self.regs[reg.index()] = None,
            MicroOpKind::LoadUnknown { dst } => self.write(dst, None),
            MicroOpKind::StoreStack { disp, src, .. } => {
                let v = self.src(src);
                self.mem.insert(self.sp + disp, v);
            }
            MicroOpKind::LoadStack { dst, disp, .. } => {
                let v = self.mem.get(&(self.sp + disp)).copied().flatten();
                self.write(dst, v);
            }
            MicroOpKind::Push { src } => {
                let v = self.src(src);
                self.sp -= 8;
                self.mem.insert(self.sp, v);
            }
            MicroOpKind::Pop { dst } => {
                let v = self.mem.get(&self.sp).copied().flatten();
                self.sp += 8;
                if let Some(d) = dst {
                    self.write(d, v);
                }
            }
            MicroOpKind::Syscall => {
                for g in [Gpr::Rax, Gpr::Rcx, Gpr::R11] {
                    self.regs[g.index()] = None;
                }
            }
            MicroOpKind::Nop => {}
            ref other => unreachable!("generator does not emit {other:?}"),
        }
    }
}

/// Values of rax at the syscall over entry-to-target paths. Acyclic
/// programs are enumerated completely; with loops each block is entered at
/// most `visits` times and at most `max_paths` paths are taken, so the
/// result is a subset of the real behaviour.
pub fn oracle_values(s: &Synth, visits: usize, max_paths: usize) -> BTreeSet<Option<u64>> {
    fn walk(
        s: &Synth,
        b: usize,
        mut st: Concrete,
        seen: &mut Vec<usize>,
        visits: usize,
        out: &mut BTreeSet<Option<u64>>,
        paths: &mut usize,
        max_paths: usize,
    ) {
        if *paths >= max_paths || seen[b] >= visits {
            return;
        }
        seen[b] += 1;
        for op in &s.ops[b] {
            st.step(op);
        }
        if b == s.target() {
            out.insert(st.regs[Gpr::Rax.index()]);
            *paths += 1;
        } else {
            for &n in &s.succs[b] {
                walk(s, n, st.clone(), seen, visits, out, paths, max_paths);
            }
        }
        seen[b] -= 1;
    }
    let mut out = BTreeSet::new();
    let mut seen = vec![0; s.ops.len()];
    let mut paths = 0;
    walk(s, 0, Concrete::new(), &mut seen, visits, &mut out, &mut paths, max_paths);
    out
}

/// The oracle's verdict in the analyzer's terms: `None` when some path
/// leaves the number undetermined or only out-of-range constants arrive.
pub fn oracle_resolution(values: &BTreeSet<Option<u64>>) -> Option<BTreeSet<u64>> {
    if values.contains(&None) {
        return None;
    }
    let ok: BTreeSet<u64> = values.iter().flatten().copied().filter(|&v| v <= MAX_NR).collect();
    if ok.is_empty() {
        None
    } else {
        Some(ok)
    }
}

/// Exact agreement on an acyclic program.
pub fn agrees_exactly(analyzed: &Resolution, s: &Synth) -> Result<(), String> {
    let want = oracle_resolution(&oracle_values(s, 1, usize::MAX));
    let got = analyzed.numbers().cloned();
    if got == want {
        Ok(())
    } else {
        Err(format!("analyzer {got:?} oracle {want:?} program {s:?}"))
    }
}

/// Soundness on a program with loops: what the bounded oracle sees must be
/// covered by the analyzer's answer.
pub fn covers(analyzed: &Resolution, s: &Synth) -> Result<(), String> {
    let values = oracle_values(s, 3, 5000);
    match analyzed.numbers() {
        None => Ok(()),
        Some(_) if values.contains(&None) => Err(format!("analyzer resolved a path-dependent unknown: {s:?}")),
        Some(got) => {
            let want: BTreeSet<u64> = values.iter().flatten().copied().filter(|&v| v <= MAX_NR).collect();
            if got.is_superset(&want) {
                Ok(())
            } else {
                Err(format!("missing {:?} in {got:?}: {s:?}", want.difference(got).collect::<Vec<_>>()))
            }
        }
    }
}

/// A random NFA with at most `max_states` states over labels `0..alphabet`.
pub fn gen_nfa(rng: &mut StdRng, max_states: usize, max_alphabet: u64) -> SyscallNfa {
    let n = rng.gen_range(1..=max_states);
    let k = rng.gen_range(1..=max_alphabet);
    let mut nfa = SyscallNfa::with_states(n);
    nfa.initial = rng.gen_range(0..n);
    for s in 0..n {
        for t in 0..n {
            if rng.gen_bool(0.12) {
                nfa.add_eps(s, t);
            }
            for l in 0..k {
                if rng.gen_bool(0.15) {
                    nfa.add_label(s, l, t);
                }
            }
        }
    }
    if rng.gen_bool(0.5) {
        nfa.accepting = Some((0..n).filter(|_| rng.gen_bool(0.4)).collect());
    }
    nfa
}

/// Textbook subset construction over the full alphabet, with an explicit
/// dead state for the empty subset.
pub struct OracleDfa {
    trans: Vec<BTreeMap<u64, usize>>,
    accepting: Vec<bool>,
}

impl OracleDfa {
    pub fn build(nfa: &SyscallNfa, alphabet: &[u64]) -> OracleDfa {
        let closure = |seed: BTreeSet<usize>| {
            let mut out = seed.clone();
            let mut work: Vec<usize> = seed.into_iter().collect();
            while let Some(s) = work.pop() {
                for &t in &nfa.eps[s] {
                    if out.insert(t) {
                        work.push(t);
                    }
                }
            }
            out
        };
        let accepts = |set: &BTreeSet<usize>| match &nfa.accepting {
            None => !set.is_empty(),
            Some(acc) => set.iter().any(|s| acc.contains(s)),
        };
        let start = closure(BTreeSet::from([nfa.initial]));
        let mut index: BTreeMap<BTreeSet<usize>, usize> = BTreeMap::from([(start.clone(), 0)]);
        let mut sets = vec![start];
        let mut trans = Vec::new();
        let mut queue = VecDeque::from([0usize]);
        while let Some(i) = queue.pop_front() {
            let mut row = BTreeMap::new();
            for &a in alphabet {
                let moved: BTreeSet<usize> = sets[i]
                    .iter()
                    .flat_map(|&s| nfa.trans[s].iter().filter(move |(l, _)| *l == a).map(|(_, t)| *t))
                    .collect();
                let next = closure(moved);
                let id = *index.entry(next.clone()).or_insert_with(|| {
                    sets.push(next);
                    queue.push_back(sets.len() - 1);
                    sets.len() - 1
                });
                row.insert(a, id);
            }
            if trans.len() <= i {
                trans.resize(i + 1, BTreeMap::new());
            }
            trans[i] = row;
        }
        let accepting = sets.iter().map(accepts).collect();
        OracleDfa { trans, accepting }
    }

    pub fn accepts(&self, word: &[u64]) -> bool {
        let mut s = 0;
        for a in word {
            s = self.trans[s][a];
        }
        self.accepting[s]
    }
}

/// Every word over `alphabet` of length at most `max_len`.
pub fn all_words(alphabet: &[u64], max_len: usize) -> Vec<Vec<u64>> {
    let mut out = vec![Vec::new()];
    let mut frontier = vec![Vec::new()];
    for _ in 0..max_len {
        let mut next = Vec::new();
        for w in &frontier {
            for &a in alphabet {
                let mut x: Vec<u64> = w.clone();
                x.push(a);
                next.push(x);
            }
        }
        out.extend(next.iter().cloned());
        frontier = next;
    }
    out
}
