//! Phase automaton: the CFG as an NFA over syscall numbers, determinized,
//! condensed into phases with per-phase allowlists.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cfg::{Cfg, EdgeKind};
use crate::graph::tarjan_scc;
use crate::lifter::Terminator;
use crate::syscall_id::{ProgramIdentification, Resolution};

pub const DEFAULT_MAX_DFA_STATES: usize = 1_000_000;
pub const DEFAULT_TAU: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PhaseError {
    #[error("unresolved syscall sites present: {}", fmt_addrs(.0))]
    UnresolvedSitesPresent(Vec<u64>),
    #[error("subset construction exceeded {cap} states while expanding blocks {}", fmt_addrs(.region))]
    StateBlowup { cap: usize, region: Vec<u64> },
}

fn fmt_addrs(v: &[u64]) -> String {
    v.iter().map(|a| format!("{a:#x}")).collect::<Vec<_>>().join(", ")
}

/// NFA with ε-moves. State 0 is not special; `initial` says where to start.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SyscallNfa {
    pub initial: usize,
    pub eps: Vec<Vec<usize>>,
    pub trans: Vec<Vec<(u64, usize)>>,
    /// `None`: every state accepts (the program language is prefix closed).
    pub accepting: Option<BTreeSet<usize>>,
    pub alphabet: BTreeSet<u64>,
    /// CFG block each state stands for, if any.
    pub block_of: Vec<Option<u64>>,
    pub block_size: BTreeMap<u64, u64>,
}

impl SyscallNfa {
    pub fn with_states(n: usize) -> SyscallNfa {
        SyscallNfa {
            initial: 0,
            eps: vec![Vec::new(); n],
            trans: vec![Vec::new(); n],
            accepting: None,
            alphabet: BTreeSet::new(),
            block_of: vec![None; n],
            block_size: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.eps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eps.is_empty()
    }

    fn add_state(&mut self, block: Option<u64>) -> usize {
        self.eps.push(Vec::new());
        self.trans.push(Vec::new());
        self.block_of.push(block);
        self.eps.len() - 1
    }

    pub fn add_eps(&mut self, from: usize, to: usize) {
        if !self.eps[from].contains(&to) {
            self.eps[from].push(to);
        }
    }

    pub fn add_label(&mut self, from: usize, nr: u64, to: usize) {
        self.alphabet.insert(nr);
        if !self.trans[from].contains(&(nr, to)) {
            self.trans[from].push((nr, to));
        }
    }

    fn closure(&self, seeds: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<usize> = seeds.into_iter().collect();
        while let Some(s) = stack.pop() {
            if seen.insert(s) {
                stack.extend(self.eps[s].iter().copied().filter(|t| !seen.contains(t)));
            }
        }
        seen.into_iter().collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct NfaOptions {
    /// Build even with unresolved sites, labeling them with what is known.
    pub allow_unresolved: bool,
    /// Syscalls a call block may make outside the analyzed code (calls into
    /// libraries): any sequence over the set.
    pub call_labels: BTreeMap<u64, BTreeSet<u64>>,
    /// Syscalls made before the entry point (loader, initializers).
    pub prelude: BTreeSet<u64>,
}

/// Where each function's `ret` may go: return sites of its callers, and of
/// the callers of anything that tail-jumps into it.
fn return_targets(cfg: &Cfg) -> BTreeMap<u64, BTreeSet<u64>> {
    let mut direct: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    let mut tail_from: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for e in &cfg.edges {
        let Some(callee) = cfg.function_of(e.dst).filter(|&f| f == e.dst) else { continue };
        let src_fn = cfg.function_of(e.src);
        let tail = match e.kind {
            EdgeKind::Call => false,
            EdgeKind::IndirectResolved => matches!(cfg.blocks[&e.src].terminator, Terminator::JumpIndirect),
            EdgeKind::Jump => src_fn != Some(callee),
            _ => continue,
        };
        if tail {
            if let Some(g) = src_fn {
                tail_from.entry(callee).or_default().insert(g);
            }
        } else if let Some(r) = cfg.return_site(e.src) {
            direct.entry(callee).or_default().insert(r);
        }
    }
    let mut out = direct;
    loop {
        let mut changed = false;
        for (f, gs) in &tail_from {
            let add: BTreeSet<u64> = gs.iter().filter_map(|g| out.get(g)).flatten().copied().collect();
            let slot = out.entry(*f).or_default();
            let before = slot.len();
            slot.extend(add);
            changed |= slot.len() != before;
        }
        if !changed {
            break;
        }
    }
    out
}

/// Encodes reachable blocks as NFA states. A block with k syscall sites
/// becomes a chain of k+1 states joined by the sites' numbers; control-flow
/// edges are ε-moves, calls enter the callee and returns go back to every
/// return site of the function's callers.
pub fn build_nfa(cfg: &Cfg, ident: &ProgramIdentification, opts: &NfaOptions) -> Result<SyscallNfa, PhaseError> {
    let unresolved: Vec<u64> = ident
        .sites
        .values()
        .filter(|s| !s.resolved.is_resolved())
        .map(|s| s.address)
        .collect();
    if !unresolved.is_empty() && !opts.allow_unresolved {
        return Err(PhaseError::UnresolvedSitesPresent(unresolved));
    }

    let mut nfa = SyscallNfa::with_states(1);
    let start = 0;
    let reach = cfg.reachable_blocks();
    // first and last state of each block
    let mut span: BTreeMap<u64, (usize, usize)> = BTreeMap::new();
    for &b in reach {
        let blk = &cfg.blocks[&b];
        nfa.block_size.insert(b, blk.byte_len);
        let first = nfa.add_state(Some(b));
        let mut cur = first;
        for site in blk.syscall_sites() {
            let next = nfa.add_state(Some(b));
            let numbers = match ident.sites.get(&site) {
                Some(s) => match &s.resolved {
                    Resolution::Numbers { numbers } => numbers.clone(),
                    Resolution::Unresolved { .. } => s.partial.clone(),
                },
                None => BTreeSet::new(),
            };
            for n in numbers {
                nfa.add_label(cur, n, next);
            }
            cur = next;
        }
        span.insert(b, (first, cur));
    }

    if !opts.prelude.is_empty() {
        for &n in &opts.prelude {
            nfa.add_label(start, n, start);
        }
    }
    let init_roots: BTreeSet<u64> = cfg.entry_nodes.iter().copied().collect();
    for e in &cfg.entry_nodes {
        if let Some(&(first, _)) = span.get(e) {
            nfa.add_eps(start, first);
        }
    }

    let rets = return_targets(cfg);
    for (&b, &(_, last)) in &span {
        let blk = &cfg.blocks[&b];
        let succs = cfg.succs(b);
        let has_callee = succs.iter().any(|(_, k)| matches!(k, EdgeKind::Call | EdgeKind::IndirectResolved));
        let is_call = matches!(blk.terminator, Terminator::CallDirect { .. } | Terminator::CallIndirect { .. });
        let fn_rets = || {
            cfg.function_of(b)
                .and_then(|f| rets.get(&f))
                .into_iter()
                .flatten()
                .filter_map(|r| span.get(r).map(|s| s.0))
                .collect::<Vec<_>>()
        };

        // Calls into other objects: any sequence over their syscalls.
        let exit = match opts.call_labels.get(&b) {
            Some(labels) => {
                let lib = nfa.add_state(Some(b));
                nfa.add_eps(last, lib);
                for &n in labels {
                    nfa.add_label(lib, n, lib);
                }
                lib
            }
            None => last,
        };
        let tail_import = cfg.import_calls.iter().any(|c| c.block == b && c.tail);
        if tail_import {
            for r in fn_rets() {
                nfa.add_eps(exit, r);
            }
        }
        for &(dst, kind) in succs {
            let Some(&(dfirst, _)) = span.get(&dst) else { continue };
            match kind {
                EdgeKind::ReturnTo if is_call && has_callee => {}
                EdgeKind::ReturnTo => nfa.add_eps(exit, dfirst),
                _ => nfa.add_eps(last, dfirst),
            }
        }
        if blk.terminator == Terminator::Return {
            for r in fn_rets() {
                nfa.add_eps(last, r);
            }
            // Initializers return to the loader, which goes on to the entry.
            if cfg.function_of(b).is_some_and(|f| init_roots.contains(&f) && !rets.contains_key(&f)) {
                nfa.add_eps(last, start);
            }
        }
    }
    Ok(nfa)
}

/// Deterministic automaton over syscall numbers. State 0 is initial.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseDfa {
    /// NFA states making up each DFA state.
    pub subsets: Vec<Vec<usize>>,
    pub trans: Vec<BTreeMap<u64, usize>>,
    pub accepting: Vec<bool>,
    pub alphabet: BTreeSet<u64>,
    /// Blocks covered by each DFA state.
    pub blocks: Vec<BTreeSet<u64>>,
    pub block_size: BTreeMap<u64, u64>,
}

impl PhaseDfa {
    pub fn len(&self) -> usize {
        self.trans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trans.is_empty()
    }

    /// Runs `word` from the initial state; `None` if it gets stuck.
    pub fn run(&self, word: &[u64]) -> Option<usize> {
        let mut s = 0;
        for n in word {
            s = *self.trans[s].get(n)?;
        }
        Some(s)
    }

    pub fn accepts(&self, word: &[u64]) -> bool {
        self.run(word).is_some_and(|s| self.accepting[s])
    }
}

/// Subset construction over ε-closures, reachable subsets only.
pub fn determinize(nfa: &SyscallNfa, max_states: usize) -> Result<PhaseDfa, PhaseError> {
    let accepting = |set: &[usize]| match &nfa.accepting {
        None => true,
        Some(acc) => set.iter().any(|s| acc.contains(s)),
    };
    let init = nfa.closure([nfa.initial]);
    let mut ids: HashMap<Vec<usize>, usize> = HashMap::new();
    ids.insert(init.clone(), 0);
    let mut subsets = vec![init];
    let mut trans: Vec<BTreeMap<u64, usize>> = Vec::new();
    let mut i = 0;
    while i < subsets.len() {
        let mut moves: BTreeMap<u64, BTreeSet<usize>> = BTreeMap::new();
        for &s in &subsets[i] {
            for &(n, t) in &nfa.trans[s] {
                moves.entry(n).or_default().insert(t);
            }
        }
        let mut row = BTreeMap::new();
        for (n, targets) in moves {
            let closed = nfa.closure(targets);
            let id = match ids.get(&closed) {
                Some(&id) => id,
                None => {
                    if subsets.len() >= max_states {
                        let region: BTreeSet<u64> = subsets[i].iter().filter_map(|&s| nfa.block_of[s]).collect();
                        return Err(PhaseError::StateBlowup { cap: max_states, region: region.into_iter().take(16).collect() });
                    }
                    let id = subsets.len();
                    ids.insert(closed.clone(), id);
                    subsets.push(closed);
                    id
                }
            };
            row.insert(n, id);
        }
        trans.push(row);
        i += 1;
    }
    let blocks = subsets
        .iter()
        .map(|s| s.iter().filter_map(|&x| nfa.block_of[x]).collect())
        .collect();
    Ok(PhaseDfa {
        accepting: subsets.iter().map(|s| accepting(s)).collect(),
        subsets,
        trans,
        alphabet: nfa.alphabet.clone(),
        blocks,
        block_size: nfa.block_size.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub id: usize,
    pub dfa_states: Vec<usize>,
    pub allowed: BTreeSet<u64>,
    pub code_size: u64,
    pub blocks: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    pub from: usize,
    pub to: usize,
    pub numbers: BTreeSet<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phases {
    pub phases: Vec<Phase>,
    pub phase_of: Vec<usize>,
    pub initial: usize,
    /// Transitions between distinct phases.
    pub transitions: Vec<PhaseTransition>,
    pub alphabet: BTreeSet<u64>,
    pub tau: f64,
    pub back_propagated: bool,
}

fn jaccard(a: &BTreeSet<u64>, b: &BTreeSet<u64>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

struct UnionFind(Vec<usize>);

impl UnionFind {
    fn find(&mut self, x: usize) -> usize {
        let mut r = x;
        while self.0[r] != r {
            r = self.0[r];
        }
        let mut y = x;
        while self.0[y] != r {
            let next = self.0[y];
            self.0[y] = r;
            y = next;
        }
        r
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = (ra.min(rb), ra.max(rb));
            self.0[hi] = lo;
        }
    }
}

/// Groups DFA states into phases: strongly connected components, then
/// adjacent phases with allowlist Jaccard similarity ≥ `tau` (best pair
/// first). `tau >= 1` leaves plain SCCs.
pub fn merge_phases(dfa: &PhaseDfa, tau: f64) -> Phases {
    let n = dfa.len();
    let succ: Vec<Vec<usize>> = dfa.trans.iter().map(|t| t.values().copied().collect()).collect();
    let sccs = tarjan_scc(n, &succ);
    let mut uf = UnionFind((0..n).collect());
    for comp in &sccs {
        for &m in &comp[1..] {
            uf.union(comp[0], m);
        }
    }

    let allowed_of = |uf: &mut UnionFind| -> BTreeMap<usize, BTreeSet<u64>> {
        let mut out: BTreeMap<usize, BTreeSet<u64>> = BTreeMap::new();
        for s in 0..n {
            let r = uf.find(s);
            out.entry(r).or_default().extend(dfa.trans[s].keys().copied());
        }
        out
    };
    if tau < 1.0 {
        loop {
            let allowed = allowed_of(&mut uf);
            let mut best: Option<(f64, usize, usize)> = None;
            for s in 0..n {
                for &t in dfa.trans[s].values() {
                    let (a, b) = (uf.find(s), uf.find(t));
                    if a == b {
                        continue;
                    }
                    let j = jaccard(&allowed[&a], &allowed[&b]);
                    let (lo, hi) = (a.min(b), a.max(b));
                    let better = match best {
                        None => true,
                        Some((bj, bl, bh)) => j > bj || (j == bj && (lo, hi) < (bl, bh)),
                    };
                    if j >= tau && better {
                        best = Some((j, lo, hi));
                    }
                }
            }
            match best {
                Some((_, a, b)) => uf.union(a, b),
                None => break,
            }
        }
    }

    // Dense phase ids in order of first member state (so the initial
    // state's phase is 0).
    let mut id_of_root: BTreeMap<usize, usize> = BTreeMap::new();
    let mut phase_of = vec![0; n];
    for (s, slot) in phase_of.iter_mut().enumerate() {
        let r = uf.find(s);
        let next = id_of_root.len();
        *slot = *id_of_root.entry(r).or_insert(next);
    }
    let count = id_of_root.len();
    let mut members = vec![Vec::new(); count];
    for (s, &p) in phase_of.iter().enumerate() {
        members[p].push(s);
    }
    let phases = members
        .into_iter()
        .enumerate()
        .map(|(id, states)| {
            let allowed = states.iter().flat_map(|&s| dfa.trans[s].keys().copied()).collect();
            let blocks: BTreeSet<u64> = states.iter().flat_map(|&s| dfa.blocks[s].iter().copied()).collect();
            let code_size = blocks.iter().map(|b| dfa.block_size.get(b).copied().unwrap_or(0)).sum();
            Phase { id, dfa_states: states, allowed, code_size, blocks: blocks.len() }
        })
        .collect();
    let mut edges: BTreeMap<(usize, usize), BTreeSet<u64>> = BTreeMap::new();
    for s in 0..n {
        for (&nr, &t) in &dfa.trans[s] {
            let (a, b) = (phase_of[s], phase_of[t]);
            if a != b {
                edges.entry((a, b)).or_default().insert(nr);
            }
        }
    }
    Phases {
        phases,
        initial: phase_of.first().copied().unwrap_or(0),
        phase_of,
        transitions: edges.into_iter().map(|((from, to), numbers)| PhaseTransition { from, to, numbers }).collect(),
        alphabet: dfa.alphabet.clone(),
        tau,
        back_propagated: false,
    }
}

/// Makes allowlists monotone along phase transitions: every phase also
/// allows what any phase reachable from it allows.
pub fn back_propagate(mut phases: Phases) -> Phases {
    loop {
        let mut changed = false;
        for t in &phases.transitions {
            let add = phases.phases[t.to].allowed.clone();
            let p = &mut phases.phases[t.from].allowed;
            let before = p.len();
            p.extend(add);
            changed |= p.len() != before;
        }
        if !changed {
            break;
        }
    }
    for t in &phases.transitions {
        assert!(
            phases.phases[t.from].allowed.is_superset(&phases.phases[t.to].allowed),
            "back-propagation left a non-monotone transition"
        );
    }
    phases.back_propagated = true;
    phases
}

impl Phases {
    /// |allowed| / |alphabet| per phase.
    pub fn strictness(&self) -> Vec<f64> {
        let total = self.alphabet.len();
        self.phases
            .iter()
            .map(|p| if total == 0 { 0.0 } else { p.allowed.len() as f64 / total as f64 })
            .collect()
    }

    /// Count of distinct numbers on transitions from row phase to column phase.
    pub fn matrix(&self) -> Vec<Vec<usize>> {
        let n = self.phases.len();
        let mut m = vec![vec![0; n]; n];
        for t in &self.transitions {
            m[t.from][t.to] = t.numbers.len();
        }
        m
    }

    /// Replays `word` through the DFA, checking each number against the
    /// allowlist of the phase it is issued in.
    pub fn permits(&self, dfa: &PhaseDfa, word: &[u64]) -> bool {
        let mut s = 0;
        for n in word {
            if !self.phases[self.phase_of[s]].allowed.contains(n) {
                return false;
            }
            match dfa.trans[s].get(n) {
                Some(&t) => s = t,
                None => return false,
            }
        }
        true
    }

    pub fn to_json(&self) -> serde_json::Value {
        let strict = self.strictness();
        serde_json::json!({
            "tau": self.tau,
            "back_propagated": self.back_propagated,
            "initial_phase": self.initial,
            "alphabet": self.alphabet,
            "phases": self.phases.iter().zip(&strict).map(|(p, s)| serde_json::json!({
                "id": p.id,
                "dfa_states": p.dfa_states.len(),
                "blocks": p.blocks,
                "code_size": p.code_size,
                "allowed": p.allowed,
                "strictness": s,
            })).collect::<Vec<_>>(),
            "transitions": self.transitions,
            "matrix": self.matrix(),
        })
    }

    /// Human-readable report with an aligned transition matrix.
    pub fn to_text(&self, names: &dyn Fn(u64) -> String) -> String {
        let mut out = String::new();
        let strict = self.strictness();
        let _ = writeln!(
            out,
            "{} phases, alphabet {} syscalls, tau {}, back-propagation {}",
            self.phases.len(),
            self.alphabet.len(),
            self.tau,
            if self.back_propagated { "on" } else { "off" }
        );
        for (p, s) in self.phases.iter().zip(&strict) {
            let allowed: Vec<String> = p.allowed.iter().map(|&n| names(n)).collect();
            let _ = writeln!(
                out,
                "P{}{}: {} states, {} bytes, {} allowed ({:.0}%): {}",
                p.id,
                if p.id == self.initial { " (initial)" } else { "" },
                p.dfa_states.len(),
                p.code_size,
                p.allowed.len(),
                s * 100.0,
                allowed.join(" ")
            );
        }
        let m = self.matrix();
        let labels: Vec<String> = (0..m.len()).map(|i| format!("P{i}")).collect();
        let w = labels.iter().map(String::len).max().unwrap_or(2).max(3);
        let _ = write!(out, "{:>w$}", "");
        for l in &labels {
            let _ = write!(out, " {l:>w$}");
        }
        out.push('\n');
        for (i, row) in m.iter().enumerate() {
            let _ = write!(out, "{:>w$}", labels[i]);
            for &c in row {
                let cell = if c == 0 { "-".to_string() } else { c.to_string() };
                let _ = write!(out, " {cell:>w$}");
            }
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain_dfa(labels: &[&[u64]]) -> PhaseDfa {
        // state i --labels[i]--> i+1
        let n = labels.len() + 1;
        let mut nfa = SyscallNfa::with_states(n);
        for (i, ls) in labels.iter().enumerate() {
            for &l in *ls {
                nfa.add_label(i, l, i + 1);
            }
        }
        determinize(&nfa, 100).unwrap()
    }

    #[test]
    fn chain_back_propagates() {
        let dfa = chain_dfa(&[&[2], &[0]]);
        let p = merge_phases(&dfa, 1.0);
        assert_eq!(p.phases.len(), 3);
        let p = back_propagate(p);
        assert_eq!(p.phases[0].allowed, BTreeSet::from([0, 2]));
        assert_eq!(p.phases[1].allowed, BTreeSet::from([0]));
    }

    #[test]
    fn cycle_is_one_phase() {
        let mut nfa = SyscallNfa::with_states(3);
        nfa.add_label(0, 1, 1);
        nfa.add_label(1, 2, 2);
        nfa.add_label(2, 3, 0);
        let dfa = determinize(&nfa, 100).unwrap();
        assert_eq!(merge_phases(&dfa, 1.0).phases.len(), 1);
    }

    #[test]
    fn empty_alphabet_single_state() {
        let mut nfa = SyscallNfa::with_states(3);
        nfa.add_eps(0, 1);
        nfa.add_eps(1, 2);
        let dfa = determinize(&nfa, 100).unwrap();
        assert_eq!(dfa.len(), 1);
    }

    #[test]
    fn blowup_is_reported() {
        let dfa = chain_dfa(&[&[1], &[2], &[3]]);
        assert_eq!(dfa.len(), 4);
        let mut nfa = SyscallNfa::with_states(4);
        for i in 0..3 {
            nfa.add_label(i, 1, i + 1);
        }
        assert!(matches!(determinize(&nfa, 2), Err(PhaseError::StateBlowup { cap: 2, .. })));
    }
}
