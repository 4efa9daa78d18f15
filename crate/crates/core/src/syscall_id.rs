//! Per-site syscall number identification.
//!
//! For each reachable `syscall` instruction the containing function is first
//! checked for being a wrapper (number received as a parameter). Ordinary
//! sites are resolved by a backward breadth-first search over predecessor
//! blocks, running a directed symbolic execution from each frontier block to
//! the site. Wrapper sites are resolved at every reachable call site of the
//! wrapper instead, querying the parameter location.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::cfg::{Cfg, EdgeKind, FuncInfo};
use crate::decoder::{Gpr, Width};
use crate::lifter::{MicroOpKind, Terminator};
use crate::loader::{BinaryImage, BinaryKind};
use crate::symexec::{run_directed, BudgetKind, DirectedOutcome, ExecConfig, Location, Sym};

/// Highest syscall number accepted by default (x86-64 table bound).
pub const DEFAULT_MAX_SYSCALL_NR: u64 = 547;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "at", rename_all = "kebab-case")]
pub enum ParamLocation {
    Register(Gpr),
    /// Byte offset from the stack pointer at function entry (+8 is the first
    /// stack argument).
    StackSlot(i64),
}

impl ParamLocation {
    /// The location to query at a transfer into the wrapper: a call pushes
    /// the return address, a tail jump does not.
    pub fn at_transfer(self, tail: bool) -> Location {
        match self {
            ParamLocation::Register(r) => Location::Register(r),
            ParamLocation::StackSlot(o) if tail => Location::StackAtSp(o),
            ParamLocation::StackSlot(o) => Location::StackAtSp(o - 8),
        }
    }
}

impl std::fmt::Display for ParamLocation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ParamLocation::Register(r) => write!(f, "%{r}"),
            ParamLocation::StackSlot(o) => write!(f, "{o}(%rsp@entry)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Confirmation {
    /// The use-define scan found rax fully determined by constants.
    UdchainOnlyNegative,
    SymbolicConfirmed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperInfo {
    pub function: u64,
    pub site: u64,
    pub param_location: ParamLocation,
    pub confirmed_by: Confirmation,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WrapperDetection {
    NotWrapper { confirmed_by: Confirmation },
    Wrapper(WrapperInfo),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SyscallIdError {
    #[error("syscall number at {site:#x} depends on several entry values")]
    AmbiguousParam { site: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum UnresolvedReason {
    /// The number is still symbolic at an analysis root (entry point,
    /// export, or a block without predecessors).
    StillSymbolic { root: u64, symbol: Sym },
    /// The backward search hit the caller-depth bound.
    DepthBound { at: u64 },
    BudgetExhausted { budget: BudgetKind },
    /// The number depends on several wrapper parameters.
    AmbiguousParam,
    /// Only out-of-range constants reach the site.
    OutOfRange { values: Vec<u64> },
    /// A wrapper called from at least one call site that could not be resolved.
    WrapperCallSite { call: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum Resolution {
    Numbers { numbers: BTreeSet<u64> },
    Unresolved { reason: UnresolvedReason },
}

impl Resolution {
    pub fn numbers(&self) -> Option<&BTreeSet<u64>> {
        match self {
            Resolution::Numbers { numbers } => Some(numbers),
            Resolution::Unresolved { .. } => None,
        }
    }

    pub fn is_resolved(&self) -> bool {
        matches!(self, Resolution::Numbers { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyscallSite {
    pub address: u64,
    pub function: u64,
    pub in_wrapper: bool,
    pub resolved: Resolution,
    /// Constants found even when the site as a whole is unresolved.
    pub partial: BTreeSet<u64>,
    pub paths_explored: u64,
}

/// What a wrapper call site calls.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", content = "target", rename_all = "kebab-case")]
pub enum WrapperTarget {
    Local(u64),
    Import(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperCallSite {
    pub wrapper: WrapperTarget,
    pub call_block: u64,
    pub call_insn: u64,
    pub caller_function: u64,
    pub resolved: Resolution,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IdentifyOptions {
    pub exec: ExecConfig,
    /// How many levels of callers the backward search may climb.
    pub caller_depth: usize,
    pub wrapper_heuristic: bool,
    pub max_syscall_nr: u64,
    pub parallel: bool,
}

impl Default for IdentifyOptions {
    fn default() -> Self {
        IdentifyOptions {
            exec: ExecConfig::default(),
            caller_depth: 3,
            wrapper_heuristic: true,
            max_syscall_nr: DEFAULT_MAX_SYSCALL_NR,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum Completeness {
    Complete,
    Incomplete {
        unresolved_sites: Vec<u64>,
        poisoned_functions: Vec<u64>,
    },
}

impl Completeness {
    pub fn is_complete(&self) -> bool {
        matches!(self, Completeness::Complete)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProgramIdentification {
    pub sites: BTreeMap<u64, SyscallSite>,
    pub wrappers: Vec<WrapperInfo>,
    pub wrapper_call_sites: Vec<WrapperCallSite>,
    pub syscalls: BTreeSet<u64>,
    pub completeness: Completeness,
    /// `int $0x80` / `sysenter` in reachable code.
    pub legacy_sites: Vec<u64>,
    /// Sites where wrapper detection found several entry values.
    pub ambiguous_sites: Vec<u64>,
}

/// Blocks that can reach `target_block`, climbing at most `caller_depth`
/// levels of callers. Returns each block with the caller depth it was found at.
pub fn backward_closure(cfg: &Cfg, target_block: u64, caller_depth: usize) -> BTreeMap<u64, usize> {
    let mut depth: BTreeMap<u64, usize> = BTreeMap::new();
    let mut queue = VecDeque::from([(target_block, 0usize)]);
    while let Some((b, d)) = queue.pop_front() {
        match depth.get(&b) {
            Some(&old) if old <= d => continue,
            _ => {
                depth.insert(b, d);
            }
        }
        for &(p, kind) in cfg.preds(b) {
            let nd = if crosses_function(cfg, p, b, kind) { d + 1 } else { d };
            if nd <= caller_depth && depth.get(&p).is_none_or(|&old| old > nd) {
                queue.push_back((p, nd));
            }
        }
    }
    depth
}

fn crosses_function(cfg: &Cfg, src: u64, dst: u64, kind: EdgeKind) -> bool {
    match kind {
        EdgeKind::Call | EdgeKind::IndirectResolved => true,
        EdgeKind::Jump => cfg.function_of(src) != cfg.function_of(dst),
        _ => false,
    }
}

struct SearchResult {
    resolution: Resolution,
    partial: BTreeSet<u64>,
    paths: u64,
}

/// Backward BFS from the block of `target`, running directed execution from
/// each frontier block.
fn search(cfg: &Cfg, target: u64, query: Location, opts: &IdentifyOptions) -> SearchResult {
    let Some(tblock) = cfg.block_containing(target).map(|b| b.start) else {
        return SearchResult {
            resolution: Resolution::Unresolved { reason: UnresolvedReason::StillSymbolic { root: target, symbol: Sym::Opaque } },
            partial: BTreeSet::new(),
            paths: 0,
        };
    };
    let closure = backward_closure(cfg, tblock, opts.caller_depth);
    let allowed: BTreeSet<u64> = closure.keys().copied().collect();
    let entry_nodes: BTreeSet<u64> = cfg.entry_nodes.iter().copied().collect();

    let mut numbers = BTreeSet::new();
    let mut paths = 0;
    let mut visited = BTreeSet::new();
    let mut queue = VecDeque::from([(tblock, 0usize)]);
    let fail = |reason, numbers: BTreeSet<u64>, paths| SearchResult {
        resolution: Resolution::Unresolved { reason },
        partial: numbers,
        paths,
    };
    while let Some((p, depth)) = queue.pop_front() {
        if !visited.insert(p) {
            continue;
        }
        let r = run_directed(cfg, p, target, &allowed, query, &opts.exec);
        paths += r.paths_explored;
        match r.outcome {
            DirectedOutcome::Resolved(s) => numbers.extend(s),
            DirectedOutcome::BudgetExhausted(budget) => {
                return fail(UnresolvedReason::BudgetExhausted { budget }, numbers, paths)
            }
            DirectedOutcome::StillSymbolic(symbol) => {
                let preds = cfg.preds(p);
                if preds.is_empty() || entry_nodes.contains(&p) {
                    return fail(UnresolvedReason::StillSymbolic { root: p, symbol }, numbers, paths);
                }
                for &(q, kind) in preds {
                    let nd = if crosses_function(cfg, q, p, kind) { depth + 1 } else { depth };
                    if nd > opts.caller_depth {
                        return fail(UnresolvedReason::DepthBound { at: q }, numbers, paths);
                    }
                    if !visited.contains(&q) {
                        queue.push_back((q, nd));
                    }
                }
            }
        }
    }
    SearchResult {
        resolution: Resolution::Numbers { numbers: numbers.clone() },
        partial: numbers,
        paths,
    }
}

fn check_range(res: SearchResult, max_nr: u64) -> SearchResult {
    match res.resolution {
        Resolution::Numbers { numbers } => {
            let (ok, bad): (BTreeSet<u64>, BTreeSet<u64>) = numbers.into_iter().partition(|&n| n <= max_nr);
            if !bad.is_empty() {
                log::warn!("dropping out-of-range syscall numbers {bad:?}");
            }
            if ok.is_empty() && !bad.is_empty() {
                SearchResult {
                    resolution: Resolution::Unresolved {
                        reason: UnresolvedReason::OutOfRange { values: bad.into_iter().collect() },
                    },
                    partial: BTreeSet::new(),
                    paths: res.paths,
                }
            } else {
                SearchResult { resolution: Resolution::Numbers { numbers: ok.clone() }, partial: ok, paths: res.paths }
            }
        }
        r => SearchResult { resolution: r, ..res },
    }
}

/// Phase 1: is rax at `site` fully determined by in-function constants?
/// Memory loads, pops, calls and partial writes count as undetermined.
fn rax_determined_locally(cfg: &Cfg, func: &FuncInfo, site: u64) -> bool {
    let Some(block) = cfg.block_containing(site) else { return false };
    // (block, op index to scan below, wanted register)
    let mut work: Vec<(u64, usize, Gpr)> = Vec::new();
    let idx = block.ops.iter().position(|o| o.addr == site).unwrap_or(block.ops.len());
    work.push((block.start, idx, Gpr::Rax));
    let mut seen: BTreeSet<(u64, Gpr)> = BTreeSet::new();
    while let Some((b, mut i, mut want)) = work.pop() {
        let ops = &cfg.blocks[&b].ops;
        let mut defined = false;
        while i > 0 {
            i -= 1;
            match ops[i].kind {
                MicroOpKind::WriteRegConst { dst, .. } if dst.gpr == want => {
                    if matches!(dst.width, Width::W32 | Width::W64) {
                        defined = true;
                        break;
                    }
                    return false;
                }
                MicroOpKind::CopyRegReg { dst, src } if dst.gpr == want => {
                    if !matches!(dst.width, Width::W32 | Width::W64) {
                        return false;
                    }
                    want = src.gpr;
                }
                MicroOpKind::LoadEffectiveAddress { dst, src: crate::lifter::EaSource::Absolute(_) }
                    if dst.gpr == want =>
                {
                    defined = true;
                    break;
                }
                MicroOpKind::ArithImm { dst, .. } if dst.gpr == want => {}
                MicroOpKind::LoadEffectiveAddress { dst, .. }
                | MicroOpKind::LoadStack { dst, .. }
                | MicroOpKind::LoadUnknown { dst }
                    if dst.gpr == want =>
                {
                    return false
                }
                MicroOpKind::HavocReg { reg } if reg == want => return false,
                MicroOpKind::Pop { dst: Some(d) } if d.gpr == want => return false,
                MicroOpKind::Syscall if matches!(want, Gpr::Rax | Gpr::Rcx | Gpr::R11) => return false,
                _ => {}
            }
        }
        if defined {
            continue;
        }
        if b == func.entry {
            return false;
        }
        let preds: Vec<(u64, EdgeKind)> = cfg
            .preds(b)
            .iter()
            .copied()
            .filter(|(p, _)| func.blocks.contains(p))
            .collect();
        if preds.is_empty() {
            return false;
        }
        for (p, kind) in preds {
            if kind == EdgeKind::ReturnTo && want.is_caller_saved() {
                return false;
            }
            if seen.insert((p, want)) {
                let n = cfg.blocks[&p].ops.len();
                // A call block's own ops run before the call; for a return-to
                // edge the call's clobber was handled above.
                work.push((p, n, want));
            }
        }
    }
    true
}

/// Blocks of `func` that can reach `block` through intra-function edges.
fn function_closure(cfg: &Cfg, func: &FuncInfo, block: u64) -> BTreeSet<u64> {
    let mut out = BTreeSet::new();
    let mut stack = vec![block];
    while let Some(b) = stack.pop() {
        if !out.insert(b) {
            continue;
        }
        for &(p, kind) in cfg.preds(b) {
            if kind.is_intra() && func.blocks.contains(&p) && !out.contains(&p) {
                stack.push(p);
            }
        }
    }
    out
}

/// Two-phase wrapper detection for one site.
pub fn detect_wrapper(
    cfg: &Cfg,
    func: &FuncInfo,
    site: u64,
    conf: &ExecConfig,
) -> Result<WrapperDetection, SyscallIdError> {
    if rax_determined_locally(cfg, func, site) {
        return Ok(WrapperDetection::NotWrapper { confirmed_by: Confirmation::UdchainOnlyNegative });
    }
    let Some(block) = cfg.block_containing(site) else {
        return Ok(WrapperDetection::NotWrapper { confirmed_by: Confirmation::SymbolicConfirmed });
    };
    let allowed = function_closure(cfg, func, block.start);
    if !allowed.contains(&func.entry) {
        return Ok(WrapperDetection::NotWrapper { confirmed_by: Confirmation::SymbolicConfirmed });
    }
    let r = run_directed(cfg, func.entry, site, &allowed, Location::Register(Gpr::Rax), conf);
    let param = match r.outcome {
        DirectedOutcome::StillSymbolic(Sym::EntryReg(g)) if g != Gpr::Rsp => ParamLocation::Register(g),
        DirectedOutcome::StillSymbolic(Sym::EntrySlot(o)) if o > 0 => ParamLocation::StackSlot(o),
        DirectedOutcome::StillSymbolic(Sym::Mixed) => return Err(SyscallIdError::AmbiguousParam { site }),
        DirectedOutcome::StillSymbolic(Sym::EntryReg(_) | Sym::EntrySlot(_)) => {
            return Err(SyscallIdError::AmbiguousParam { site })
        }
        _ => return Ok(WrapperDetection::NotWrapper { confirmed_by: Confirmation::SymbolicConfirmed }),
    };
    Ok(WrapperDetection::Wrapper(WrapperInfo {
        function: func.entry,
        site,
        param_location: param,
        confirmed_by: Confirmation::SymbolicConfirmed,
    }))
}

/// Resolves a non-wrapper site: target is the syscall, query is rax.
pub fn identify_site(cfg: &Cfg, site: u64, opts: &IdentifyOptions) -> SyscallSite {
    let block = cfg.block_containing(site).map(|b| b.start).unwrap_or(site);
    let res = check_range(search(cfg, site, Location::Register(Gpr::Rax), opts), opts.max_syscall_nr);
    SyscallSite {
        address: site,
        function: cfg.function_of(block).unwrap_or(block),
        in_wrapper: false,
        resolved: res.resolution,
        partial: res.partial,
        paths_explored: res.paths,
    }
}

/// Transfers into the function entered at `entry`: (block, insn, tail).
fn call_sites_of(cfg: &Cfg, entry: u64, reachable_only: bool) -> Vec<(u64, u64, bool)> {
    cfg.callers_of(entry)
        .into_iter()
        .filter(|(b, _)| !reachable_only || cfg.is_reachable(*b))
        .filter_map(|(b, kind)| {
            let blk = &cfg.blocks[&b];
            let insn = *blk.insns.last()?;
            let tail = kind == EdgeKind::Jump || matches!(blk.terminator, Terminator::JumpIndirect);
            Some((b, insn, tail))
        })
        .collect()
}

/// Resolves the parameter value at one transfer into a wrapper.
pub fn identify_wrapper_call(
    cfg: &Cfg,
    wrapper: WrapperTarget,
    call_block: u64,
    call_insn: u64,
    tail: bool,
    param: ParamLocation,
    opts: &IdentifyOptions,
) -> WrapperCallSite {
    let res = check_range(search(cfg, call_insn, param.at_transfer(tail), opts), opts.max_syscall_nr);
    WrapperCallSite {
        wrapper,
        call_block,
        call_insn,
        caller_function: cfg.function_of(call_block).unwrap_or(call_block),
        resolved: res.resolution,
    }
}

fn par_map<T: Sync, R: Send>(items: &[T], parallel: bool, f: impl Fn(&T) -> R + Sync + Send) -> Vec<R> {
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return items.par_iter().map(f).collect();
    }
    let _ = parallel;
    items.iter().map(f).collect()
}

/// Identifies every reachable site. `external_wrappers` maps imported
/// symbols known (from dependency interfaces) to be wrappers to their
/// parameter location; reachable calls to them are resolved here.
pub fn identify_program(
    img: &BinaryImage,
    cfg: &Cfg,
    opts: &IdentifyOptions,
    external_wrappers: &BTreeMap<String, ParamLocation>,
) -> ProgramIdentification {
    let sites = crate::cfg::reachable_syscall_sites(cfg);
    let entry_nodes: BTreeSet<u64> = cfg.entry_nodes.iter().copied().collect();

    // Wrapper detection, one verdict per site.
    let detections: Vec<(u64, Option<Result<WrapperDetection, SyscallIdError>>)> = par_map(&sites, opts.parallel, |&site| {
        if !opts.wrapper_heuristic {
            return (site, None);
        }
        let func = cfg
            .block_containing(site)
            .and_then(|b| cfg.function_of(b.start))
            .and_then(|f| cfg.function(f));
        let Some(func) = func else { return (site, None) };
        let d = detect_wrapper(cfg, func, site, &opts.exec);
        // A wrapper must have callers we can see: program roots are not
        // wrappers, except exported functions of a shared object.
        let d = match d {
            Ok(WrapperDetection::Wrapper(w)) if entry_nodes.contains(&w.function) => {
                let exported = img.kind == BinaryKind::SharedObject && img.exported.values().any(|&a| a == w.function);
                if exported {
                    Ok(WrapperDetection::Wrapper(w))
                } else {
                    Ok(WrapperDetection::NotWrapper { confirmed_by: Confirmation::SymbolicConfirmed })
                }
            }
            other => other,
        };
        (site, Some(d))
    });

    let mut wrappers = Vec::new();
    let mut ambiguous = Vec::new();
    let mut normal_sites = Vec::new();
    for (site, d) in &detections {
        match d {
            Some(Ok(WrapperDetection::Wrapper(w))) => wrappers.push(w.clone()),
            Some(Err(SyscallIdError::AmbiguousParam { .. })) => ambiguous.push(*site),
            _ => normal_sites.push(*site),
        }
    }

    let mut results: BTreeMap<u64, SyscallSite> = par_map(&normal_sites, opts.parallel, |&s| identify_site(cfg, s, opts))
        .into_iter()
        .map(|s| (s.address, s))
        .collect();
    for &site in &ambiguous {
        let block = cfg.block_containing(site).map(|b| b.start).unwrap_or(site);
        results.insert(
            site,
            SyscallSite {
                address: site,
                function: cfg.function_of(block).unwrap_or(block),
                in_wrapper: false,
                resolved: Resolution::Unresolved { reason: UnresolvedReason::AmbiguousParam },
                partial: BTreeSet::new(),
                paths_explored: 0,
            },
        );
    }

    // Wrapper call sites: local wrappers (deduplicated per function and
    // parameter) and imported wrappers.
    let mut jobs: Vec<(WrapperTarget, u64, u64, bool, ParamLocation)> = Vec::new();
    let mut seen_wrappers: BTreeSet<(u64, ParamLocation)> = BTreeSet::new();
    for w in &wrappers {
        if !seen_wrappers.insert((w.function, w.param_location)) {
            continue;
        }
        for (b, insn, tail) in call_sites_of(cfg, w.function, true) {
            jobs.push((WrapperTarget::Local(w.function), b, insn, tail, w.param_location));
        }
    }
    for call in &cfg.import_calls {
        if let Some(&param) = external_wrappers.get(&call.symbol) {
            if cfg.is_reachable(call.block) {
                jobs.push((WrapperTarget::Import(call.symbol.clone()), call.block, call.insn, call.tail, param));
            }
        }
    }
    let wrapper_call_sites: Vec<WrapperCallSite> = par_map(&jobs, opts.parallel, |(t, b, insn, tail, param)| {
        identify_wrapper_call(cfg, t.clone(), *b, *insn, *tail, *param, opts)
    });

    for w in &wrappers {
        let calls: Vec<&WrapperCallSite> = wrapper_call_sites
            .iter()
            .filter(|c| c.wrapper == WrapperTarget::Local(w.function))
            .collect();
        let mut numbers = BTreeSet::new();
        let mut unresolved = None;
        for c in &calls {
            match &c.resolved {
                Resolution::Numbers { numbers: n } => numbers.extend(n.iter().copied()),
                Resolution::Unresolved { .. } => {
                    unresolved.get_or_insert(c.call_insn);
                }
            }
        }
        let resolved = match unresolved {
            Some(call) => Resolution::Unresolved { reason: UnresolvedReason::WrapperCallSite { call } },
            None => Resolution::Numbers { numbers: numbers.clone() },
        };
        results.insert(
            w.site,
            SyscallSite {
                address: w.site,
                function: w.function,
                in_wrapper: true,
                resolved,
                partial: numbers,
                paths_explored: 0,
            },
        );
    }

    let mut syscalls = BTreeSet::new();
    let mut unresolved_sites = Vec::new();
    for s in results.values() {
        match &s.resolved {
            Resolution::Numbers { numbers } => syscalls.extend(numbers.iter().copied()),
            Resolution::Unresolved { .. } => {
                syscalls.extend(s.partial.iter().copied());
                unresolved_sites.push(s.address);
            }
        }
    }
    for c in &wrapper_call_sites {
        if let (WrapperTarget::Import(_), Resolution::Numbers { numbers }) = (&c.wrapper, &c.resolved) {
            syscalls.extend(numbers.iter().copied());
        }
    }
    let import_unresolved: Vec<u64> = wrapper_call_sites
        .iter()
        .filter(|c| matches!(c.wrapper, WrapperTarget::Import(_)) && !c.resolved.is_resolved())
        .map(|c| c.call_insn)
        .collect();
    unresolved_sites.extend(import_unresolved);
    unresolved_sites.sort_unstable();
    let poisoned = cfg.reachable_poisoned_functions();
    let completeness = if unresolved_sites.is_empty() && poisoned.is_empty() {
        Completeness::Complete
    } else {
        Completeness::Incomplete { unresolved_sites, poisoned_functions: poisoned }
    };
    wrappers.sort_by_key(|w| (w.function, w.site));
    ProgramIdentification {
        sites: results,
        wrappers,
        wrapper_call_sites,
        syscalls,
        completeness,
        legacy_sites: cfg.legacy_syscalls(),
        ambiguous_sites: ambiguous,
    }
}

/// Records wrapper flags on the CFG's functions.
pub fn mark_wrappers(cfg: &mut Cfg, ident: &ProgramIdentification) {
    for w in &ident.wrappers {
        if let Some(f) = cfg.function_mut(w.function) {
            f.is_wrapper = true;
        }
    }
}
