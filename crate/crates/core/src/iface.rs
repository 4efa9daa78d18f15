//! Shared-library interfaces and link-time resolution.
//!
//! A library is analyzed once with every export as an entry; the result is
//! a function-level graph with per-function syscalls, saved as JSON. At
//! link time the executable's reachable imports select which exports (and
//! hence which functions) are live in each library.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap, VecDeque};
use std::cmp::Reverse;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use crate::cfg::{build_cfg, Cfg, EdgeKind};
use crate::graph::tarjan_scc;
use crate::loader::{load_binary, BinaryImage, BinaryKind, LoadError};
use crate::syscall_id::{identify_program, IdentifyOptions, ParamLocation, ProgramIdentification, Resolution, WrapperTarget};

pub const SCHEMA_VERSION: u32 = 1;

/// Key used in `external_refs` when the providing library is not known at
/// analysis time; such references are resolved through the global scope.
pub const UNKNOWN_PROVIDER: &str = "*";

/// Syscalls the dynamic loader itself makes before `main` (mapping,
/// protecting and reading libraries, TLS and robust-list setup).
pub const DEFAULT_LOADER_BASELINE: [u64; 18] =
    [0, 3, 5, 9, 10, 11, 12, 17, 21, 158, 218, 231, 257, 262, 273, 302, 318, 334];

#[derive(Debug, thiserror::Error)]
pub enum IfaceError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error("{path} is not a shared object")]
    NotSharedObject { path: String },
    #[error("missing interfaces for: {}", .0.join(", "))]
    MissingInterface(Vec<String>),
    #[error("interface schema version {found}, expected {expected}")]
    SchemaMismatch { found: u32, expected: u32 },
    #[error("malformed interface: {0}")]
    Json(#[from] serde_json::Error),
    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// An address serialized as a decimal string.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Addr(pub u64);

impl Serialize for Addr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(&self.0)
    }
}

impl<'de> Deserialize<'de> for Addr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map(Addr).map_err(serde::de::Error::custom)
    }
}

impl fmt::Display for Addr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#x}", self.0)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FuncNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Syscalls made by the function's own sites and wrapper calls.
    pub syscalls: BTreeSet<u64>,
    /// Syscalls including callees within the library, all exports live.
    pub reachable_syscalls: BTreeSet<u64>,
    pub callees: BTreeSet<Addr>,
    pub callers: BTreeSet<Addr>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WrapperExport {
    pub function: Addr,
    pub symbols: Vec<String>,
    pub param: ParamLocation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SharedInterface {
    pub schema_version: u32,
    /// Content hash of the library file.
    pub interface_id: Addr,
    pub library: String,
    pub needed: Vec<String>,
    /// Digest of the analysis options the interface was computed with.
    pub options_digest: String,
    pub func_graph: BTreeMap<Addr, FuncNode>,
    pub symbols: BTreeMap<String, Addr>,
    pub symbol_versions: BTreeMap<String, String>,
    /// Function → functions whose address it materializes.
    pub at_triggers: BTreeMap<Addr, BTreeSet<Addr>>,
    /// Functions containing an indirect call or jump.
    pub indirect_callers: BTreeSet<Addr>,
    /// Functions with at least one unresolved syscall site.
    pub unresolved_sites: BTreeSet<Addr>,
    pub wrappers: Vec<WrapperExport>,
    pub init_functions: BTreeSet<Addr>,
    /// Function → providing library → imported symbols it calls.
    pub external_refs: BTreeMap<Addr, BTreeMap<String, BTreeSet<String>>>,
    /// Providing library → imported symbols referenced by address (GLOB_DAT).
    pub global_refs: BTreeMap<String, BTreeSet<String>>,
    pub plt_relocs: BTreeMap<String, Addr>,
}

impl SharedInterface {
    /// Canonical JSON: pretty-printed, sorted, newline-terminated.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("interface serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<SharedInterface, IfaceError> {
        let v: serde_json::Value = serde_json::from_str(text)?;
        let found = v.get("schema_version").and_then(|x| x.as_u64()).unwrap_or(0) as u32;
        if found != SCHEMA_VERSION {
            return Err(IfaceError::SchemaMismatch { found, expected: SCHEMA_VERSION });
        }
        Ok(serde_json::from_value(v)?)
    }

    pub fn file_name(library: &str) -> String {
        format!("{library}.iface.json")
    }

    /// Reads `<dir>/<library>.iface.json` if present.
    pub fn load_cached(dir: &Path, library: &str) -> Result<Option<SharedInterface>, IfaceError> {
        let path = dir.join(Self::file_name(library));
        match std::fs::read_to_string(&path) {
            Ok(t) => Self::from_json(&t).map(Some),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(IfaceError::Io { path: path.display().to_string(), source }),
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), IfaceError> {
        let path = dir.join(Self::file_name(&self.library));
        std::fs::write(&path, self.to_json()).map_err(|source| IfaceError::Io { path: path.display().to_string(), source })
    }

    fn wrapper_params(&self) -> BTreeMap<&str, ParamLocation> {
        self.wrappers
            .iter()
            .flat_map(|w| w.symbols.iter().map(move |s| (s.as_str(), w.param)))
            .collect()
    }
}

/// Digest of the options that influence an interface's content.
pub fn options_digest(opts: &IdentifyOptions) -> String {
    let mut o = *opts;
    o.parallel = false;
    let json = serde_json::to_string(&o).expect("options serialize");
    let h = Sha256::digest(json.as_bytes());
    h[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Wrapper parameters of imported symbols, looked up in `scope` order.
pub fn external_wrappers<'a>(
    imports: impl IntoIterator<Item = &'a String>,
    scope: &[&SharedInterface],
) -> BTreeMap<String, ParamLocation> {
    let mut out = BTreeMap::new();
    for sym in imports {
        for iface in scope {
            if iface.symbols.contains_key(sym) {
                if let Some(&p) = iface.wrapper_params().get(sym.as_str()) {
                    out.insert(sym.clone(), p);
                }
                break;
            }
        }
    }
    out
}

/// Analyzes a shared object with every export as an entry. `deps` are
/// interfaces of already analyzed dependencies, used to attribute external
/// references and to resolve calls to wrappers they export.
pub fn analyze_library(
    path: &str,
    opts: &IdentifyOptions,
    deps: &BTreeMap<String, SharedInterface>,
) -> Result<SharedInterface, IfaceError> {
    let img = load_binary(path)?;
    if img.kind != BinaryKind::SharedObject {
        return Err(IfaceError::NotSharedObject { path: path.to_string() });
    }
    let cfg = build_cfg(&img);
    let scope = lookup_scope(&img.dyn_deps, deps);
    let scope_refs: Vec<&SharedInterface> = scope.iter().filter_map(|n| deps.get(n)).collect();
    let ext = external_wrappers(&img.imports, &scope_refs);
    let ident = identify_program(&img, &cfg, opts, &ext);
    Ok(build_interface(&img, &cfg, &ident, &scope_refs, opts))
}

/// Breadth-first NEEDED order starting from `roots`, as the dynamic loader
/// searches symbols. Names without an interface are still listed.
pub fn lookup_scope(roots: &[String], ifaces: &BTreeMap<String, SharedInterface>) -> Vec<String> {
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    let mut queue: VecDeque<String> = roots.iter().cloned().collect();
    while let Some(n) = queue.pop_front() {
        if !seen.insert(n.clone()) {
            continue;
        }
        if let Some(i) = ifaces.get(&n) {
            queue.extend(i.needed.iter().cloned());
        }
        out.push(n);
    }
    out
}

fn add_numbers(node: &mut FuncNode, unresolved: &mut BTreeSet<Addr>, func: u64, res: &Resolution, partial: &BTreeSet<u64>) {
    match res {
        Resolution::Numbers { numbers } => node.syscalls.extend(numbers.iter().copied()),
        Resolution::Unresolved { .. } => {
            node.syscalls.extend(partial.iter().copied());
            unresolved.insert(Addr(func));
        }
    }
}

/// Builds the interface from an analyzed library.
pub fn build_interface(
    img: &BinaryImage,
    cfg: &Cfg,
    ident: &ProgramIdentification,
    scope: &[&SharedInterface],
    opts: &IdentifyOptions,
) -> SharedInterface {
    let reach = cfg.reachable_blocks();
    let mut funcs: BTreeSet<u64> = cfg
        .functions
        .iter()
        .filter(|f| f.blocks.iter().any(|b| reach.contains(b)))
        .map(|f| f.entry)
        .collect();

    let owner = |a: u64| cfg.function_of(a);
    let mut at_triggers: BTreeMap<Addr, BTreeSet<Addr>> = BTreeMap::new();
    let mut indirect_callers = BTreeSet::new();
    let mut callees: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for &f in &funcs {
        let info = cfg.function(f).expect("function exists");
        for &b in &info.blocks {
            for &a in &cfg.blocks[&b].addresses_taken_here {
                if let Some(o) = cfg.blocks.contains_key(&a).then(|| owner(a)).flatten() {
                    at_triggers.entry(Addr(f)).or_default().insert(Addr(o));
                }
            }
            if cfg.unresolved_indirects.contains(&b) {
                indirect_callers.insert(Addr(f));
            }
            for &(dst, kind) in cfg.succs(b) {
                let cross = match kind {
                    EdgeKind::Call => true,
                    EdgeKind::Jump => owner(dst) != Some(f),
                    _ => false,
                };
                if cross {
                    if let Some(o) = owner(dst) {
                        callees.entry(f).or_default().insert(o);
                    }
                }
            }
        }
    }
    // Address-taken targets stay in the graph even if nothing calls them yet.
    funcs.extend(at_triggers.values().flatten().map(|a| a.0));
    // IFUNC exports: the resolver "calls" every implementation it selects.
    for s in img.ifunc_exports() {
        if let Some(t) = at_triggers.get(&Addr(s.address)) {
            callees.entry(s.address).or_default().extend(t.iter().map(|a| a.0));
        }
    }

    let mut nodes: BTreeMap<Addr, FuncNode> = funcs
        .iter()
        .map(|&f| {
            let node = FuncNode {
                name: cfg.function(f).and_then(|i| i.name.clone()),
                callees: callees.get(&f).map(|c| c.iter().map(|&a| Addr(a)).collect()).unwrap_or_default(),
                ..FuncNode::default()
            };
            (Addr(f), node)
        })
        .collect();
    let mut unresolved = BTreeSet::new();
    for site in ident.sites.values() {
        if site.in_wrapper {
            // Numbers are attributed to the calling functions below.
            if !site.resolved.is_resolved() {
                unresolved.insert(Addr(site.function));
            }
            continue;
        }
        let node = nodes.entry(Addr(site.function)).or_default();
        add_numbers(node, &mut unresolved, site.function, &site.resolved, &site.partial);
    }
    for c in &ident.wrapper_call_sites {
        let node = nodes.entry(Addr(c.caller_function)).or_default();
        add_numbers(node, &mut unresolved, c.caller_function, &c.resolved, &BTreeSet::new());
    }
    for f in cfg.reachable_poisoned_functions() {
        unresolved.insert(Addr(f));
    }
    let edges: Vec<(Addr, Addr)> = nodes
        .iter()
        .flat_map(|(&f, n)| n.callees.iter().map(move |&c| (f, c)))
        .collect();
    for (f, c) in edges {
        if let Some(n) = nodes.get_mut(&c) {
            n.callers.insert(f);
        }
    }

    // External references: imports called from each function.
    let mut external_refs: BTreeMap<Addr, BTreeMap<String, BTreeSet<String>>> = BTreeMap::new();
    let provider = |sym: &str| {
        scope
            .iter()
            .find(|i| i.symbols.contains_key(sym))
            .map(|i| i.library.clone())
            .unwrap_or_else(|| UNKNOWN_PROVIDER.to_string())
    };
    let referenced: Vec<(u64, String)> = cfg
        .import_calls
        .iter()
        .filter(|c| reach.contains(&c.block))
        .filter_map(|c| owner(c.block).map(|f| (f, c.symbol.clone())))
        .collect();
    for (f, sym) in referenced {
        external_refs
            .entry(Addr(f))
            .or_default()
            .entry(provider(&sym))
            .or_default()
            .insert(sym);
    }

    // Imports whose address is taken are live whenever the library is loaded.
    let mut global_refs: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    for sym in &img.data_imports {
        global_refs.entry(provider(sym)).or_default().insert(sym.clone());
    }

    let wrapper_funcs: BTreeMap<u64, ParamLocation> =
        ident.wrappers.iter().map(|w| (w.function, w.param_location)).collect();
    let wrappers = wrapper_funcs
        .iter()
        .map(|(&f, &param)| WrapperExport {
            function: Addr(f),
            symbols: img.exported.iter().filter(|(_, &a)| a == f).map(|(n, _)| n.clone()).collect(),
            param,
        })
        .collect();

    let symbols: BTreeMap<String, Addr> = img.exported.iter().map(|(n, &a)| (n.clone(), Addr(a))).collect();
    let symbol_versions = img
        .symbols
        .iter()
        .filter(|s| s.is_exported)
        .filter_map(|s| s.version.clone().map(|v| (s.name.clone(), v)))
        .collect();

    let mut iface = SharedInterface {
        schema_version: SCHEMA_VERSION,
        interface_id: Addr(img.content_hash),
        library: img.lib_name(),
        needed: img.dyn_deps.clone(),
        options_digest: options_digest(opts),
        func_graph: nodes,
        symbols,
        symbol_versions,
        at_triggers,
        indirect_callers,
        unresolved_sites: unresolved,
        wrappers,
        init_functions: img.init_functions.iter().filter(|a| cfg.blocks.contains_key(a)).map(|&a| Addr(a)).collect(),
        external_refs,
        global_refs,
        plt_relocs: img.plt_map.iter().map(|(n, &a)| (n.clone(), Addr(a))).collect(),
    };
    // Library-local closure with every export live, for inspection.
    let all: BTreeSet<Addr> = iface.func_graph.keys().copied().collect();
    let reached = function_closure(&iface, &all);
    let sets = transitive_syscalls(&iface, &reached, &|_| BTreeSet::new());
    for (f, node) in iface.func_graph.iter_mut() {
        node.reachable_syscalls = sets.get(f).cloned().unwrap_or_default();
    }
    iface
}

/// Active addresses taken by `reached` functions.
fn active_ats(iface: &SharedInterface, reached: &BTreeSet<Addr>) -> BTreeSet<Addr> {
    reached
        .iter()
        .filter_map(|f| iface.at_triggers.get(f))
        .flatten()
        .copied()
        .collect()
}

/// Function-level reachability with the address-taken fixpoint: indirect
/// callers reach every address taken by a reached function.
pub fn function_closure(iface: &SharedInterface, seeds: &BTreeSet<Addr>) -> BTreeSet<Addr> {
    let mut reached: BTreeSet<Addr> = BTreeSet::new();
    let mut work: Vec<Addr> = seeds.iter().copied().collect();
    let mut has_indirect = false;
    let mut ats: BTreeSet<Addr> = BTreeSet::new();
    loop {
        while let Some(f) = work.pop() {
            if !iface.func_graph.contains_key(&f) || !reached.insert(f) {
                continue;
            }
            if iface.indirect_callers.contains(&f) {
                has_indirect = true;
            }
            if let Some(t) = iface.at_triggers.get(&f) {
                ats.extend(t.iter().copied());
            }
            work.extend(iface.func_graph[&f].callees.iter().copied());
        }
        if !has_indirect {
            break;
        }
        let pending: Vec<Addr> = ats.iter().copied().filter(|a| !reached.contains(a)).collect();
        if pending.is_empty() {
            break;
        }
        work.extend(pending);
    }
    reached
}

/// Per-function syscall sets over `reached`, including callees, active
/// address-taken targets for indirect callers, and `external` (syscalls of
/// each function's references into other libraries).
pub fn transitive_syscalls(
    iface: &SharedInterface,
    reached: &BTreeSet<Addr>,
    external: &dyn Fn(Addr) -> BTreeSet<u64>,
) -> BTreeMap<Addr, BTreeSet<u64>> {
    let ats = active_ats(iface, reached);
    let mut sets: BTreeMap<Addr, BTreeSet<u64>> = reached
        .iter()
        .map(|&f| {
            let mut s = iface.func_graph[&f].syscalls.clone();
            s.extend(external(f));
            (f, s)
        })
        .collect();
    loop {
        let mut changed = false;
        for &f in reached {
            let node = &iface.func_graph[&f];
            let mut add: BTreeSet<u64> = node
                .callees
                .iter()
                .filter_map(|c| sets.get(c))
                .flatten()
                .copied()
                .collect();
            if iface.indirect_callers.contains(&f) {
                add.extend(ats.iter().filter_map(|a| sets.get(a)).flatten().copied());
            }
            let s = sets.get_mut(&f).expect("reached function has a set");
            let before = s.len();
            s.extend(add);
            changed |= s.len() != before;
        }
        if !changed {
            break;
        }
    }
    sets
}

/// Libraries ordered dependencies-first, with NEEDED cycles merged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepDag {
    pub root: String,
    pub nodes: BTreeSet<String>,
    /// (dependent, dependency) pairs.
    pub edges: BTreeSet<(String, String)>,
    /// Analysis units in dependencies-first order; a unit with several
    /// members is a merged cycle.
    pub units: Vec<Vec<String>>,
}

impl DepDag {
    /// Builds the DAG of everything `roots` need, transitively. The root
    /// executable itself is not a unit.
    pub fn build(root: &str, roots: &[String], ifaces: &BTreeMap<String, SharedInterface>) -> Result<DepDag, IfaceError> {
        let mut nodes = BTreeSet::new();
        let mut edges = BTreeSet::new();
        let mut missing = BTreeSet::new();
        let mut queue: VecDeque<String> = roots.iter().cloned().collect();
        for r in roots {
            edges.insert((root.to_string(), r.clone()));
        }
        while let Some(n) = queue.pop_front() {
            if !nodes.insert(n.clone()) {
                continue;
            }
            match ifaces.get(&n) {
                Some(i) => {
                    for d in &i.needed {
                        edges.insert((n.clone(), d.clone()));
                        queue.push_back(d.clone());
                    }
                }
                None => {
                    missing.insert(n);
                }
            }
        }
        if !missing.is_empty() {
            return Err(IfaceError::MissingInterface(missing.into_iter().collect()));
        }

        let names: Vec<String> = nodes.iter().cloned().collect();
        let idx: BTreeMap<&str, usize> = names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut succ = vec![Vec::new(); names.len()];
        for (a, b) in &edges {
            if let (Some(&i), Some(&j)) = (idx.get(a.as_str()), idx.get(b.as_str())) {
                succ[i].push(j);
            }
        }
        let sccs = tarjan_scc(names.len(), &succ);
        let mut comp_of = vec![0; names.len()];
        for (c, members) in sccs.iter().enumerate() {
            for &m in members {
                comp_of[m] = c;
            }
        }
        // Kahn over the condensation, dependencies first, ties broken by name.
        let mut deps_left = vec![BTreeSet::new(); sccs.len()];
        let mut dependents = vec![BTreeSet::new(); sccs.len()];
        for (i, ss) in succ.iter().enumerate() {
            for &j in ss {
                let (ci, cj) = (comp_of[i], comp_of[j]);
                if ci != cj {
                    deps_left[ci].insert(cj);
                    dependents[cj].insert(ci);
                }
            }
        }
        let unit_name = |c: usize| names[sccs[c][0]].clone();
        let mut heap: BinaryHeap<Reverse<(String, usize)>> = (0..sccs.len())
            .filter(|&c| deps_left[c].is_empty())
            .map(|c| Reverse((unit_name(c), c)))
            .collect();
        let mut units = Vec::new();
        while let Some(Reverse((_, c))) = heap.pop() {
            units.push(sccs[c].iter().map(|&m| names[m].clone()).collect());
            for &d in &dependents[c] {
                deps_left[d].remove(&c);
                if deps_left[d].is_empty() {
                    heap.push(Reverse((unit_name(d), d)));
                }
            }
        }
        debug_assert_eq!(units.len(), sccs.len());
        Ok(DepDag { root: root.to_string(), nodes, edges, units })
    }

    pub fn order(&self) -> Vec<String> {
        self.units.iter().flatten().cloned().collect()
    }

    pub fn merged_cycles(&self) -> Vec<Vec<String>> {
        self.units.iter().filter(|u| u.len() > 1).cloned().collect()
    }
}

/// What linking needs to know about the analyzed executable.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExeSummary {
    pub name: String,
    pub needed: Vec<String>,
    /// Has an interpreter: the loader baseline applies.
    pub dynamic: bool,
    pub own_syscalls: BTreeSet<u64>,
    /// Imports called from reachable code.
    pub called_imports: BTreeSet<String>,
    /// Imports whose address is taken (GLOB_DAT).
    pub data_imports: BTreeSet<String>,
    pub weak_imports: BTreeSet<String>,
}

impl ExeSummary {
    pub fn new(img: &BinaryImage, cfg: &Cfg, ident: &ProgramIdentification) -> ExeSummary {
        ExeSummary {
            name: img.lib_name(),
            needed: img.dyn_deps.clone(),
            dynamic: img.interpreter.is_some(),
            own_syscalls: ident.syscalls.clone(),
            called_imports: cfg
                .import_calls
                .iter()
                .filter(|c| cfg.is_reachable(c.block))
                .map(|c| c.symbol.clone())
                .collect(),
            data_imports: img.data_imports.clone(),
            weak_imports: img.weak_imports.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkOptions {
    /// `None` disables the baseline.
    pub loader_baseline: Option<BTreeSet<u64>>,
    /// Libraries loaded at runtime: every export is live.
    pub dlopen_roots: Vec<String>,
}

impl Default for LinkOptions {
    fn default() -> Self {
        LinkOptions { loader_baseline: Some(DEFAULT_LOADER_BASELINE.into_iter().collect()), dlopen_roots: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LinkResult {
    pub syscalls: BTreeSet<u64>,
    /// Library → live export → syscalls.
    pub export_resolution: BTreeMap<String, BTreeMap<String, BTreeSet<u64>>>,
    /// Library → live functions.
    pub live_functions: BTreeMap<String, BTreeSet<Addr>>,
    /// Live functions with unresolved sites, per library.
    pub unresolved: BTreeMap<String, BTreeSet<Addr>>,
    /// Non-weak imports no library defines.
    pub undefined_symbols: BTreeSet<String>,
    pub baseline: BTreeSet<u64>,
    /// Syscalls contributed by each runtime-loaded module.
    pub dlopen_provenance: BTreeMap<String, BTreeSet<u64>>,
    pub merged_cycles: Vec<Vec<String>>,
    pub order: Vec<String>,
}

impl LinkResult {
    pub fn is_complete(&self) -> bool {
        self.unresolved.values().all(BTreeSet::is_empty)
    }
}

/// Resolves the executable's imports through its dependency interfaces.
pub fn link_and_resolve(
    exe: &ExeSummary,
    ifaces: &BTreeMap<String, SharedInterface>,
    opts: &LinkOptions,
) -> Result<LinkResult, IfaceError> {
    let mut roots = exe.needed.clone();
    roots.extend(opts.dlopen_roots.iter().cloned());
    let dag = DepDag::build(&exe.name, &roots, ifaces)?;
    let scope = lookup_scope(&roots, ifaces);
    let define = |sym: &str| -> Option<&str> {
        scope
            .iter()
            .find(|n| ifaces.get(*n).is_some_and(|i| i.symbols.contains_key(sym)))
            .map(String::as_str)
    };
    let provider_of = |declared: &str, sym: &str| -> Option<String> {
        if declared != UNKNOWN_PROVIDER && ifaces.get(declared).is_some_and(|i| i.symbols.contains_key(sym)) {
            Some(declared.to_string())
        } else {
            define(sym).map(str::to_string)
        }
    };

    // Dependents first: propagate live exports down the DAG.
    let mut requested: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut undefined = BTreeSet::new();
    for sym in exe.called_imports.iter().chain(&exe.data_imports) {
        match define(sym) {
            Some(lib) => {
                requested.entry(lib.to_string()).or_default().insert(sym.clone());
            }
            None if !exe.weak_imports.contains(sym) => {
                undefined.insert(sym.clone());
            }
            None => {}
        }
    }
    for m in &opts.dlopen_roots {
        requested.entry(m.clone()).or_default().extend(ifaces[m].symbols.keys().cloned());
    }
    let mut live: BTreeMap<String, BTreeSet<Addr>> = BTreeMap::new();
    for unit in dag.units.iter().rev() {
        loop {
            let mut changed = false;
            for lib in unit {
                let iface = &ifaces[lib];
                let mut seeds: BTreeSet<Addr> = iface.init_functions.clone();
                for sym in requested.get(lib).into_iter().flatten() {
                    if let Some(&a) = iface.symbols.get(sym) {
                        seeds.insert(a);
                    }
                }
                let reached = function_closure(iface, &seeds);
                let refs = reached
                    .iter()
                    .filter_map(|f| iface.external_refs.get(f))
                    .chain(std::iter::once(&iface.global_refs));
                for refs in refs {
                    for (declared, syms) in refs {
                        for sym in syms {
                            match provider_of(declared, sym) {
                                Some(p) => {
                                    changed |= requested.entry(p).or_default().insert(sym.clone());
                                }
                                None => {
                                    undefined.insert(sym.clone());
                                }
                            }
                        }
                    }
                }
                let slot = live.entry(lib.clone()).or_default();
                if *slot != reached {
                    *slot = reached;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    // Dependencies first: transitive syscall sets per live function.
    let mut sets: BTreeMap<String, BTreeMap<Addr, BTreeSet<u64>>> = BTreeMap::new();
    for unit in &dag.units {
        loop {
            let mut changed = false;
            for lib in unit {
                let iface = &ifaces[lib];
                let external = |f: Addr| -> BTreeSet<u64> {
                    let mut out = BTreeSet::new();
                    for (declared, syms) in iface.external_refs.get(&f).into_iter().flatten() {
                        for sym in syms {
                            let Some(p) = provider_of(declared, sym) else { continue };
                            let Some(&a) = ifaces[&p].symbols.get(sym) else { continue };
                            if let Some(s) = sets.get(&p).and_then(|m| m.get(&a)) {
                                out.extend(s.iter().copied());
                            }
                        }
                    }
                    out
                };
                let computed = transitive_syscalls(iface, &live[lib], &external);
                if sets.get(lib) != Some(&computed) {
                    sets.insert(lib.clone(), computed);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
    }

    let lookup = |lib: &str, sym: &str| -> BTreeSet<u64> {
        let Some(&a) = ifaces[lib].symbols.get(sym) else { return BTreeSet::new() };
        sets.get(lib).and_then(|m| m.get(&a)).cloned().unwrap_or_default()
    };
    let mut export_resolution: BTreeMap<String, BTreeMap<String, BTreeSet<u64>>> = BTreeMap::new();
    for (lib, syms) in &requested {
        for sym in syms {
            export_resolution.entry(lib.clone()).or_default().insert(sym.clone(), lookup(lib, sym));
        }
    }

    let mut syscalls = exe.own_syscalls.clone();
    for sym in exe.called_imports.iter().chain(&exe.data_imports) {
        if let Some(lib) = define(sym) {
            syscalls.extend(lookup(lib, sym));
        }
    }
    for lib in &dag.nodes {
        for f in &ifaces[lib].init_functions {
            if let Some(s) = sets.get(lib).and_then(|m| m.get(f)) {
                syscalls.extend(s.iter().copied());
            }
        }
        for (declared, syms) in &ifaces[lib].global_refs {
            for sym in syms {
                if let Some(p) = provider_of(declared, sym) {
                    syscalls.extend(lookup(&p, sym));
                }
            }
        }
    }
    let mut dlopen_provenance = BTreeMap::new();
    for m in &opts.dlopen_roots {
        let mut s: BTreeSet<u64> = ifaces[m].symbols.keys().flat_map(|sym| lookup(m, sym)).collect();
        for f in &ifaces[m].init_functions {
            if let Some(x) = sets.get(m).and_then(|mm| mm.get(f)) {
                s.extend(x.iter().copied());
            }
        }
        syscalls.extend(s.iter().copied());
        dlopen_provenance.insert(m.clone(), s);
    }
    let baseline = if exe.dynamic { opts.loader_baseline.clone().unwrap_or_default() } else { BTreeSet::new() };
    syscalls.extend(baseline.iter().copied());

    let unresolved = live
        .iter()
        .map(|(lib, fs)| (lib.clone(), fs.intersection(&ifaces[lib].unresolved_sites).copied().collect()))
        .filter(|(_, s): &(String, BTreeSet<Addr>)| !s.is_empty())
        .collect();

    Ok(LinkResult {
        syscalls,
        export_resolution,
        live_functions: live,
        unresolved,
        undefined_symbols: undefined,
        baseline,
        dlopen_provenance,
        merged_cycles: dag.merged_cycles(),
        order: dag.order(),
    })
}

/// Numbers attributed to imported wrappers by the executable-side search,
/// for reporting.
pub fn import_wrapper_numbers(ident: &ProgramIdentification) -> BTreeMap<String, BTreeSet<u64>> {
    let mut out: BTreeMap<String, BTreeSet<u64>> = BTreeMap::new();
    for c in &ident.wrapper_call_sites {
        if let (WrapperTarget::Import(sym), Some(n)) = (&c.wrapper, c.resolved.numbers()) {
            out.entry(sym.clone()).or_default().extend(n.iter().copied());
        }
    }
    out
}
