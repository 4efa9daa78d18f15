//! End-to-end program analysis: executable, dependency interfaces (cached
//! on disk when an interface directory is given), linking, and runtime
//! loaded modules.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cfg::{build_cfg, Cfg};
use crate::iface::{
    analyze_library, external_wrappers, link_and_resolve, lookup_scope, options_digest, ExeSummary, IfaceError,
    LinkOptions, LinkResult, SharedInterface,
};
use crate::lifter::Terminator;
use crate::loader::{content_hash, load_binary, BinaryImage, BinaryKind, LoadError};
use crate::phases::NfaOptions;
use crate::syscall_id::{identify_program, mark_wrappers, Completeness, IdentifyOptions, ProgramIdentification};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Load(#[from] LoadError),
    #[error(transparent)]
    Iface(#[from] IfaceError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub identify: IdentifyOptions,
    pub link: LinkOptions,
    /// Where `<lib>.iface.json` files are read from and written to.
    pub iface_dir: Option<PathBuf>,
    /// Directories searched for NEEDED libraries.
    pub lib_path: Vec<PathBuf>,
    /// Modules loaded at runtime (dlopen), analyzed with all exports live.
    pub dlopen_libs: Vec<PathBuf>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            identify: IdentifyOptions::default(),
            link: LinkOptions::default(),
            iface_dir: None,
            lib_path: Vec::new(),
            dlopen_libs: Vec::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), PipelineError> {
        self.identify.exec.budget.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.identify.caller_depth == 0 {
            return Err(PipelineError::Config("caller depth must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleError {
    pub path: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct ProgramAnalysis {
    pub image: BinaryImage,
    pub cfg: Cfg,
    pub ident: ProgramIdentification,
    pub link: Option<LinkResult>,
    pub interfaces: BTreeMap<String, SharedInterface>,
    pub module_errors: Vec<ModuleError>,
    /// Final program set: own sites, libraries, modules, loader baseline.
    pub syscalls: BTreeSet<u64>,
}

impl ProgramAnalysis {
    pub fn is_complete(&self) -> bool {
        self.ident.completeness.is_complete()
            && self.link.as_ref().is_none_or(|l| l.is_complete() && l.undefined_symbols.is_empty())
            && self.module_errors.is_empty()
    }

    /// Where each number in the final set comes from: site addresses,
    /// `library:export`, runtime modules, the loader baseline.
    pub fn provenance(&self) -> BTreeMap<u64, Vec<String>> {
        let mut out: BTreeMap<u64, Vec<String>> = BTreeMap::new();
        for site in self.ident.sites.values() {
            for &n in site.resolved.numbers().into_iter().flatten() {
                out.entry(n).or_default().push(format!("site {:#x}", site.address));
            }
        }
        for w in &self.ident.wrapper_call_sites {
            for &n in w.resolved.numbers().into_iter().flatten() {
                out.entry(n).or_default().push(format!("wrapper call {:#x}", w.call_insn));
            }
        }
        if let Some(link) = &self.link {
            for (lib, exports) in &link.export_resolution {
                for (sym, nrs) in exports {
                    for &n in nrs {
                        out.entry(n).or_default().push(format!("{lib}:{sym}"));
                    }
                }
            }
            for (module, nrs) in &link.dlopen_provenance {
                for &n in nrs {
                    out.entry(n).or_default().push(format!("module {module}"));
                }
            }
            for &n in &link.baseline {
                out.entry(n).or_default().push("loader baseline".into());
            }
        }
        for v in out.values_mut() {
            v.sort();
            v.dedup();
        }
        out.retain(|n, _| self.syscalls.contains(n));
        out
    }

    /// Automaton options for a linked program: calls into libraries carry
    /// the syscalls of the export they reach; loader baseline and library
    /// initializers run before the entry point; runtime modules may run at
    /// any indirect call and at the `dlopen` call itself.
    pub fn nfa_options(&self, allow_unresolved: bool) -> NfaOptions {
        let mut opts = NfaOptions { allow_unresolved, ..NfaOptions::default() };
        let Some(link) = &self.link else { return opts };
        opts.prelude.extend(link.baseline.iter().copied());
        for iface in self.interfaces.values() {
            for f in &iface.init_functions {
                if let Some(node) = iface.func_graph.get(f) {
                    opts.prelude.extend(node.reachable_syscalls.iter().copied());
                }
            }
        }
        let modules: BTreeSet<u64> = link.dlopen_provenance.values().flatten().copied().collect();
        for call in &self.cfg.import_calls {
            let mut labels: BTreeSet<u64> = link
                .export_resolution
                .values()
                .filter_map(|exports| exports.get(&call.symbol))
                .flatten()
                .copied()
                .collect();
            if call.symbol.starts_with("dlopen") {
                labels.extend(modules.iter().copied());
            }
            opts.call_labels.entry(call.block).or_default().extend(labels);
        }
        if !modules.is_empty() {
            for b in self.cfg.reachable_blocks() {
                if matches!(self.cfg.blocks[b].terminator, Terminator::CallIndirect { .. }) {
                    opts.call_labels.entry(*b).or_default().extend(modules.iter().copied());
                }
            }
        }
        opts
    }

    pub fn completeness(&self) -> Completeness {
        if self.is_complete() {
            return Completeness::Complete;
        }
        match &self.ident.completeness {
            Completeness::Incomplete { unresolved_sites, poisoned_functions } => Completeness::Incomplete {
                unresolved_sites: unresolved_sites.clone(),
                poisoned_functions: poisoned_functions.clone(),
            },
            Completeness::Complete => Completeness::Incomplete { unresolved_sites: Vec::new(), poisoned_functions: Vec::new() },
        }
    }
}

/// Resolves and caches library interfaces for one analysis.
pub struct InterfaceStore<'a> {
    conf: &'a AnalysisConfig,
    search: Vec<PathBuf>,
    pub interfaces: BTreeMap<String, SharedInterface>,
    missing: BTreeSet<String>,
    in_progress: BTreeSet<String>,
}

impl<'a> InterfaceStore<'a> {
    pub fn new(conf: &'a AnalysisConfig, extra_dirs: &[PathBuf]) -> Self {
        let mut search = conf.lib_path.clone();
        search.extend(extra_dirs.iter().cloned());
        InterfaceStore { conf, search, interfaces: BTreeMap::new(), missing: BTreeSet::new(), in_progress: BTreeSet::new() }
    }

    fn find(&self, name: &str) -> Option<PathBuf> {
        self.search.iter().map(|d| d.join(name)).find(|p| p.is_file())
    }

    fn cached(&self, name: &str, file: Option<&Path>) -> Result<Option<SharedInterface>, IfaceError> {
        let Some(dir) = &self.conf.iface_dir else { return Ok(None) };
        let Some(iface) = SharedInterface::load_cached(dir, name)? else { return Ok(None) };
        if iface.options_digest != options_digest(&self.conf.identify) {
            return Ok(None);
        }
        // Without the library file the cached interface cannot be checked
        // and is used as is.
        if let Some(f) = file {
            let bytes = std::fs::read(f).map_err(|source| IfaceError::Io { path: f.display().to_string(), source })?;
            if content_hash(&bytes) != iface.interface_id.0 {
                return Ok(None);
            }
        }
        Ok(Some(iface))
    }

    /// Makes sure `name` and everything it needs have interfaces.
    pub fn ensure(&mut self, name: &str) -> Result<(), IfaceError> {
        if self.interfaces.contains_key(name) || self.missing.contains(name) || self.in_progress.contains(name) {
            return Ok(());
        }
        let file = self.find(name);
        if let Some(iface) = self.cached(name, file.as_deref())? {
            log::debug!("using cached interface for {name}");
            let needed = iface.needed.clone();
            self.interfaces.insert(name.to_string(), iface);
            for n in &needed {
                self.ensure(n)?;
            }
            return Ok(());
        }
        let Some(file) = file else {
            self.missing.insert(name.to_string());
            return Ok(());
        };
        let path = file.display().to_string();
        self.analyze_path(&path, Some(name))?;
        Ok(())
    }

    /// Analyzes the library at `path` (after its dependencies) and records
    /// it under its DT_SONAME (or `name`). Returns the recorded name.
    pub fn analyze_path(&mut self, path: &str, name: Option<&str>) -> Result<String, IfaceError> {
        let img = load_binary(path)?;
        let key = name.map(str::to_string).unwrap_or_else(|| img.lib_name());
        if self.interfaces.contains_key(&key) {
            return Ok(key);
        }
        self.in_progress.insert(key.clone());
        for d in &img.dyn_deps {
            self.ensure(d)?;
        }
        self.in_progress.remove(&key);
        log::info!("analyzing library {path}");
        let mut iface = analyze_library(path, &self.conf.identify, &self.interfaces)?;
        iface.library = key.clone();
        if let Some(dir) = &self.conf.iface_dir {
            iface.save(dir)?;
        }
        self.interfaces.insert(key.clone(), iface);
        Ok(key)
    }

    pub fn missing(&self) -> Vec<String> {
        self.missing.iter().cloned().collect()
    }
}

/// Analyzes an executable (or a shared object as a program) with its
/// dependencies and runtime-loaded modules.
pub fn analyze_program(path: &str, conf: &AnalysisConfig) -> Result<ProgramAnalysis, PipelineError> {
    conf.validate()?;
    let image = load_binary(path)?;
    let exe_dir: Vec<PathBuf> = Path::new(path).parent().map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    let mut store = InterfaceStore::new(conf, &exe_dir);
    for d in &image.dyn_deps {
        store.ensure(d)?;
    }
    if !store.missing.is_empty() {
        return Err(IfaceError::MissingInterface(store.missing()).into());
    }

    let mut module_errors = Vec::new();
    let mut modules = Vec::new();
    for m in &conf.dlopen_libs {
        let p = m.display().to_string();
        let before = store.missing.len();
        match store.analyze_path(&p, None) {
            Ok(name) if store.missing.len() == before => modules.push(name),
            Ok(_) => module_errors.push(ModuleError { path: p, error: format!("missing dependencies: {}", store.missing().join(", ")) }),
            Err(e) => {
                log::warn!("skipping module {p}: {e}");
                module_errors.push(ModuleError { path: p, error: e.to_string() });
            }
        }
    }

    let mut cfg = build_cfg(&image);
    let scope = lookup_scope(&image.dyn_deps, &store.interfaces);
    let scope_refs: Vec<&SharedInterface> = scope.iter().filter_map(|n| store.interfaces.get(n)).collect();
    let ext = external_wrappers(&image.imports, &scope_refs);
    let ident = identify_program(&image, &cfg, &conf.identify, &ext);
    mark_wrappers(&mut cfg, &ident);

    let linking = !image.dyn_deps.is_empty() || !modules.is_empty() || image.kind == BinaryKind::DynamicExec;
    let link = if linking {
        let exe = ExeSummary::new(&image, &cfg, &ident);
        let mut opts = conf.link.clone();
        opts.dlopen_roots.extend(modules.iter().cloned());
        Some(link_and_resolve(&exe, &store.interfaces, &opts)?)
    } else {
        None
    };
    let syscalls = match &link {
        Some(l) => l.syscalls.clone(),
        None => ident.syscalls.clone(),
    };
    Ok(ProgramAnalysis {
        image,
        cfg,
        ident,
        link,
        interfaces: store.interfaces,
        module_errors,
        syscalls,
    })
}

/// Adds runtime-loaded modules to a finished analysis: each is analyzed as
/// a library with every export live and its syscalls are unioned in.
/// Failing modules are recorded and skipped.
pub fn register_dlopen_targets(
    analysis: ProgramAnalysis,
    extra_libs: &[PathBuf],
    conf: &AnalysisConfig,
) -> Result<ProgramAnalysis, PipelineError> {
    let mut conf = conf.clone();
    conf.dlopen_libs.extend(extra_libs.iter().cloned());
    analyze_program(&analysis.image.path, &conf)
}
