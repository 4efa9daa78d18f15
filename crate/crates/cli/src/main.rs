use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;
use sysscope::cfg::build_cfg;
use sysscope::loader::load_binary;
use sysscope::phases::{back_propagate, build_nfa, determinize, merge_phases, DEFAULT_MAX_DFA_STATES, DEFAULT_TAU};
use sysscope::pipeline::InterfaceStore;
use sysscope::report::{
    build_profile, emit_profile, parse_trace, ratio_f64, score, DefaultAction, KernelTable, ProfileFormat,
    SyscallTable, UnresolvedPolicy,
};
use sysscope::{analyze_program, AnalysisConfig, ProgramAnalysis};

#[derive(Parser)]
#[command(name = "sysscope", version, about = "Find the system calls an x86-64 ELF program can make")]
struct Cli {
    #[command(flatten)]
    opts: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct GlobalArgs {
    /// JSON run configuration (same keys as the `config` object of the
    /// `--json` diagnostics); flags given on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory holding `<lib>.iface.json` interface files.
    #[arg(long, global = true)]
    iface_dir: Option<PathBuf>,
    /// Directory searched for needed libraries (repeatable).
    #[arg(long = "lib-path", global = true)]
    lib_path: Vec<PathBuf>,
    /// Module the program loads at runtime (repeatable).
    #[arg(long = "dlopen-lib", global = true)]
    dlopen_lib: Vec<PathBuf>,
    /// Levels of callers the backward search may climb.
    #[arg(long, global = true)]
    caller_depth: Option<usize>,
    #[arg(long, global = true)]
    max_states: Option<usize>,
    #[arg(long, global = true)]
    max_steps: Option<u64>,
    #[arg(long, global = true)]
    max_loop_visits: Option<u32>,
    #[arg(long, global = true)]
    max_value_set: Option<usize>,
    #[arg(long, global = true)]
    max_call_depth: Option<usize>,
    /// Wall-clock limit per query, in seconds.
    #[arg(long, global = true)]
    timeout: Option<f64>,
    /// Treat every syscall site on its own, without wrapper detection.
    #[arg(long, global = true)]
    no_wrapper_heuristic: bool,
    /// Writes through untracked pointers invalidate the tracked stack.
    #[arg(long, global = true)]
    strict_memory: bool,
    /// Leave out the syscalls the dynamic loader makes before main.
    #[arg(long, global = true)]
    no_loader_baseline: bool,
    /// Syscall table: 5.15 or 6.10.
    #[arg(long, global = true)]
    kernel_table: Option<KernelTable>,
    /// Worker threads for site identification.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Print diagnostics as one JSON document on stderr.
    #[arg(long, global = true)]
    json: bool,
    /// Write the output here instead of stdout.
    #[arg(short, long, global = true)]
    output: Option<PathBuf>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand)]
enum Command {
    /// Identify the program's syscalls and emit a filter profile.
    Analyze {
        binary: PathBuf,
        #[arg(long, value_enum)]
        format: Option<Format>,
        /// What to do when some site stays unresolved.
        #[arg(long, value_enum)]
        unresolved_policy: Option<Policy>,
        /// Names or numbers added under `--unresolved-policy allow-listed`.
        #[arg(long, value_delimiter = ',')]
        allow_list: Vec<String>,
        /// Action for syscalls outside the profile: errno, kill or log.
        #[arg(long)]
        default_action: Option<DefaultAction>,
    },
    /// Analyze a shared library and write its interface file.
    Interface { library: PathBuf },
    /// Split the program into phases with their own allow-lists.
    Phases {
        binary: PathBuf,
        /// Jaccard threshold for merging phases (1 keeps strongly connected components only).
        #[arg(long)]
        tau: Option<f64>,
        /// Keep the merged allow-lists as they are.
        #[arg(long)]
        no_backprop: bool,
        #[arg(long, value_enum, default_value_t = PhaseFormat::Text)]
        format: PhaseFormat,
        #[arg(long)]
        max_dfa_states: Option<usize>,
        /// Build the automaton even with unresolved sites.
        #[arg(long)]
        allow_unresolved: bool,
    },
    /// Score the analysis against a syscall trace; exits 1 on any miss.
    Compare {
        binary: PathBuf,
        #[arg(long)]
        trace: PathBuf,
    },
    /// Print the control-flow graph as an edge list.
    DumpCfg { binary: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Format {
    #[default]
    Plain,
    Oci,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PhaseFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum Policy {
    #[default]
    Fail,
    AllowAll,
    AllowListed,
}

/// Everything a run depends on. Read from `--config`, then overridden by flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
struct RunConfig {
    analysis: AnalysisConfig,
    kernel_table: KernelTable,
    unresolved_policy: Policy,
    allow_list: Vec<String>,
    default_action: DefaultAction,
    format: Format,
    tau: f64,
    backprop: bool,
    max_dfa_states: usize,
    jobs: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            analysis: AnalysisConfig::default(),
            kernel_table: KernelTable::default(),
            unresolved_policy: Policy::Fail,
            allow_list: Vec::new(),
            default_action: DefaultAction::default(),
            format: Format::Plain,
            tau: DEFAULT_TAU,
            backprop: true,
            max_dfa_states: DEFAULT_MAX_DFA_STATES,
            jobs: None,
        }
    }
}

fn load_config(g: &GlobalArgs) -> Result<RunConfig> {
    let mut c = match &g.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("cannot read config {}", p.display()))?;
            serde_json::from_str(&text).with_context(|| format!("malformed config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    let a = &mut c.analysis;
    if g.iface_dir.is_some() {
        a.iface_dir = g.iface_dir.clone();
    }
    a.lib_path.extend(g.lib_path.iter().cloned());
    a.dlopen_libs.extend(g.dlopen_lib.iter().cloned());
    let id = &mut a.identify;
    let b = &mut id.exec.budget;
    if let Some(v) = g.caller_depth {
        id.caller_depth = v;
    }
    if let Some(v) = g.max_states {
        b.max_states = v;
    }
    if let Some(v) = g.max_steps {
        b.max_steps_per_state = v;
    }
    if let Some(v) = g.max_loop_visits {
        b.max_loop_visits = v;
    }
    if let Some(v) = g.max_value_set {
        b.max_value_set = v;
    }
    if let Some(v) = g.max_call_depth {
        b.max_call_depth = v;
    }
    if let Some(v) = g.timeout {
        b.wall_clock_limit = v;
    }
    if g.no_wrapper_heuristic {
        id.wrapper_heuristic = false;
    }
    if g.strict_memory {
        id.exec.strict_memory = true;
    }
    if g.no_loader_baseline {
        a.link.loader_baseline = None;
    }
    if let Some(k) = g.kernel_table {
        c.kernel_table = k;
    }
    if g.jobs.is_some() {
        c.jobs = g.jobs;
    }
    Ok(c)
}

/// Result of one subcommand: exit code plus extra diagnostic fields.
struct Outcome {
    code: u8,
    diagnostics: serde_json::Value,
}

fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("cannot write {}", p.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn analyze(path: &Path, conf: &RunConfig) -> Result<ProgramAnalysis> {
    let p = path.display().to_string();
    analyze_program(&p, &conf.analysis).with_context(|| format!("analysis of {p} failed"))
}

fn analysis_diagnostics(a: &ProgramAnalysis, table: &SyscallTable) -> serde_json::Value {
    json!({
        "complete": a.is_complete(),
        "completeness": a.completeness(),
        "syscalls": a.syscalls.iter().map(|&n| table.display(n)).collect::<Vec<_>>(),
        "sites": a.ident.sites.len(),
        "wrappers": a.ident.wrappers,
        "legacy_sites": a.ident.legacy_sites,
        "ambiguous_sites": a.ident.ambiguous_sites,
        "module_errors": a.module_errors,
    })
}

fn report_incomplete(a: &ProgramAnalysis) {
    if a.is_complete() {
        return;
    }
    for s in a.ident.sites.values().filter(|s| !s.resolved.is_resolved()) {
        log::warn!("unresolved syscall site {:#x}: {:?}", s.address, s.resolved);
    }
    for m in &a.module_errors {
        log::warn!("module {} skipped: {}", m.path, m.error);
    }
}

fn parse_allow_list(items: &[String], table: &SyscallTable) -> Result<BTreeSet<u64>> {
    items
        .iter()
        .map(|s| match s.parse::<u64>() {
            Ok(n) => Ok(n),
            Err(_) => table.number(s).with_context(|| format!("unknown syscall `{s}` in allow list")),
        })
        .collect()
}

fn cmd_analyze(binary: &Path, conf: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let table = SyscallTable::builtin(conf.kernel_table);
    let a = analyze(binary, conf)?;
    report_incomplete(&a);
    let diagnostics = analysis_diagnostics(&a, &table);
    if conf.format == Format::Json {
        let syscalls: Vec<_> = a
            .provenance()
            .into_iter()
            .map(|(n, from)| json!({ "nr": n, "name": table.display(n), "from": from }))
            .collect();
        let doc = json!({
            "binary": binary.display().to_string(),
            "complete": a.is_complete(),
            "syscalls": syscalls,
            "sites": a.ident.sites.values().collect::<Vec<_>>(),
            "wrapper_call_sites": a.ident.wrapper_call_sites,
            "link": a.link,
        });
        write_output(out, &format!("{}\n", serde_json::to_string_pretty(&doc)?))?;
        return Ok(Outcome { code: 0, diagnostics });
    }
    let policy = match conf.unresolved_policy {
        Policy::Fail => UnresolvedPolicy::Fail,
        Policy::AllowAll => UnresolvedPolicy::AllowAll,
        Policy::AllowListed => UnresolvedPolicy::AllowListed(parse_allow_list(&conf.allow_list, &table)?),
    };
    let profile = build_profile(a.syscalls.clone(), a.provenance(), a.is_complete(), &policy, conf.default_action)?;
    let format = if conf.format == Format::Oci { ProfileFormat::OciSeccompJson } else { ProfileFormat::PlainList };
    write_output(out, &emit_profile(&profile, format, &table))?;
    Ok(Outcome { code: 0, diagnostics })
}

fn cmd_interface(library: &Path, conf: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let dir: Vec<PathBuf> = library.parent().map(|p| vec![p.to_path_buf()]).unwrap_or_default();
    let mut store = InterfaceStore::new(&conf.analysis, &dir);
    let key = store.analyze_path(&library.display().to_string(), None)?;
    let missing = store.missing();
    if !missing.is_empty() {
        bail!("no interface for needed libraries: {}", missing.join(", "));
    }
    let iface = &store.interfaces[&key];
    write_output(out, &iface.to_json())?;
    Ok(Outcome {
        code: 0,
        diagnostics: json!({
            "library": iface.library,
            "functions": iface.func_graph.len(),
            "unresolved_functions": iface.unresolved_sites.len(),
        }),
    })
}

fn cmd_phases(binary: &Path, conf: &RunConfig, allow_unresolved: bool, format: PhaseFormat, out: Option<&Path>) -> Result<Outcome> {
    if !(0.0..=1.0).contains(&conf.tau) {
        bail!("tau must be within [0, 1], got {}", conf.tau);
    }
    let table = SyscallTable::builtin(conf.kernel_table);
    let a = analyze(binary, conf)?;
    report_incomplete(&a);
    let nfa = build_nfa(&a.cfg, &a.ident, &a.nfa_options(allow_unresolved))?;
    let dfa = determinize(&nfa, conf.max_dfa_states)?;
    let mut phases = merge_phases(&dfa, conf.tau);
    if conf.backprop {
        phases = back_propagate(phases);
    }
    let text = match format {
        PhaseFormat::Text => phases.to_text(&|n| table.display(n)),
        PhaseFormat::Json => format!("{}\n", serde_json::to_string_pretty(&phases.to_json())?),
    };
    write_output(out, &text)?;
    let mut diagnostics = analysis_diagnostics(&a, &table);
    diagnostics["dfa_states"] = json!(dfa.len());
    diagnostics["phases"] = json!(phases.phases.len());
    Ok(Outcome { code: 0, diagnostics })
}

fn cmd_compare(binary: &Path, trace: &Path, conf: &RunConfig, out: Option<&Path>) -> Result<Outcome> {
    let table = SyscallTable::builtin(conf.kernel_table);
    let truth = parse_trace(&trace.display().to_string(), &table)?;
    for name in &truth.unknown_names {
        log::warn!("trace names unknown syscall `{name}`");
    }
    let a = analyze(binary, conf)?;
    report_incomplete(&a);
    let s = score(&a.syscalls, &truth.observed);
    let names = |set: &BTreeSet<u64>| set.iter().map(|&n| table.display(n)).collect::<Vec<_>>();
    let text = format!(
        "precision {} ({:.4})\nrecall {} ({:.4})\nf1 {} ({:.4})\nfalse negatives: {}\nfalse positives: {}\n",
        s.precision,
        ratio_f64(&s.precision),
        s.recall,
        ratio_f64(&s.recall),
        s.f1,
        ratio_f64(&s.f1),
        names(&s.false_negatives).join(" "),
        names(&s.false_positives).join(" "),
    );
    write_output(out, &text)?;
    let mut diagnostics = analysis_diagnostics(&a, &table);
    diagnostics["score"] = serde_json::to_value(&s)?;
    let code = if s.false_negatives.is_empty() { 0 } else { 1 };
    Ok(Outcome { code, diagnostics })
}

fn cmd_dump_cfg(binary: &Path, out: Option<&Path>) -> Result<Outcome> {
    let img = load_binary(&binary.display().to_string())?;
    let cfg = build_cfg(&img);
    write_output(out, &cfg.dump_edges())?;
    Ok(Outcome {
        code: 0,
        diagnostics: json!({ "blocks": cfg.blocks.len(), "edges": cfg.edges.len(), "functions": cfg.functions.len() }),
    })
}

fn run(cli: &Cli, conf: &RunConfig) -> Result<Outcome> {
    if let Some(n) = conf.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().context("cannot size the worker pool")?;
    }
    let out = cli.opts.output.as_deref();
    match &cli.command {
        Command::Analyze { binary, .. } => cmd_analyze(binary, conf, out),
        Command::Interface { library } => cmd_interface(library, conf, out),
        Command::Phases { binary, allow_unresolved, format, .. } => cmd_phases(binary, conf, *allow_unresolved, *format, out),
        Command::Compare { binary, trace } => cmd_compare(binary, trace, conf, out),
        Command::DumpCfg { binary } => cmd_dump_cfg(binary, out),
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Analyze { .. } => "analyze",
        Command::Interface { .. } => "interface",
        Command::Phases { .. } => "phases",
        Command::Compare { .. } => "compare",
        Command::DumpCfg { .. } => "dump-cfg",
    }
}

/// Folds subcommand flags into the run configuration.
fn apply_command_flags(c: &Command, conf: &mut RunConfig) {
    match c {
        Command::Analyze { format, unresolved_policy, allow_list, default_action, .. } => {
            if let Some(f) = format {
                conf.format = *f;
            }
            if let Some(p) = unresolved_policy {
                conf.unresolved_policy = *p;
            }
            conf.allow_list.extend(allow_list.iter().cloned());
            if let Some(d) = default_action {
                conf.default_action = *d;
            }
        }
        Command::Phases { tau, no_backprop, max_dfa_states, .. } => {
            if let Some(t) = tau {
                conf.tau = *t;
            }
            if *no_backprop {
                conf.backprop = false;
            }
            if let Some(m) = max_dfa_states {
                conf.max_dfa_states = *m;
            }
        }
        _ => {}
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.opts.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let started = Instant::now();
    let conf = load_config(&cli.opts).map(|mut c| {
        apply_command_flags(&cli.command, &mut c);
        c
    });
    let result = conf.as_ref().map_err(|e| anyhow::anyhow!("{e:#}")).and_then(|c| run(&cli, c));
    let code = match &result {
        Ok(o) => o.code,
        Err(_) => 1,
    };
    if cli.opts.json {
        let mut doc = json!({
            "command": command_name(&cli.command),
            "exit_code": code,
            "elapsed_ms": started.elapsed().as_millis() as u64,
            "config": conf.as_ref().ok(),
        });
        match &result {
            Ok(o) => doc["diagnostics"] = o.diagnostics.clone(),
            Err(e) => {
                doc["error"] = json!({
                    "message": e.to_string(),
                    "chain": e.chain().map(|c| c.to_string()).collect::<Vec<_>>(),
                })
            }
        }
        eprintln!("{doc}");
    } else if let Err(e) = &result {
        eprintln!("error: {e:#}");
    }
    ExitCode::from(code)
}
