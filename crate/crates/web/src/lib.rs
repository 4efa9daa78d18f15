//! WebAssembly bindings for the browser demo. Everything works on bytes
//! already in memory: there is no file system, so needed libraries are not
//! resolved and only the program's own code is analyzed.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::{json, Value};
use sysscope::cfg::build_cfg;
use sysscope::loader::BinaryImage;
use sysscope::phases::{back_propagate, build_nfa, determinize, merge_phases, NfaOptions};
use sysscope::report::{ratio_f64, score, KernelTable, SyscallTable};
use sysscope::syscall_id::{identify_program, mark_wrappers, IdentifyOptions, ProgramIdentification};
use wasm_bindgen::prelude::*;

/// Subset construction cap for the demo; a browser tab has little memory.
const MAX_DFA_STATES: usize = 20_000;

pub struct Sample {
    pub name: &'static str,
    pub about: &'static str,
    pub bytes: &'static [u8],
}

macro_rules! sample {
    ($name:literal, $about:literal) => {
        Sample { name: $name, about: $about, bytes: include_bytes!(concat!("../../core/fixtures/bin/", $name)) }
    };
}

pub const SAMPLES: &[Sample] = &[
    sample!("fig1a", "number set in one block, syscall in the next"),
    sample!("fig1b", "number stored on the stack and reloaded"),
    sample!("fig1c", "number chosen on two branches"),
    sample!("fig2b", "syscall wrapper called with two numbers; six more in dead callers"),
    sample!("fig4", "number kept in a loop counter"),
    sample!("fig5", "function pointers found in two rounds"),
    sample!("jumptable", "switch compiled to a jump table"),
    sample!("gostub", "wrapper taking the number on the stack"),
    sample!("phases", "open, read, write, close in sequence"),
    sample!("poison", "undecodable bytes on a live path"),
];

fn table() -> SyscallTable {
    SyscallTable::builtin(KernelTable::V6_10)
}

struct Analyzed {
    image: BinaryImage,
    cfg: sysscope::cfg::Cfg,
    ident: ProgramIdentification,
}

fn run(name: &str, bytes: &[u8], wrapper_heuristic: bool) -> Result<Analyzed, String> {
    let image = BinaryImage::parse(name, bytes).map_err(|e| e.to_string())?;
    let opts = IdentifyOptions { wrapper_heuristic, parallel: false, ..IdentifyOptions::default() };
    let mut cfg = build_cfg(&image);
    let ident = identify_program(&image, &cfg, &opts, &BTreeMap::new());
    mark_wrappers(&mut cfg, &ident);
    Ok(Analyzed { image, cfg, ident })
}

pub fn analyze_value(name: &str, bytes: &[u8], wrapper_heuristic: bool) -> Result<Value, String> {
    let a = run(name, bytes, wrapper_heuristic)?;
    let t = table();
    let fname = |f: u64| a.image.symbol_name(f).map(str::to_string).unwrap_or_else(|| format!("{f:#x}"));
    let sites: Vec<Value> = a
        .ident
        .sites
        .values()
        .map(|s| {
            json!({
                "address": format!("{:#x}", s.address),
                "function": fname(s.function),
                "in_wrapper": s.in_wrapper,
                "resolution": s.resolved,
            })
        })
        .collect();
    let wrappers: Vec<Value> = a
        .ident
        .wrappers
        .iter()
        .map(|w| json!({ "function": fname(w.function), "parameter": w.param_location.to_string() }))
        .collect();
    Ok(json!({
        "complete": a.ident.completeness.is_complete(),
        "syscalls": a.ident.syscalls.iter().map(|&n| json!({ "nr": n, "name": t.display(n) })).collect::<Vec<_>>(),
        "sites": sites,
        "wrappers": wrappers,
        "needed_libraries": a.image.dyn_deps,
        "blocks": a.cfg.blocks.len(),
    }))
}

pub fn phases_value(name: &str, bytes: &[u8], tau: f64, backprop: bool) -> Result<Value, String> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(format!("tau must be within [0, 1], got {tau}"));
    }
    let a = run(name, bytes, true)?;
    let nfa = build_nfa(&a.cfg, &a.ident, &NfaOptions::default()).map_err(|e| e.to_string())?;
    let dfa = determinize(&nfa, MAX_DFA_STATES).map_err(|e| e.to_string())?;
    let mut phases = merge_phases(&dfa, tau);
    if backprop {
        phases = back_propagate(phases);
    }
    let t = table();
    Ok(json!({
        "text": phases.to_text(&|n| t.display(n)),
        "phases": phases.to_json(),
    }))
}

/// Numbers or names separated by commas or whitespace.
fn parse_set(text: &str, t: &SyscallTable) -> Result<BTreeSet<u64>, String> {
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<u64>().ok().or_else(|| t.number(s)).ok_or_else(|| format!("unknown syscall `{s}`")))
        .collect()
}

pub fn f1_value(analysis: &str, truth: &str) -> Result<Value, String> {
    let t = table();
    let a = parse_set(analysis, &t)?;
    let g = parse_set(truth, &t)?;
    let s = score(&a, &g);
    let names = |set: &BTreeSet<u64>| set.iter().map(|&n| t.display(n)).collect::<Vec<_>>();
    Ok(json!({
        "precision": { "exact": s.precision.to_string(), "value": ratio_f64(&s.precision) },
        "recall": { "exact": s.recall.to_string(), "value": ratio_f64(&s.recall) },
        "f1": { "exact": s.f1.to_string(), "value": ratio_f64(&s.f1) },
        "false_negatives": names(&s.false_negatives),
        "false_positives": names(&s.false_positives),
    }))
}

fn respond(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => json!({ "error": e }).to_string(),
    }
}

/// JSON analysis report, or `{"error": ...}`.
#[wasm_bindgen]
pub fn analyze(name: &str, bytes: &[u8], wrapper_heuristic: bool) -> String {
    respond(analyze_value(name, bytes, wrapper_heuristic))
}

/// JSON with the phase report as text and as structured data.
#[wasm_bindgen]
pub fn phases(name: &str, bytes: &[u8], tau: f64, backprop: bool) -> String {
    respond(phases_value(name, bytes, tau, backprop))
}

#[wasm_bindgen]
pub fn f1(analysis: &str, truth: &str) -> String {
    respond(f1_value(analysis, truth))
}

#[wasm_bindgen]
pub fn sample_list() -> String {
    Value::Array(SAMPLES.iter().map(|s| json!({ "name": s.name, "about": s.about })).collect()).to_string()
}

#[wasm_bindgen]
pub fn sample_bytes(name: &str) -> Option<Vec<u8>> {
    SAMPLES.iter().find(|s| s.name == name).map(|s| s.bytes.to_vec())
}
