//! Filter profiles, scoring against traced ground truth, trace parsing.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ReportError {
    #[error("analysis is incomplete and the unresolved policy is `fail`")]
    UnresolvedWithoutPolicy,
    #[error("cannot read trace {path}: {source}")]
    UnreadableTrace { path: String, source: std::io::Error },
    #[error("unknown kernel table `{0}` (known: 5.15, 6.10)")]
    UnknownTable(String),
    #[error("unknown syscall name `{0}`")]
    UnknownName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KernelTable {
    #[serde(rename = "5.15")]
    V5_15,
    #[default]
    #[serde(rename = "6.10")]
    V6_10,
}

impl FromStr for KernelTable {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, ReportError> {
        match s {
            "5.15" => Ok(KernelTable::V5_15),
            "6.10" => Ok(KernelTable::V6_10),
            other => Err(ReportError::UnknownTable(other.to_string())),
        }
    }
}

impl fmt::Display for KernelTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelTable::V5_15 => "5.15",
            KernelTable::V6_10 => "6.10",
        })
    }
}

/// x86-64 syscall number ↔ name table for one kernel version.
#[derive(Debug, Clone)]
pub struct SyscallTable {
    pub version: KernelTable,
    by_nr: BTreeMap<u64, String>,
    by_name: HashMap<String, u64>,
}

impl SyscallTable {
    pub fn builtin(version: KernelTable) -> SyscallTable {
        let text = match version {
            KernelTable::V5_15 => include_str!("../data/syscalls-x86_64-linux-5.15.tsv"),
            KernelTable::V6_10 => include_str!("../data/syscalls-x86_64-linux-6.10.tsv"),
        };
        let mut by_nr = BTreeMap::new();
        for line in text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()) {
            let mut parts = line.split_whitespace();
            if let (Some(n), Some(name)) = (parts.next().and_then(|n| n.parse().ok()), parts.next()) {
                by_nr.insert(n, name.to_string());
            }
        }
        let by_name = by_nr.iter().map(|(&n, s)| (s.clone(), n)).collect();
        SyscallTable { version, by_nr, by_name }
    }

    pub fn name(&self, nr: u64) -> Option<&str> {
        self.by_nr.get(&nr).map(String::as_str)
    }

    /// Name, or the number in decimal when the table does not know it.
    pub fn display(&self, nr: u64) -> String {
        self.name(nr).map(str::to_string).unwrap_or_else(|| nr.to_string())
    }

    pub fn number(&self, name: &str) -> Option<u64> {
        self.by_name.get(name).copied()
    }

    pub fn max_nr(&self) -> u64 {
        self.by_nr.keys().next_back().copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.by_nr.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_nr.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DefaultAction {
    #[default]
    Errno,
    Kill,
    Log,
}

impl FromStr for DefaultAction {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "errno" => Ok(DefaultAction::Errno),
            "kill" => Ok(DefaultAction::Kill),
            "log" => Ok(DefaultAction::Log),
            o => Err(format!("unknown default action `{o}` (errno, kill, log)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", content = "extra", rename_all = "kebab-case")]
pub enum UnresolvedPolicy {
    /// Refuse to emit a profile for an incomplete analysis.
    #[default]
    Fail,
    /// Emit a profile that permits everything.
    AllowAll,
    /// Add a user-supplied list to the identified set.
    AllowListed(BTreeSet<u64>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProfileFormat {
    OciSeccompJson,
    PlainList,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterProfile {
    pub default_action: DefaultAction,
    pub allowed: BTreeSet<u64>,
    /// Number → contributing sites, libraries or modules.
    pub provenance: BTreeMap<u64, Vec<String>>,
    pub complete: bool,
    /// Set under the allow-all policy for an incomplete analysis: the
    /// emitted filter does not restrict anything.
    pub permissive: bool,
}

/// Applies the unresolved policy to an identified set.
pub fn build_profile(
    allowed: BTreeSet<u64>,
    provenance: BTreeMap<u64, Vec<String>>,
    complete: bool,
    policy: &UnresolvedPolicy,
    default_action: DefaultAction,
) -> Result<FilterProfile, ReportError> {
    let mut p = FilterProfile { default_action, allowed, provenance, complete, permissive: false };
    if !complete {
        match policy {
            UnresolvedPolicy::Fail => return Err(ReportError::UnresolvedWithoutPolicy),
            UnresolvedPolicy::AllowAll => p.permissive = true,
            UnresolvedPolicy::AllowListed(extra) => {
                for &n in extra {
                    if p.allowed.insert(n) {
                        p.provenance.entry(n).or_default().push("allow-list".into());
                    }
                }
            }
        }
    }
    Ok(p)
}

/// Serializes a profile. Output is byte-identical for identical input.
pub fn emit_profile(profile: &FilterProfile, format: ProfileFormat, table: &SyscallTable) -> String {
    match format {
        ProfileFormat::PlainList => {
            let mut out = String::new();
            if profile.permissive {
                out.push_str("# incomplete analysis: filter must allow all syscalls\n");
            }
            for &n in &profile.allowed {
                out.push_str(&table.display(n));
                out.push('\n');
            }
            out
        }
        ProfileFormat::OciSeccompJson => {
            let mut names: Vec<String> = Vec::new();
            for &n in &profile.allowed {
                match table.name(n) {
                    Some(s) => names.push(s.to_string()),
                    None => log::warn!("syscall {n} has no name in the {} table; left out of the OCI profile", table.version),
                }
            }
            names.sort();
            let default = if profile.permissive {
                "SCMP_ACT_ALLOW"
            } else {
                match profile.default_action {
                    DefaultAction::Errno => "SCMP_ACT_ERRNO",
                    DefaultAction::Kill => "SCMP_ACT_KILL_PROCESS",
                    DefaultAction::Log => "SCMP_ACT_LOG",
                }
            };
            let mut doc = serde_json::json!({
                "defaultAction": default,
                "architectures": ["SCMP_ARCH_X86_64"],
                "syscalls": [{ "names": names, "action": "SCMP_ACT_ALLOW" }],
            });
            if default == "SCMP_ACT_ERRNO" {
                doc["defaultErrnoRet"] = serde_json::json!(1);
            }
            let mut s = serde_json::to_string_pretty(&doc).expect("profile serializes");
            s.push('\n');
            s
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Score {
    #[serde(serialize_with = "ser_ratio")]
    pub precision: Ratio<u64>,
    #[serde(serialize_with = "ser_ratio")]
    pub recall: Ratio<u64>,
    #[serde(serialize_with = "ser_ratio")]
    pub f1: Ratio<u64>,
    pub true_positives: BTreeSet<u64>,
    pub false_negatives: BTreeSet<u64>,
    pub false_positives: BTreeSet<u64>,
}

fn ser_ratio<S: serde::Serializer>(r: &Ratio<u64>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_f64(ratio_f64(r))
}

pub fn ratio_f64(r: &Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

fn ratio(n: u64, d: u64) -> Ratio<u64> {
    if d == 0 {
        Ratio::from_integer(0)
    } else {
        Ratio::new(n, d)
    }
}

/// Precision, recall and F1 of `analysis` against `truth`, as exact
/// fractions; zero denominators give 0.
pub fn score(analysis: &BTreeSet<u64>, truth: &BTreeSet<u64>) -> Score {
    let tp: BTreeSet<u64> = analysis.intersection(truth).copied().collect();
    let precision = ratio(tp.len() as u64, analysis.len() as u64);
    let recall = ratio(tp.len() as u64, truth.len() as u64);
    let sum = precision + recall;
    let f1 = if *sum.numer() == 0 { Ratio::from_integer(0) } else { Ratio::from_integer(2) * precision * recall / sum };
    Score {
        precision,
        recall,
        f1,
        false_negatives: truth.difference(analysis).copied().collect(),
        false_positives: analysis.difference(truth).copied().collect(),
        true_positives: tp,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroundTruth {
    pub observed: BTreeSet<u64>,
    pub source: String,
    /// Names not in the table; excluded from `observed`.
    pub unknown_names: BTreeSet<String>,
}

pub fn parse_trace(path: &str, table: &SyscallTable) -> Result<GroundTruth, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::UnreadableTrace { path: path.to_string(), source })?;
    Ok(parse_trace_str(&text, path, table))
}

/// Accepts raw tracer output (`name(args) = ret`, optionally prefixed by a
/// pid) and the `-c` summary table.
pub fn parse_trace_str(text: &str, source: &str, table: &SyscallTable) -> GroundTruth {
    let mut observed = BTreeSet::new();
    let mut unknown = BTreeSet::new();
    for line in text.lines() {
        let Some(name) = trace_line_name(line) else { continue };
        match table.number(name) {
            Some(n) => {
                observed.insert(n);
            }
            None => {
                log::warn!("{source}: unknown syscall `{name}` ignored");
                unknown.insert(name.to_string());
            }
        }
    }
    GroundTruth { observed, source: source.to_string(), unknown_names: unknown }
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') && !s.as_bytes()[0].is_ascii_digit()
}

fn trace_line_name(line: &str) -> Option<&str> {
    let mut l = line.trim();
    if l.is_empty() || l.starts_with("---") || l.starts_with("+++") || l.starts_with('%') || l.starts_with("<...") {
        return None;
    }
    // Summary table row: numeric columns, then the name last.
    if l.as_bytes()[0].is_ascii_digit() || l.starts_with('.') {
        let cols: Vec<&str> = l.split_whitespace().collect();
        let numeric = cols.len() >= 2 && cols[..cols.len() - 1].iter().all(|c| c.parse::<f64>().is_ok());
        if numeric {
            let last = *cols.last()?;
            return (is_ident(last) && last != "total").then_some(last);
        }
    }
    // Pid prefixes: "[pid 12] " or "12 ".
    if let Some(rest) = l.strip_prefix("[pid") {
        l = rest.split_once(']')?.1.trim_start();
    } else if let Some((first, rest)) = l.split_once(' ') {
        if first.bytes().all(|b| b.is_ascii_digit()) {
            l = rest.trim_start();
        }
    }
    // Timestamps ("12:00:01.123456 " or "1712.5 ").
    if let Some((first, rest)) = l.split_once(' ') {
        if first.bytes().all(|b| b.is_ascii_digit() || b == b':' || b == b'.') {
            l = rest.trim_start();
        }
    }
    let name = &l[..l.find('(')?];
    is_ident(name).then_some(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_load() {
        let t = SyscallTable::builtin(KernelTable::V6_10);
        assert_eq!(t.name(60), Some("exit"));
        assert_eq!(t.number("getpid"), Some(39));
        let old = SyscallTable::builtin(KernelTable::V5_15);
        assert!(old.max_nr() < t.max_nr());
    }

    #[test]
    fn trace_formats() {
        let t = SyscallTable::builtin(KernelTable::V6_10);
        let raw = "read(3, ...) = 1\n[pid 7] write(1, \"\") = 0\n12 close(3) = 0\nbogus_call() = 0\n+++ exited with 0 +++\n";
        let g = parse_trace_str(raw, "raw", &t);
        assert_eq!(g.observed, BTreeSet::from([0, 1, 3]));
        assert_eq!(g.unknown_names, BTreeSet::from(["bogus_call".to_string()]));
        let summary = "% time     seconds  usecs/call     calls    errors syscall\n\
                       ------ ----------- ----------- --------- --------- ----------------\n\
                        50.00    0.000010          10         1           read\n\
                        50.00    0.000010          10         1         1 openat\n\
                       ------ ----------- ----------- --------- --------- ----------------\n\
                       100.00    0.000020          10         2         1 total\n";
        assert_eq!(parse_trace_str(summary, "c", &t).observed, BTreeSet::from([0, 257]));
    }

    #[test]
    fn plain_profile_is_sorted() {
        let t = SyscallTable::builtin(KernelTable::V6_10);
        let p = build_profile(BTreeSet::from([2, 0, 1]), BTreeMap::new(), true, &UnresolvedPolicy::Fail, DefaultAction::Errno).unwrap();
        assert_eq!(emit_profile(&p, ProfileFormat::PlainList, &t), "read\nwrite\nopen\n");
    }

    #[test]
    fn incomplete_needs_policy() {
        let r = build_profile(BTreeSet::new(), BTreeMap::new(), false, &UnresolvedPolicy::Fail, DefaultAction::Errno);
        assert!(matches!(r, Err(ReportError::UnresolvedWithoutPolicy)));
    }
}
