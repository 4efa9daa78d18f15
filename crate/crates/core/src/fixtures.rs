//! Fixture manifests: the expected outcome of analyzing each test program.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::pipeline::{analyze_program, AnalysisConfig, PipelineError, ProgramAnalysis};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScenarioTag {
    #[serde(rename = "fig1A")]
    Fig1A,
    #[serde(rename = "fig1B")]
    Fig1B,
    #[serde(rename = "fig1C")]
    Fig1C,
    #[serde(rename = "fig2A")]
    Fig2A,
    #[serde(rename = "fig2B")]
    Fig2B,
    #[serde(rename = "fig4")]
    Fig4,
    #[serde(rename = "fig5")]
    Fig5,
    #[serde(rename = "dag")]
    Dag,
    #[serde(rename = "dlopen")]
    Dlopen,
    #[serde(rename = "phases")]
    Phases,
    /// Robustness cases outside the named scenarios.
    #[serde(rename = "misc")]
    Misc,
}

/// Tags every corpus must cover.
pub const REQUIRED_SCENARIOS: [ScenarioTag; 10] = [
    ScenarioTag::Fig1A,
    ScenarioTag::Fig1B,
    ScenarioTag::Fig1C,
    ScenarioTag::Fig2A,
    ScenarioTag::Fig2B,
    ScenarioTag::Fig4,
    ScenarioTag::Fig5,
    ScenarioTag::Dag,
    ScenarioTag::Dlopen,
    ScenarioTag::Phases,
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureManifest {
    pub name: String,
    /// Paths are relative to the fixture root.
    pub binary: String,
    pub source: String,
    pub build_recipe: String,
    pub scenario: ScenarioTag,
    pub expected_syscalls: BTreeSet<u64>,
    pub expected_sites: usize,
    /// Names of functions expected to be detected as wrappers.
    #[serde(default)]
    pub expected_wrappers: Vec<String>,
    /// Trace the expected set was validated against, if the program runs.
    #[serde(default)]
    pub trace: Option<String>,
    #[serde(default)]
    pub dlopen: Vec<String>,
    #[serde(default = "yes")]
    pub expect_complete: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read manifest {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed manifest {path}: {source}")]
    Json { path: String, source: serde_json::Error },
}

impl FixtureManifest {
    pub fn load(path: &Path) -> Result<FixtureManifest, FixtureError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io { path: p.clone(), source })?;
        serde_json::from_str(&text).map_err(|source| FixtureError::Json { path: p, source })
    }

    /// All `*.json` manifests in `dir`, sorted by name.
    pub fn load_dir(dir: &Path) -> Result<Vec<FixtureManifest>, FixtureError> {
        let io = |source| FixtureError::Io { path: dir.display().to_string(), source };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(io)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        paths.sort();
        let mut out: Vec<FixtureManifest> = paths.iter().map(|p| Self::load(p)).collect::<Result<_, _>>()?;
        out.sort_by(|a, b| a.name.cmp(&b.name));
        Ok(out)
    }
}

pub fn missing_scenarios(manifests: &[FixtureManifest]) -> Vec<ScenarioTag> {
    let have: BTreeSet<ScenarioTag> = manifests.iter().map(|m| m.scenario).collect();
    REQUIRED_SCENARIOS.iter().copied().filter(|t| !have.contains(t)).collect()
}

/// Runs the pipeline on a fixture with its runtime-loaded modules.
pub fn analyze_fixture(m: &FixtureManifest, root: &Path, base: &AnalysisConfig) -> Result<ProgramAnalysis, PipelineError> {
    let mut conf = base.clone();
    conf.dlopen_libs = m.dlopen.iter().map(|d| root.join(d)).collect();
    analyze_program(&root.join(&m.binary).display().to_string(), &conf)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FixtureVerdict {
    pub name: String,
    pub pass: bool,
    pub false_negatives: BTreeSet<u64>,
    pub false_positives: BTreeSet<u64>,
    pub problems: Vec<String>,
}

/// Compares an analysis with the manifest. False negatives fail unless the
/// analysis itself reports being incomplete (and the manifest expects
/// that); false positives are only counted.
pub fn verify_fixture(m: &FixtureManifest, a: &ProgramAnalysis) -> FixtureVerdict {
    let mut problems = Vec::new();
    let fns: BTreeSet<u64> = m.expected_syscalls.difference(&a.syscalls).copied().collect();
    let fps: BTreeSet<u64> = a.syscalls.difference(&m.expected_syscalls).copied().collect();
    let complete = a.is_complete();
    if complete != m.expect_complete {
        problems.push(format!("expected complete={}, got {}", m.expect_complete, complete));
    }
    if !fns.is_empty() && complete {
        problems.push(format!("false negatives {fns:?}"));
    }
    let sites = a.ident.sites.len();
    if sites != m.expected_sites {
        problems.push(format!("expected {} reachable sites, found {sites}", m.expected_sites));
    }
    let mut wrappers: Vec<String> = a
        .ident
        .wrappers
        .iter()
        .map(|w| a.image.symbol_name(w.function).map(str::to_string).unwrap_or_else(|| format!("{:#x}", w.function)))
        .collect();
    wrappers.sort();
    wrappers.dedup();
    let mut expected_w = m.expected_wrappers.clone();
    expected_w.sort();
    if wrappers != expected_w {
        problems.push(format!("expected wrappers {expected_w:?}, found {wrappers:?}"));
    }
    if !fps.is_empty() {
        log::info!("{}: {} false positives {:?}", m.name, fps.len(), fps);
    }
    FixtureVerdict {
        name: m.name.clone(),
        pass: problems.is_empty(),
        false_negatives: fns,
        false_positives: fps,
        problems,
    }
}
