use std::path::PathBuf;

use sysscope::fixtures::{analyze_fixture, missing_scenarios, verify_fixture, FixtureManifest};
use sysscope::AnalysisConfig;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

#[test]
fn every_manifest_verifies() {
    let manifests = FixtureManifest::load_dir(&root().join("manifests")).unwrap();
    assert!(manifests.len() >= 20);
    let mut failures = Vec::new();
    for m in &manifests {
        let a = analyze_fixture(m, &root(), &AnalysisConfig::default()).unwrap();
        let v = verify_fixture(m, &a);
        println!("{:<20} pass={} fn={:?} fp={}", v.name, v.pass, v.false_negatives, v.false_positives.len());
        if !v.pass {
            failures.push((v.name, v.problems));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn every_scenario_has_a_fixture() {
    let manifests = FixtureManifest::load_dir(&root().join("manifests")).unwrap();
    assert_eq!(missing_scenarios(&manifests), vec![]);
}

#[test]
fn traces_agree_with_manifests() {
    use sysscope::report::{parse_trace, KernelTable, SyscallTable};
    let table = SyscallTable::builtin(KernelTable::V6_10);
    for m in FixtureManifest::load_dir(&root().join("manifests")).unwrap() {
        if let Some(t) = &m.trace {
            let g = parse_trace(&root().join(t).display().to_string(), &table).unwrap();
            assert_eq!(g.observed, m.expected_syscalls, "{}", m.name);
        }
    }
}
