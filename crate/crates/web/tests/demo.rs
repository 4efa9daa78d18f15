use serde_json::Value;
use sysscope_web::{analyze_value, f1_value, phases_value, sample_bytes, sample_list, SAMPLES};

fn sample(name: &str) -> Vec<u8> {
    sample_bytes(name).expect("embedded sample")
}

fn numbers(v: &Value) -> Vec<u64> {
    v["syscalls"].as_array().unwrap().iter().map(|s| s["nr"].as_u64().unwrap()).collect()
}

#[test]
fn every_sample_analyzes() {
    let list: Value = serde_json::from_str(&sample_list()).unwrap();
    assert_eq!(list.as_array().unwrap().len(), SAMPLES.len());
    for s in SAMPLES {
        analyze_value(s.name, s.bytes, true).unwrap_or_else(|e| panic!("{}: {e}", s.name));
    }
}

#[test]
fn wrapper_toggle() {
    let on = analyze_value("fig2b", &sample("fig2b"), true).unwrap();
    let off = analyze_value("fig2b", &sample("fig2b"), false).unwrap();
    assert_eq!(numbers(&on), [39, 60]);
    assert!(numbers(&off).len() >= 6);
    assert_eq!(on["wrappers"][0]["function"], "my_syscall");
}

#[test]
fn phases_respond_to_tau_and_backprop() {
    let count = |tau, bp| phases_value("phases", &sample("phases"), tau, bp).unwrap()["phases"]["phases"].as_array().unwrap().len();
    assert_eq!(count(1.0, true), 6);
    assert_eq!(count(0.3, true), 5);
    let raw = phases_value("phases", &sample("phases"), 1.0, false).unwrap();
    assert_eq!(raw["phases"]["back_propagated"], false);
    assert!(phases_value("phases", &sample("phases"), 1.5, true).is_err());
}

#[test]
fn f1_is_exact() {
    let a: Vec<String> = (0..15).map(|n| n.to_string()).collect();
    let t: Vec<String> = (0..10).map(|n| n.to_string()).collect();
    let v = f1_value(&a.join(","), &t.join(" ")).unwrap();
    assert_eq!(v["f1"]["exact"], "4/5");
    let named = f1_value("read write exit", "read,exit,getpid").unwrap();
    assert_eq!(named["false_negatives"][0], "getpid");
    assert!(f1_value("nosuchcall", "read").is_err());
}

#[test]
fn garbage_bytes_are_an_error() {
    assert!(analyze_value("junk", b"not an elf", true).is_err());
    let s: Value = serde_json::from_str(&sysscope_web::analyze("junk", b"", true)).unwrap();
    assert!(s["error"].is_string());
}
