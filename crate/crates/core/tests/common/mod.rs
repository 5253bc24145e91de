#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use migrasim::{parse_scenario, run_scenario, RunOutput, Scenario};

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

/// Every bundled scenario, sorted by file name.
pub fn suite() -> Vec<(String, Scenario)> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(scenario_dir())
        .expect("scenario dir")
        .map(|e| e.expect("dir entry").path())
        .filter(|p| p.extension().is_some_and(|e| e == "scn"))
        .collect();
    files.sort();
    files
        .into_iter()
        .map(|p| {
            let stem = p.file_stem().unwrap().to_string_lossy().into_owned();
            (stem.clone(), load(&stem))
        })
        .collect()
}

pub fn load(stem: &str) -> Scenario {
    let path = scenario_dir().join(format!("{stem}.scn"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    let mut s = parse_scenario(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    if s.name.is_none() {
        s.name = Some(stem.to_string());
    }
    s
}

pub fn run(stem: &str) -> RunOutput {
    run_scenario(&load(stem)).unwrap_or_else(|e| panic!("{stem}: {e}"))
}

/// `key=value` fields of one trace line.
pub fn fields(line: &str) -> BTreeMap<&str, &str> {
    line.split_whitespace().filter_map(|kv| kv.split_once('=')).collect()
}

pub fn num(m: &BTreeMap<&str, &str>, key: &str) -> f64 {
    m[key].parse().unwrap_or_else(|_| panic!("field {key}={} is not a number", m[key]))
}

/// Worst per-link load relative to capacity over every allocation snapshot
/// in a trace: `(link, time, load, capacity)` of the tightest one.
pub fn worst_link_load(trace: &str) -> Option<(String, f64, f64, f64)> {
    let mut caps: BTreeMap<String, f64> = BTreeMap::new();
    let mut snapshots: Vec<(f64, BTreeMap<String, f64>)> = Vec::new();
    for line in trace.lines() {
        let f = fields(line);
        match f.get("event").copied() {
            Some("link") => {
                caps.insert(f["id"].to_string(), num(&f, "capacity"));
            }
            Some("alloc") => snapshots.push((num(&f, "t"), BTreeMap::new())),
            Some("rate") => {
                let (_, loads) = snapshots.last_mut().expect("rate line outside a snapshot");
                let rate = num(&f, "rate");
                if f["links"] != "-" {
                    for l in f["links"].split(',') {
                        *loads.entry(l.to_string()).or_default() += rate;
                    }
                }
            }
            _ => {}
        }
    }
    let mut worst: Option<(String, f64, f64, f64)> = None;
    for (t, loads) in snapshots {
        for (l, load) in loads {
            let cap = caps[&l];
            if worst.as_ref().is_none_or(|w| load / cap > w.2 / w.3) {
                worst = Some((l, t, load, cap));
            }
        }
    }
    worst
}

/// Brute-force pre-copy iterator: round durations, residual and whether the
/// dirty set fell under the threshold. `rate` is in bit/s, sizes in bytes.
pub fn brute_precopy(mem: f64, rate: f64, dirty: f64, threshold: f64, max_rounds: u32) -> (Vec<f64>, f64, bool) {
    let mut rounds = Vec::new();
    let mut payload = mem;
    loop {
        let t = payload * 8.0 / rate;
        rounds.push(t);
        let next = dirty * t;
        if next <= threshold {
            return (rounds, next, true);
        }
        if rounds.len() as u32 == max_rounds {
            return (rounds, next, false);
        }
        payload = next;
    }
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}
