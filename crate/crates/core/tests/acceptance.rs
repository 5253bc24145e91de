//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_precopy, fields, num, rel_err, run, worst_link_load};
use migrasim::migration::{check_feasibility, NetworkContinuity, WARN_HIGH_LINK_SPEED};
use migrasim::net::{allocate_bandwidth, Demand, Flow, FlowId, HostRole, Path};
use migrasim::report::{migrations_csv, requests_csv, sessions_csv};
use migrasim::services::mean_latency;
use migrasim::units::{GBPS, MIB};
use migrasim::{
    execute_migration, run_scenario, MigrationMode, MigrationPlan, MobilityMode, Settings, SimTime, Topology, VmId,
    VmSpec,
};

/// Operating point window around 4.0 s.
const OPERATING_T_TOTAL: f64 = 4.0;
const OPERATING_T_TOTAL_REL: f64 = 0.10;
const OPERATING_MAX_DOWNTIME: f64 = 0.2;
const OPERATING_SESSION_TIMEOUT: f64 = 0.5;
const OPERATING_MAX_WALL: f64 = 1.0;
const ORACLE_TUPLES: usize = 200;
const ORACLE_REL: f64 = 1e-9;
const DIVERGENT_TUPLES: usize = 100;
/// Trace rates carry nine significant digits.
const TRACE_CAPACITY_REL: f64 = 1e-8;
const MAXMIN_REL: f64 = 1e-9;
const CDN_GAIN: f64 = 0.015;
const CDN_TOL: f64 = 1e-12;

type Verdict = Result<String, String>;
type Criterion = (&'static str, fn() -> Verdict);

fn operating_point() -> Verdict {
    let scenario = common::load("operating_point");
    let started = Instant::now();
    let out = run_scenario(&scenario).map_err(|e| e.to_string())?;
    let wall = started.elapsed().as_secs_f64();
    let m = out.migrations.first().ok_or("no migration row")?;
    let dropped: Vec<&str> = out
        .sessions
        .iter()
        .filter(|s| s.timeout >= OPERATING_SESSION_TIMEOUT && s.dropped())
        .map(|s| s.name.as_str())
        .collect();
    let detail = format!(
        "t_total={:.6}s (want {OPERATING_T_TOTAL}s +/- {}%), t_downtime={:.6}s, dropped={}, wall={wall:.3}s",
        m.t_total,
        OPERATING_T_TOTAL_REL * 100.0,
        m.t_downtime,
        dropped.len()
    );
    let ok = (m.t_total - OPERATING_T_TOTAL).abs() <= OPERATING_T_TOTAL_REL * OPERATING_T_TOTAL
        && m.t_downtime < OPERATING_MAX_DOWNTIME
        && m.completed
        && dropped.is_empty()
        && wall < OPERATING_MAX_WALL;
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn feasibility_topology() -> Topology {
    let mut t = Topology::new();
    t.add_host("a1", "s1", Some("sanA"), HostRole::Hypervisor).unwrap();
    t.add_host("a2", "s1", Some("sanA"), HostRole::Hypervisor).unwrap();
    t.add_host("b1", "s1", Some("sanB"), HostRole::Hypervisor).unwrap();
    t.add_host("c1", "s2", Some("sanC"), HostRole::Hypervisor).unwrap();
    t.add_link("a1", "a2", GBPS, 1e-4).unwrap();
    t.add_link("a1", "b1", 100e6, 1e-4).unwrap();
    t.add_link("a1", "c1", 10.0 * GBPS, 1e-3).unwrap();
    t
}

fn feasibility_table() -> Verdict {
    let topo = feasibility_topology();
    let a1 = topo.host_id("a1").unwrap();
    let vm = VmSpec {
        name: "vm".into(),
        host: a1,
        mem_bytes: 512.0 * MIB,
        disk_bytes: 1024.0 * MIB,
        context_bytes: 16.0 * MIB,
        cpu_state_bytes: 8.0 * MIB,
        dirty_rate: MIB,
    };
    let plan = |to: &str, mode, mobility| MigrationPlan {
        vm: VmId(0),
        src: a1,
        dst: topo.host_id(to).unwrap(),
        mode,
        mobility,
        start_at: SimTime::ZERO,
        stop_threshold_bytes: 4.0 * MIB,
        max_rounds: 30,
    };
    let check = |p: &MigrationPlan| check_feasibility(p, &topo, std::slice::from_ref(&vm), GBPS).unwrap();
    let mut failures = Vec::new();

    let r = check(&plan("a2", MigrationMode::SharedStorage, MobilityMode::Arp));
    if !(r.feasible && r.network_continuity == NetworkContinuity::ArpBroadcast && r.warnings.is_empty()) {
        failures.push(format!("shared/same SAN/arp: {r:?}"));
    }
    let r = check(&plan("b1", MigrationMode::SharedStorage, MobilityMode::Arp));
    if r.feasible {
        failures.push(format!("shared across SANs: {r:?}"));
    }
    let r = check(&plan("b1", MigrationMode::ContextTransfer, MobilityMode::Arp));
    if !(r.feasible && r.warnings == [WARN_HIGH_LINK_SPEED.to_string()]) {
        failures.push(format!("full over 100 Mbit/s: {r:?}"));
    }
    let r = check(&plan("c1", MigrationMode::ContextTransfer, MobilityMode::Arp));
    if r.feasible {
        failures.push(format!("full cross-subnet arp: {r:?}"));
    }
    if failures.is_empty() {
        Ok("4/4 outcomes match".into())
    } else {
        Err(failures.join("; "))
    }
}

fn dedicated_path(rate: f64) -> Topology {
    let mut t = Topology::new();
    t.add_host("src", "s1", Some("san"), HostRole::Hypervisor).unwrap();
    t.add_host("dst", "s1", Some("san"), HostRole::Hypervisor).unwrap();
    t.add_link("src", "dst", rate, 0.0).unwrap();
    t
}

fn run_dedicated(
    mem: f64,
    rate: f64,
    dirty: f64,
    threshold: f64,
    max_rounds: u32,
    settings: &Settings,
) -> Result<migrasim::MigrationOutcome, String> {
    let topo = dedicated_path(rate);
    let src = topo.host_id("src").unwrap();
    let vm = VmSpec {
        name: "vm".into(),
        host: src,
        mem_bytes: mem,
        disk_bytes: 0.0,
        context_bytes: 0.0,
        cpu_state_bytes: 8.0 * MIB,
        dirty_rate: dirty,
    };
    let plan = MigrationPlan {
        vm: VmId(0),
        src,
        dst: topo.host_id("dst").unwrap(),
        mode: MigrationMode::SharedStorage,
        mobility: MobilityMode::Arp,
        start_at: SimTime::ZERO,
        stop_threshold_bytes: threshold,
        max_rounds,
    };
    execute_migration(&topo, vm, plan, settings).map_err(|e| e.to_string())
}

fn precopy_oracle() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0003);
    let settings = Settings::default();
    let mut worst = 0.0f64;
    for i in 0..ORACLE_TUPLES {
        let mem = rng.gen_range(16.0..8192.0) * MIB;
        let rate = rng.gen_range(0.1..40.0) * GBPS;
        let dirty = rng.gen_range(0.0..0.98) * rate / 8.0;
        let threshold = rng.gen_range(0.5..64.0) * MIB;
        let max_rounds = rng.gen_range(1..=40);
        let out = run_dedicated(mem, rate, dirty, threshold, max_rounds, &settings)?;
        let (rounds, residual, converged) = brute_precopy(mem, rate, dirty, threshold, max_rounds);
        let t_total = rounds.iter().sum::<f64>() + (residual + 8.0 * MIB) * 8.0 / rate + settings.arp_delay;
        let tuple = format!("tuple {i} (V={mem}, R={rate}, D={dirty}, thr={threshold}, max={max_rounds})");
        if out.round_durations.len() != rounds.len() || out.converged != converged {
            return Err(format!(
                "{tuple}: {} rounds converged={} vs oracle {} rounds converged={converged}",
                out.round_durations.len(),
                out.converged,
                rounds.len()
            ));
        }
        for (k, (a, b)) in out.round_durations.iter().zip(&rounds).enumerate() {
            worst = worst.max(rel_err(*a, *b));
            if rel_err(*a, *b) > ORACLE_REL {
                return Err(format!("{tuple}: round {} took {a} vs oracle {b}", k + 1));
            }
        }
        worst = worst.max(rel_err(out.t_total, t_total));
        if rel_err(out.t_total, t_total) > ORACLE_REL {
            return Err(format!("{tuple}: t_total {} vs oracle {t_total}", out.t_total));
        }
    }
    Ok(format!("{ORACLE_TUPLES} tuples, worst relative error {worst:.3e}"))
}

fn non_convergence() -> Verdict {
    let settings = Settings::default();
    let mut cases = vec![(1024.0 * MIB, 100.0 * MIB * 8.0, 100.0 * MIB, 4.0 * MIB, 5u32)];
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0004);
    for _ in 0..DIVERGENT_TUPLES {
        let rate = rng.gen_range(0.1..10.0) * GBPS;
        let threshold = rng.gen_range(0.5..64.0) * MIB;
        cases.push((
            threshold * rng.gen_range(1.01..512.0),
            rate,
            rng.gen_range(1.0..4.0) * rate / 8.0,
            threshold,
            rng.gen_range(1..=30),
        ));
    }
    for (mem, rate, dirty, threshold, max_rounds) in cases {
        let out = run_dedicated(mem, rate, dirty, threshold, max_rounds, &settings)?;
        if out.converged || out.rounds() != max_rounds as usize || !out.t_total.is_finite() || !out.completed {
            return Err(format!(
                "V={mem} R={rate} D={dirty} max={max_rounds}: converged={} rounds={} t_total={}",
                out.converged,
                out.rounds(),
                out.t_total
            ));
        }
    }
    Ok(format!("{} divergent plans stopped at max_rounds", DIVERGENT_TUPLES + 1))
}

/// Independent progressive filling: raise every unfrozen flow to a common
/// level until a link or a demand binds.
fn filling_oracle(topo: &Topology, flows: &[Flow]) -> Vec<f64> {
    let n = flows.len();
    let mut rate = vec![0.0; n];
    let mut done: Vec<bool> = flows.iter().map(|f| f.path.links.is_empty()).collect();
    for (i, f) in flows.iter().enumerate() {
        if done[i] {
            rate[i] = if let Demand::Bounded(d) = f.demand { d } else { 0.0 };
        }
    }
    while done.iter().any(|d| !d) {
        let mut level = f64::INFINITY;
        for (id, link) in topo.links() {
            let mut fixed = 0.0;
            let mut crossings = 0usize;
            for (i, f) in flows.iter().enumerate() {
                let k = f.path.links.iter().filter(|l| **l == id).count();
                if done[i] {
                    fixed += k as f64 * rate[i];
                } else {
                    crossings += k;
                }
            }
            if crossings > 0 {
                level = level.min((link.capacity - fixed) / crossings as f64);
            }
        }
        for (i, f) in flows.iter().enumerate() {
            if !done[i] {
                level = level.min(f.demand.cap());
            }
        }
        for i in 0..n {
            if !done[i] {
                rate[i] = level;
            }
        }
        for (i, f) in flows.iter().enumerate() {
            if done[i] {
                continue;
            }
            let at_demand = f.demand.cap() <= level * (1.0 + 1e-12);
            let saturated = f.path.links.iter().any(|&l| {
                let load: f64 = flows
                    .iter()
                    .enumerate()
                    .map(|(j, g)| g.path.links.iter().filter(|x| **x == l).count() as f64 * rate[j])
                    .sum();
                load >= topo.link(l).capacity * (1.0 - 1e-12)
            });
            if at_demand || saturated {
                done[i] = true;
            }
        }
    }
    rate
}

fn flow(id: u64, topo: &Topology, path: Path, demand: Demand) -> Flow {
    let _ = topo;
    Flow {
        id: FlowId(id),
        src: path.hosts[0],
        dst: *path.hosts.last().unwrap(),
        path,
        demand,
        allocated_rate: 0.0,
    }
}

fn hand_built() -> Vec<(&'static str, Topology, Vec<Flow>)> {
    let mut cases = Vec::new();

    // Parking lot: one long flow against three single-hop flows.
    let mut t = Topology::new();
    for h in ["a", "b", "c", "d"] {
        t.add_host(h, "s", None, HostRole::Router).unwrap();
    }
    t.add_link("a", "b", 10.0, 0.001).unwrap();
    t.add_link("b", "c", 10.0, 0.001).unwrap();
    t.add_link("c", "d", 4.0, 0.001).unwrap();
    let p = |t: &Topology, x: &str, y: &str| t.shortest_path(t.host_id(x).unwrap(), t.host_id(y).unwrap()).unwrap();
    let flows = vec![
        flow(0, &t, p(&t, "a", "d"), Demand::Elastic),
        flow(1, &t, p(&t, "a", "b"), Demand::Elastic),
        flow(2, &t, p(&t, "b", "c"), Demand::Elastic),
        flow(3, &t, p(&t, "c", "d"), Demand::Elastic),
    ];
    cases.push(("parking-lot", t, flows));

    // Single link, one bounded and one elastic flow.
    let mut t = Topology::new();
    t.add_host("x", "s", None, HostRole::Router).unwrap();
    t.add_host("y", "s", None, HostRole::Router).unwrap();
    t.add_link("x", "y", 1.0, 0.001).unwrap();
    let flows = vec![
        flow(0, &t, p(&t, "x", "y"), Demand::Bounded(0.3)),
        flow(1, &t, p(&t, "y", "x"), Demand::Elastic),
    ];
    cases.push(("bounded-plus-elastic", t, flows));

    // Star with a folded triangle path that crosses the hub link twice.
    let mut t = Topology::new();
    for h in ["ha", "fa", "r", "c"] {
        t.add_host(h, "s", None, HostRole::Router).unwrap();
    }
    t.add_link("c", "r", 100.0, 0.002).unwrap();
    t.add_link("r", "ha", 40.0, 0.004).unwrap();
    t.add_link("r", "fa", 60.0, 0.003).unwrap();
    let triangle = p(&t, "c", "ha").join(&p(&t, "ha", "fa"));
    let flows = vec![
        flow(0, &t, triangle, Demand::Elastic),
        flow(1, &t, p(&t, "c", "fa"), Demand::Bounded(10.0)),
        flow(2, &t, p(&t, "ha", "fa"), Demand::Elastic),
        flow(3, &t, p(&t, "c", "ha"), Demand::Elastic),
    ];
    cases.push(("folded-triangle", t, flows));
    cases
}

fn bandwidth_conservation() -> Verdict {
    let mut notes = Vec::new();
    for (name, scenario) in common::suite() {
        let out = run_scenario(&scenario).map_err(|e| format!("{name}: {e}"))?;
        if let Some((link, t, load, cap)) = worst_link_load(&out.trace) {
            if load > cap * (1.0 + TRACE_CAPACITY_REL) {
                return Err(format!("{name}: link {link} carries {load} > {cap} at t={t}"));
            }
        }
        notes.push(name);
    }
    for (name, topo, flows) in hand_built() {
        let got = allocate_bandwidth(&topo, &flows);
        let want = filling_oracle(&topo, &flows);
        for (i, (g, w)) in got.iter().zip(&want).enumerate() {
            if rel_err(*g, *w) > MAXMIN_REL {
                return Err(format!("{name}: flow {i} got {g}, progressive filling gives {w}"));
            }
        }
    }
    Ok(format!("{} suite traces within capacity, 3 topologies match progressive filling", notes.len()))
}

fn mobility_correctness() -> Verdict {
    let scenario = common::load("mip_cross_subnet");
    let model = scenario.model().map_err(|e| e.to_string())?;
    let out = run("mip_cross_subnet");
    let switch_at = out.switchovers.first().copied().flatten().ok_or("mip migration never switched over")?;
    let src = model.topo.name(model.migrations[0].plan.src).to_string();
    let dst = model.topo.name(model.migrations[0].plan.dst).to_string();
    let mut late_to_src = 0.0;
    let mut late_to_dst = 0.0;
    for line in out.trace.lines() {
        let f = fields(line);
        if f.get("event") != Some(&"deliver") || f.get("class") != Some(&"session") {
            continue;
        }
        if num(&f, "t") > switch_at {
            if f["dst"] == src {
                late_to_src += num(&f, "bytes");
            } else if f["dst"] == dst {
                late_to_dst += num(&f, "bytes");
            }
        }
    }
    if late_to_src != 0.0 || late_to_dst <= 0.0 {
        return Err(format!("after switchover: {late_to_src} B to source, {late_to_dst} B to destination"));
    }
    let topo = &model.topo;
    let client = model.sessions[0].client;
    let ha = model.home_hosts[0];
    let fa = model.migrations[0].plan.dst;
    let seg = |a, b| topo.path_latency(&topo.shortest_path(a, b).unwrap());
    let triangle = seg(client, ha) + seg(ha, fa) + seg(fa, fa);
    if out.session_latency[0] != triangle {
        return Err(format!("mip latency {} != triangle {triangle}", out.session_latency[0]));
    }

    let arp_model = common::load("arp_same_subnet").model().map_err(|e| e.to_string())?;
    let arp = run("arp_same_subnet");
    let t = &arp_model.topo;
    let direct = t.path_latency(&t.shortest_path(arp_model.sessions[0].client, arp_model.migrations[0].plan.dst).unwrap());
    if arp.session_latency[0] != direct {
        return Err(format!("arp latency {} != direct {direct}", arp.session_latency[0]));
    }
    Ok(format!(
        "0 B to source after t={switch_at}, triangle {triangle}s, direct {direct}s"
    ))
}

fn vcdn_direction() -> Verdict {
    let out = run("vcdn_closer");
    let m = out.migrations.first().ok_or("no migration")?;
    let switch_at = out.switchovers[0].ok_or("surrogate never switched over")?;
    let before = mean_latency(out.requests.iter().filter(|r| r.issued_at.secs() < m.t_start)).ok_or("no early requests")?;
    let after = mean_latency(out.requests.iter().filter(|r| r.issued_at.secs() >= switch_at)).ok_or("no late requests")?;
    let gain = before - after;
    let detail = format!("mean {before:.6}s -> {after:.6}s, gain {gain:.15}s");
    if (gain - CDN_GAIN).abs() <= CDN_TOL {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn determinism() -> Verdict {
    let suite = common::suite();
    for (name, scenario) in &suite {
        let a = run_scenario(scenario).map_err(|e| e.to_string())?;
        let b = run_scenario(scenario).map_err(|e| e.to_string())?;
        let same = migrations_csv(&a) == migrations_csv(&b)
            && sessions_csv(&a) == sessions_csv(&b)
            && requests_csv(&a) == requests_csv(&b)
            && a.trace == b.trace;
        if !same {
            return Err(format!("{name}: outputs differ between runs"));
        }
    }
    Ok(format!("{} scenarios byte-identical across two runs", suite.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 8] = [
        ("operating point", operating_point),
        ("feasibility table", feasibility_table),
        ("pre-copy oracle", precopy_oracle),
        ("non-convergence", non_convergence),
        ("bandwidth conservation", bandwidth_conservation),
        ("mobility", mobility_correctness),
        ("vcdn latency", vcdn_direction),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
