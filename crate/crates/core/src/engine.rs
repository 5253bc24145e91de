//! Scenario execution: the event loop, the piecewise-constant fluid flow
//! table and the glue between migrations, mobility and services.
//!
//! Every transfer is a fluid flow. Rates are recomputed (max-min) whenever
//! the active flow set changes, which only happens while dispatching
//! flow-start, flow-end and round-complete events. Between two such events
//! all rates are constant, so a bulk transfer's completion time is exact.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::migration::{MigrationOutcome, MigrationPlan, MigrationRun, Phase, Transfer, VmId, VmSpec};
use crate::mobility::{begin_mobility, client_route, complete_switchover, switchover_delay, Redirect};
use crate::net::{allocate_bandwidth, Demand, Flow, FlowId, HostId, LinkId, NetError};
use crate::scenario::{Model, PlannedMigration, Scenario, ScenarioError, Settings};
use crate::services::{account_interruption, RequestRecord, Session, SessionState};
use crate::sim::{EventKey, EventKind, EventQueue, SimError, SimRng, SimTime};
use crate::units::sig9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RunError {
    #[error("{0}")]
    Invalid(#[from] ScenarioError),
    #[error("line {line}: migration of `{vm}` is infeasible: {}", reasons.join("; "))]
    Infeasible { line: usize, vm: String, reasons: Vec<String> },
    #[error("line {line}: {source}")]
    Budget { line: usize, source: SimError },
    #[error("internal simulation error: {0}")]
    Internal(String),
}

impl RunError {
    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Invalid(_) => 2,
            RunError::Infeasible { .. } => 3,
            RunError::Budget { .. } => 4,
            RunError::Internal(_) => 1,
        }
    }
}

impl From<NetError> for RunError {
    fn from(e: NetError) -> Self {
        RunError::Internal(e.to_string())
    }
}

/// What a flow carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowClass {
    Migration { migration: usize, phase: Phase },
    Session { session: usize },
}

/// One constant-rate stretch of a flow, from `from` to `to`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSegment {
    pub flow: FlowId,
    pub class: FlowClass,
    pub vm: VmId,
    pub src: HostId,
    pub dst: HostId,
    pub links: Vec<LinkId>,
    /// Bits per second.
    pub rate: f64,
    pub from: f64,
    pub to: f64,
}

impl FlowSegment {
    pub fn bytes(&self) -> f64 {
        self.rate * (self.to - self.from) / 8.0
    }
}

#[derive(Debug)]
struct Bulk {
    migration: usize,
    bytes: f64,
    /// Bytes still to send at the start of the current segment.
    remaining: f64,
    /// Time spent in earlier segments.
    elapsed: f64,
    /// Time the current segment needs to finish the transfer.
    finish_in: f64,
    completion: Option<EventKey>,
}

#[derive(Debug)]
struct FlowEntry {
    flow: Flow,
    class: FlowClass,
    vm: VmId,
    active: bool,
    seg_start: SimTime,
    bulk: Option<Bulk>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Payload {
    FlowStart(FlowId),
    FlowEnd(FlowId),
    Switchover(usize),
    RequestArrival { stream: usize, k: u64 },
    MigrationStart(usize),
    ScenarioEnd,
}

#[derive(Debug, Default)]
struct VmState {
    migrating: Option<usize>,
    in_downtime: bool,
    redirect: Option<Redirect>,
}

#[derive(Debug)]
struct SessionSlot {
    session: Session,
    flow: Option<FlowId>,
    route_latency: f64,
}

struct ActiveMigration {
    run: MigrationRun,
    redirect: Redirect,
    stop_copy_done: Option<SimTime>,
    line: usize,
}

/// Everything a run produced.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: String,
    pub seed: u64,
    pub vm_names: Vec<String>,
    pub host_names: Vec<String>,
    pub migrations: Vec<MigrationOutcome>,
    pub sessions: Vec<Session>,
    /// Route latency each session ended the run with.
    pub session_latency: Vec<f64>,
    pub requests: Vec<RequestRecord>,
    pub segments: Vec<FlowSegment>,
    /// Time of each completed switchover, per migration row.
    pub switchovers: Vec<Option<f64>>,
    pub trace: String,
    pub dispatched: u64,
}

struct Engine<'m> {
    model: &'m Model,
    queue: EventQueue<Payload>,
    flows: BTreeMap<FlowId, FlowEntry>,
    next_flow: u64,
    vms: Vec<VmState>,
    bindings: Vec<crate::mobility::AddressBinding>,
    sessions: Vec<SessionSlot>,
    migrations: Vec<Option<ActiveMigration>>,
    finished: Vec<Option<(MigrationOutcome, f64)>>,
    requests: Vec<RequestRecord>,
    segments: Vec<FlowSegment>,
    trace: String,
    rng: SimRng,
    vm_names: Vec<String>,
    names: Names,
}

/// Parses nothing, validates everything: builds the model, refuses
/// infeasible plans, then runs.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, RunError> {
    let model = scenario.model()?;
    if let Some(bad) = model.infeasible() {
        return Err(RunError::Infeasible {
            line: bad.line,
            vm: model.vms[bad.plan.vm.0].name.clone(),
            reasons: bad.report.blockers.clone(),
        });
    }
    simulate(&model)
}

/// Runs a validated model. Infeasible migrations must have been filtered
/// out by the caller; [`run_scenario`] does that.
pub fn simulate(model: &Model) -> Result<RunOutput, RunError> {
    Engine::new(model).run()
}

/// Runs one migration of `vm` in an otherwise empty world built on `topo`
/// and returns its outcome.
pub fn execute_migration(
    topo: &crate::net::Topology,
    vm: VmSpec,
    plan: MigrationPlan,
    settings: &Settings,
) -> Result<MigrationOutcome, RunError> {
    let report = crate::migration::check_feasibility(&plan, topo, std::slice::from_ref(&vm), settings.link_speed_threshold)
        .map_err(|e| RunError::Internal(e.to_string()))?;
    if !report.feasible {
        return Err(RunError::Infeasible { line: 0, vm: vm.name.clone(), reasons: report.blockers });
    }
    let model = Model {
        name: "execute".to_string(),
        topo: topo.clone(),
        home_hosts: vec![vm.host],
        vms: vec![vm],
        sessions: Vec::new(),
        contents: Vec::new(),
        requests: Vec::new(),
        migrations: vec![PlannedMigration { plan, report, line: 0 }],
        controller: Default::default(),
        settings: settings.clone(),
        duration: f64::MAX,
        seed: 0,
        run_line: 0,
    };
    let mut out = simulate(&model)?;
    out.migrations.pop().ok_or_else(|| RunError::Internal("migration did not start".into()))
}

impl<'m> Engine<'m> {
    fn new(model: &'m Model) -> Self {
        let bindings = model
            .vms
            .iter()
            .enumerate()
            .map(|(i, v)| crate::mobility::AddressBinding::new(VmId(i), model.home_hosts[i], v.host))
            .collect();
        let sessions = model
            .sessions
            .iter()
            .map(|s| SessionSlot { session: s.clone(), flow: None, route_latency: 0.0 })
            .collect();
        Engine {
            model,
            queue: EventQueue::with_budget(model.settings.max_events),
            flows: BTreeMap::new(),
            next_flow: 0,
            vms: model.vms.iter().map(|_| VmState::default()).collect(),
            bindings,
            sessions,
            migrations: model.migrations.iter().map(|_| None).collect(),
            finished: model.migrations.iter().map(|_| None).collect(),
            requests: Vec::new(),
            segments: Vec::new(),
            trace: String::new(),
            rng: SimRng::new(model.seed),
            vm_names: model.vm_names(),
            names: Names::new(model, &model.vm_names()),
        }
    }

    fn host(&self, h: HostId) -> &str {
        self.model.topo.name(h)
    }

    fn line(&mut self, now: SimTime, kind: &str, rest: std::fmt::Arguments<'_>) {
        let _ = writeln!(self.trace, "t={} event={} {}", sig9(now.secs()), kind, rest);
    }

    fn schedule(&mut self, at: SimTime, kind: EventKind, payload: Payload) -> Result<EventKey, RunError> {
        self.queue.schedule(at, kind, payload).map_err(|e| RunError::Internal(e.to_string()))
    }

    fn run(mut self) -> Result<RunOutput, RunError> {
        let model = self.model;
        let end = SimTime::new(model.duration).ok_or_else(|| RunError::Internal("bad duration".into()))?;
        for (id, link) in model.topo.links() {
            self.line(
                SimTime::ZERO,
                "link",
                format_args!(
                    "id=l{} a={} b={} capacity={} latency={}",
                    id.0,
                    model.topo.name(link.a),
                    model.topo.name(link.b),
                    sig9(link.capacity),
                    sig9(link.latency)
                ),
            );
        }
        self.schedule(end, EventKind::ScenarioEnd, Payload::ScenarioEnd)?;
        for i in 0..self.sessions.len() {
            self.start_session(i, SimTime::ZERO)?;
        }
        for (i, m) in model.migrations.iter().enumerate() {
            self.schedule(m.plan.start_at, EventKind::MigrationStart, Payload::MigrationStart(i))?;
        }
        for (i, r) in model.requests.iter().enumerate() {
            if let Some(t0) = r.nth(0) {
                self.schedule(SimTime::from_secs(t0), EventKind::RequestArrival, Payload::RequestArrival { stream: i, k: 0 })?;
            }
        }

        loop {
            let event = match self.queue.pop_until(end) {
                Ok(Some(ev)) => ev,
                Ok(None) => break,
                Err(e @ SimError::BudgetExceeded { .. }) => {
                    return Err(RunError::Budget { line: model.run_line, source: e });
                }
                Err(e) => return Err(RunError::Internal(e.to_string())),
            };
            let now = event.at;
            match event.payload {
                Payload::FlowStart(fid) => self.on_flow_start(fid, now)?,
                Payload::FlowEnd(fid) => self.on_flow_end(fid, event.kind, now)?,
                Payload::Switchover(mi) => self.on_switchover(mi, now)?,
                Payload::RequestArrival { stream, k } => self.on_request(stream, k, now)?,
                Payload::MigrationStart(mi) => self.on_migration_start(mi, now)?,
                Payload::ScenarioEnd => {
                    self.finish(now);
                    break;
                }
            }
        }
        Ok(self.into_output())
    }

    // ---- fluid flow table -------------------------------------------------

    #[allow(clippy::too_many_arguments)]
    fn add_flow(
        &mut self,
        src: HostId,
        dst: HostId,
        path: crate::net::Path,
        demand: Demand,
        class: FlowClass,
        vm: VmId,
        bulk: Option<(usize, f64)>,
        now: SimTime,
    ) -> Result<FlowId, RunError> {
        let id = FlowId(self.next_flow);
        self.next_flow += 1;
        let bulk = bulk.map(|(migration, bytes)| Bulk {
            migration,
            bytes,
            remaining: bytes,
            elapsed: 0.0,
            finish_in: f64::INFINITY,
            completion: None,
        });
        self.flows.insert(
            id,
            FlowEntry {
                flow: Flow { id, src, dst, path, demand, allocated_rate: 0.0 },
                class,
                vm,
                active: false,
                seg_start: now,
                bulk,
            },
        );
        self.schedule(now, EventKind::FlowStart, Payload::FlowStart(id))?;
        Ok(id)
    }

    /// Closes the entry's current segment at `now`.
    fn close_segment(segments: &mut Vec<FlowSegment>, trace: &mut String, names: &Names, e: &mut FlowEntry, now: SimTime) {
        let dt = now - e.seg_start;
        if let Some(b) = e.bulk.as_mut() {
            b.remaining = (b.remaining - e.flow.allocated_rate * dt / 8.0).max(0.0);
            b.elapsed += dt;
        }
        if dt > 0.0 && e.active {
            let seg = FlowSegment {
                flow: e.flow.id,
                class: e.class,
                vm: e.vm,
                src: e.flow.src,
                dst: e.flow.dst,
                links: e.flow.path.links.clone(),
                rate: e.flow.allocated_rate,
                from: e.seg_start.secs(),
                to: now.secs(),
            };
            let _ = writeln!(
                trace,
                "t={} event=deliver flow=f{} {} vm={} dst={} from={} bytes={}",
                sig9(now.secs()),
                seg.flow.0,
                names.class(&seg.class),
                names.vms[seg.vm.0],
                names.hosts[seg.dst.0],
                sig9(seg.from),
                sig9(seg.bytes())
            );
            segments.push(seg);
        }
        e.seg_start = now;
    }

    /// Recomputes max-min rates and reschedules affected completions.
    fn reallocate(&mut self, now: SimTime) -> Result<(), RunError> {
        let names = &self.names;
        let ids: Vec<FlowId> = self.flows.iter().filter(|(_, e)| e.active).map(|(id, _)| *id).collect();
        let snapshot: Vec<Flow> = ids.iter().map(|id| self.flows[id].flow.clone()).collect();
        let rates = allocate_bandwidth(&self.model.topo, &snapshot);
        let _ = writeln!(self.trace, "t={} event=alloc flows={}", sig9(now.secs()), ids.len());
        for (id, &rate) in ids.iter().zip(&rates) {
            let e = self.flows.get_mut(id).expect("active flow");
            if e.flow.allocated_rate != rate || e.seg_start == now {
                Self::close_segment(&mut self.segments, &mut self.trace, names, e, now);
                e.flow.allocated_rate = rate;
                if let Some(b) = e.bulk.as_mut() {
                    if let Some(key) = b.completion.take() {
                        self.queue.cancel(key);
                    }
                    b.finish_in = if b.remaining == 0.0 {
                        0.0
                    } else if rate > 0.0 {
                        b.remaining * 8.0 / rate
                    } else {
                        f64::INFINITY
                    };
                    if b.finish_in.is_finite() {
                        let kind = match e.class {
                            FlowClass::Migration { phase: Phase::Round(_), .. } => EventKind::RoundComplete,
                            _ => EventKind::FlowEnd,
                        };
                        let key = self
                            .queue
                            .schedule(now + b.finish_in, kind, Payload::FlowEnd(*id))
                            .map_err(|e| RunError::Internal(e.to_string()))?;
                        b.completion = Some(key);
                    }
                }
            }
            let links: Vec<String> = e.flow.path.links.iter().map(|l| format!("l{}", l.0)).collect();
            let _ = writeln!(
                self.trace,
                "t={} event=rate flow=f{} {} vm={} src={} dst={} rate={} links={}",
                sig9(now.secs()),
                id.0,
                names.class(&e.class),
                names.vms[e.vm.0],
                names.hosts[e.flow.src.0],
                names.hosts[e.flow.dst.0],
                sig9(rate),
                if links.is_empty() { "-".to_string() } else { links.join(",") }
            );
        }
        Ok(())
    }

    fn on_flow_start(&mut self, fid: FlowId, now: SimTime) -> Result<(), RunError> {
        let names = &self.names;
        let Some(e) = self.flows.get_mut(&fid) else { return Ok(()) };
        e.active = true;
        e.seg_start = now;
        let bytes = e.bulk.as_ref().map_or(String::new(), |b| format!(" bytes={}", sig9(b.bytes)));
        let _ = writeln!(
            self.trace,
            "t={} event=flow-start flow=f{} {} vm={} src={} dst={} demand={}{}",
            sig9(now.secs()),
            fid.0,
            names.class(&e.class),
            names.vms[e.vm.0],
            names.hosts[e.flow.src.0],
            names.hosts[e.flow.dst.0],
            match e.flow.demand {
                Demand::Elastic => "elastic".to_string(),
                Demand::Bounded(r) => sig9(r),
            },
            bytes
        );
        self.reallocate(now)
    }

    fn on_flow_end(&mut self, fid: FlowId, kind: EventKind, now: SimTime) -> Result<(), RunError> {
        let names = &self.names;
        let Some(mut e) = self.flows.remove(&fid) else { return Ok(()) };
        // A completing bulk flow gets its stored finish time rather than the
        // clock difference, so constant-rate phases are exact.
        let finished = e.bulk.as_ref().map(|b| (b.migration, b.bytes, b.elapsed + b.finish_in));
        if let Some(b) = e.bulk.as_mut() {
            if let Some(key) = b.completion.take() {
                self.queue.cancel(key);
            }
        }
        Self::close_segment(&mut self.segments, &mut self.trace, names, &mut e, now);
        let detail = match (&e.class, finished) {
            (FlowClass::Migration { .. }, Some((_, bytes, duration))) => {
                format!(" bytes={} duration={}", sig9(bytes), sig9(duration))
            }
            _ => String::new(),
        };
        let _ = writeln!(
            self.trace,
            "t={} event={} flow=f{} {} vm={}{}",
            sig9(now.secs()),
            kind,
            fid.0,
            names.class(&e.class),
            names.vms[e.vm.0],
            detail
        );
        self.reallocate(now)?;
        if let Some((mi, bytes, duration)) = finished {
            self.transfer_done(mi, bytes, duration, now)?;
        }
        Ok(())
    }

    // ---- migrations -------------------------------------------------------

    fn on_migration_start(&mut self, mi: usize, now: SimTime) -> Result<(), RunError> {
        let pm = &self.model.migrations[mi];
        let plan = pm.plan.clone();
        let vm = plan.vm;
        if let Some(other) = self.vms[vm.0].migrating {
            return Err(RunError::Invalid(ScenarioError {
                line: pm.line,
                column: 1,
                message: format!(
                    "migration of `{}` at t={}s overlaps the one from line {}",
                    self.vm_names[vm.0],
                    plan.start_at.secs(),
                    self.model.migrations[other].line
                ),
            }));
        }
        if self.bindings[vm.0].current_host != plan.src {
            return Err(RunError::Internal(format!("vm `{}` is not on its planned source", self.vm_names[vm.0])));
        }
        let redirect = begin_mobility(&plan, &self.bindings[vm.0], &self.model.topo, &self.model.settings.mobility(), now)?;
        let tunnel = match &redirect {
            Redirect::Tunnel(t) => format!(
                " ha={} fa={} setup_cost={}",
                self.host(t.ha),
                self.host(t.fa),
                sig9(t.setup_cost)
            ),
            Redirect::Arp { delay } => format!(" arp_delay={}", sig9(*delay)),
        };
        let line = format!(
            "vm={} src={} dst={} mode={} mobility={}{}",
            self.vm_names[vm.0],
            self.host(plan.src),
            self.host(plan.dst),
            plan.mode.as_str(),
            plan.mobility.as_str(),
            tunnel
        );
        self.line(now, "migration-start", format_args!("{line}"));
        self.vms[vm.0].migrating = Some(mi);
        let mut run = MigrationRun::new(plan, pm.report.warnings.clone());
        let first = run.start(&self.model.vms[vm.0]);
        self.migrations[mi] = Some(ActiveMigration { run, redirect, stop_copy_done: None, line: pm.line });
        self.start_transfer(mi, first, now)
    }

    fn start_transfer(&mut self, mi: usize, t: Transfer, now: SimTime) -> Result<(), RunError> {
        let m = self.migrations[mi].as_ref().expect("running migration");
        let (src, dst, vm) = (m.run.plan.src, m.run.plan.dst, m.run.plan.vm);
        let path = self.model.topo.shortest_path(src, dst)?;
        self.add_flow(
            src,
            dst,
            path,
            Demand::Elastic,
            FlowClass::Migration { migration: mi, phase: t.phase },
            vm,
            Some((mi, t.bytes)),
            now,
        )?;
        Ok(())
    }

    fn transfer_done(&mut self, mi: usize, bytes: f64, duration: f64, now: SimTime) -> Result<(), RunError> {
        let vm_id = self.migrations[mi].as_ref().expect("running migration").run.plan.vm;
        let vm = &self.model.vms[vm_id.0];
        let m = self.migrations[mi].as_mut().expect("running migration");
        match m.run.transfer_done(vm, bytes, duration) {
            Some(next) if next.phase == Phase::StopCopy => {
                m.run.downtime_start = Some(now);
                self.vms[vm_id.0].in_downtime = true;
                self.pause_sessions(vm_id, now)?;
                self.start_transfer(mi, next, now)
            }
            Some(next) => self.start_transfer(mi, next, now),
            None => {
                m.stop_copy_done = Some(now);
                let delay = switchover_delay(&m.redirect, now);
                self.schedule(now + delay, EventKind::Switchover, Payload::Switchover(mi))?;
                Ok(())
            }
        }
    }

    fn on_switchover(&mut self, mi: usize, now: SimTime) -> Result<(), RunError> {
        let mut m = self.migrations[mi].take().expect("running migration");
        let vm = m.run.plan.vm;
        let stop_done = m.stop_copy_done.expect("stop-and-copy finished");
        if let Some(Redirect::Tunnel(old)) = self.vms[vm.0].redirect.as_mut() {
            old.tear_down();
        }
        let t_redirect = complete_switchover(&mut self.bindings[vm.0], &m.redirect, m.run.plan.dst, stop_done);
        m.run.finish(t_redirect);
        let epoch = self.bindings[vm.0].epoch;
        let line = format!(
            "vm={} mode={} t_redirect={} epoch={} host={}",
            self.vm_names[vm.0],
            m.run.plan.mobility.as_str(),
            sig9(t_redirect),
            epoch,
            self.host(m.run.plan.dst)
        );
        self.line(now, "switchover", format_args!("{line}"));
        let state = &mut self.vms[vm.0];
        state.in_downtime = false;
        state.migrating = None;
        state.redirect = Some(m.redirect);
        let window = (m.run.downtime_start.expect("downtime started"), now);
        for i in 0..self.sessions.len() {
            if self.sessions[i].session.vm != vm {
                continue;
            }
            account_interruption(&mut self.sessions[i].session, vm, window);
            if !self.sessions[i].session.dropped() {
                self.start_session(i, now)?;
            } else {
                let line = format!("session={} vm={}", self.sessions[i].session.name, self.vm_names[vm.0]);
                self.line(now, "session-drop", format_args!("{line}"));
            }
        }
        let _ = m.line;
        self.finished[mi] = Some((m.run.outcome, now.secs()));
        Ok(())
    }

    // ---- sessions and requests -------------------------------------------

    fn start_session(&mut self, i: usize, now: SimTime) -> Result<(), RunError> {
        let (client, vm, demand) = {
            let s = &self.sessions[i].session;
            (s.client, s.vm, s.demand)
        };
        let binding = &self.bindings[vm.0];
        let route = client_route(&self.model.topo, client, binding)?;
        let dst = binding.current_host;
        self.sessions[i].route_latency = route.latency;
        let fid = self.add_flow(client, dst, route.path, demand, FlowClass::Session { session: i }, vm, None, now)?;
        self.sessions[i].flow = Some(fid);
        self.sessions[i].session.state = SessionState::Active;
        Ok(())
    }

    fn pause_sessions(&mut self, vm: VmId, now: SimTime) -> Result<(), RunError> {
        for i in 0..self.sessions.len() {
            if self.sessions[i].session.vm != vm {
                continue;
            }
            if let Some(fid) = self.sessions[i].flow.take() {
                self.schedule(now, EventKind::FlowEnd, Payload::FlowEnd(fid))?;
            }
            if !self.sessions[i].session.dropped() {
                self.sessions[i].session.state = SessionState::Interrupted;
            }
        }
        Ok(())
    }

    fn on_request(&mut self, stream: usize, k: u64, now: SimTime) -> Result<(), RunError> {
        let model = self.model;
        let r = &model.requests[stream];
        let vms = &self.vms;
        let rec = model
            .controller
            .handle_request(
                &model.topo,
                r.client,
                &r.content,
                &model.contents,
                &self.bindings,
                &self.vm_names,
                |vm: VmId| vms[vm.0].in_downtime,
                now,
            )
            .map_err(|e| RunError::Internal(e.to_string()))?;
        let line = format!(
            "client={} content={} served_by={} latency={}",
            self.host(rec.client),
            rec.content,
            self.vm_names[rec.served_by.0],
            sig9(rec.latency)
        );
        self.line(now, "request-arrival", format_args!("{line}"));
        self.requests.push(rec);
        if let Some(next) = r.nth(k + 1) {
            self.schedule(
                SimTime::from_secs(next),
                EventKind::RequestArrival,
                Payload::RequestArrival { stream, k: k + 1 },
            )?;
        }
        Ok(())
    }

    // ---- wrap-up ----------------------------------------------------------

    fn finish(&mut self, now: SimTime) {
        let names = &self.names;
        for e in self.flows.values_mut() {
            Self::close_segment(&mut self.segments, &mut self.trace, names, e, now);
        }
        for slot in &mut self.sessions {
            if slot.session.state == SessionState::Active {
                slot.session.state = SessionState::Completed;
            }
        }
        for mi in 0..self.migrations.len() {
            if let Some(mut m) = self.migrations[mi].take() {
                m.run.abandon();
                self.finished[mi] = Some((m.run.outcome, f64::NAN));
            }
        }
        // The seed is recorded even though no current model draws from it.
        let seed = self.rng.seed();
        let dispatched = self.queue.dispatched();
        self.line(now, "scenario-end", format_args!("seed={seed} events={dispatched}"));
    }

    fn into_output(self) -> RunOutput {
        let mut migrations = Vec::new();
        let mut switchovers = Vec::new();
        for (outcome, at) in self.finished.into_iter().flatten() {
            switchovers.push(at.is_finite().then_some(at));
            migrations.push(outcome);
        }
        RunOutput {
            scenario: self.model.name.clone(),
            seed: self.model.seed,
            vm_names: self.vm_names,
            host_names: self.model.topo.hosts().map(|(_, h)| h.name.clone()).collect(),
            migrations,
            session_latency: self.sessions.iter().map(|s| s.route_latency).collect(),
            sessions: self.sessions.into_iter().map(|s| s.session).collect(),
            requests: self.requests,
            segments: self.segments,
            switchovers,
            trace: self.trace,
            dispatched: self.queue.dispatched(),
        }
    }
}

/// Name tables for trace lines.
struct Names {
    vms: Vec<String>,
    hosts: Vec<String>,
    sessions: Vec<String>,
}

impl Names {
    fn new(model: &Model, vms: &[String]) -> Self {
        Names {
            vms: vms.to_vec(),
            hosts: model.topo.hosts().map(|(_, h)| h.name.clone()).collect(),
            sessions: model.sessions.iter().map(|s| s.name.clone()).collect(),
        }
    }

    fn class(&self, c: &FlowClass) -> String {
        match c {
            FlowClass::Migration { phase, .. } => format!("class=migration phase={phase}"),
            FlowClass::Session { session } => format!("class=session session={}", self.sessions[*session]),
        }
    }
}
