//! Scenario files: a line-oriented grammar of `directive [arg] key=value...`
//! with `#` comments.
//!
//! ```text
//! host <id> subnet=<id> [san=<id>] [role=router|client|controller]
//! link <a> <b> bw=<N><Kbps|Mbps|Gbps> lat=<N><ms|s>
//! vm <id> host=<h> mem=<size> [disk=<size>] [context=<size>] [cpu=<size>] dirty=<rate> [home=<h>]
//! session <id> client=<h> vm=<v> rate=<bw>|elastic timeout=<time>
//! content <id> origin=<vm> surrogates=<vm,vm,...>
//! request client=<h> content=<id> at=<time> [every=<time> [until=<time>]]
//! migrate <vm> to=<h> at=<time> mode=shared|full mobility=arp|mip [threshold=<size>] [max_rounds=N]
//! set arp_delay=<time> | crypto_overhead=<time> | link_speed_threshold=<bw> | stop_threshold=<size> | max_rounds=N | max_events=N
//! run duration=<time> seed=<N>
//! scenario <name>
//! ```
//!
//! Parsing resolves every cross-reference, so a [`Scenario`] returned by
//! [`parse_scenario`] always builds into a [`Model`].

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::migration::{
    check_feasibility, FeasibilityReport, MigrationMode, MigrationPlan, MobilityMode, PlanError, VmId, VmSpec,
    DEFAULT_CPU_STATE, DEFAULT_LINK_SPEED_THRESHOLD, DEFAULT_MAX_ROUNDS, DEFAULT_STOP_THRESHOLD,
};
use crate::mobility::{MobilityConfig, DEFAULT_ARP_DELAY, DEFAULT_CRYPTO_OVERHEAD};
use crate::net::{Demand, HostId, HostRole, NetError, Topology};
use crate::services::{Controller, Session, SurrogateSet};
use crate::sim::{SimTime, DEFAULT_MAX_EVENTS};
use crate::units::{parse_quantity, render_quantity, Dimension};

/// A scenario problem located at a line and 1-based column.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ScenarioError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ScenarioError {
    fn new(line: usize, column: usize, message: impl Into<String>) -> Self {
        ScenarioError { line, column, message: message.into() }
    }
}

/// Line of a directive and the column of each of its keys. The positional
/// argument(s) are stored under `"id"`, `"a"` and `"b"`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Span {
    pub line: usize,
    cols: BTreeMap<String, usize>,
}

impl Span {
    fn col(&self, key: &str) -> usize {
        self.cols.get(key).copied().unwrap_or(1)
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ScenarioError {
        ScenarioError::new(self.line, self.col(key), message)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HostDecl {
    pub span: Span,
    pub id: String,
    pub subnet: String,
    pub san: Option<String>,
    pub role: HostRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkDecl {
    pub span: Span,
    pub a: String,
    pub b: String,
    pub bw: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VmDecl {
    pub span: Span,
    pub id: String,
    pub host: String,
    pub mem: f64,
    pub disk: f64,
    pub context: f64,
    pub cpu: f64,
    pub dirty: f64,
    /// Home agent host; defaults to `host`.
    pub home: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionDecl {
    pub span: Span,
    pub id: String,
    pub client: String,
    pub vm: String,
    pub rate: Demand,
    pub timeout: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContentDecl {
    pub span: Span,
    pub id: String,
    pub origin: String,
    pub surrogates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestDecl {
    pub span: Span,
    pub client: String,
    pub content: String,
    pub at: f64,
    pub every: Option<f64>,
    pub until: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigrateDecl {
    pub span: Span,
    pub vm: String,
    pub to: String,
    pub at: f64,
    pub mode: MigrationMode,
    pub mobility: MobilityMode,
    pub threshold: Option<f64>,
    pub max_rounds: Option<u32>,
}

/// Tunable constants, overridden by `set` lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub arp_delay: f64,
    pub crypto_overhead: f64,
    pub link_speed_threshold: f64,
    pub stop_threshold: f64,
    pub max_rounds: u32,
    pub max_events: u64,
}

impl Default for Settings {
    fn default() -> Self {
        Settings {
            arp_delay: DEFAULT_ARP_DELAY,
            crypto_overhead: DEFAULT_CRYPTO_OVERHEAD,
            link_speed_threshold: DEFAULT_LINK_SPEED_THRESHOLD,
            stop_threshold: DEFAULT_STOP_THRESHOLD,
            max_rounds: DEFAULT_MAX_ROUNDS,
            max_events: DEFAULT_MAX_EVENTS,
        }
    }
}

impl Settings {
    pub fn mobility(&self) -> MobilityConfig {
        MobilityConfig { arp_delay: self.arp_delay, crypto_overhead: self.crypto_overhead }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub name: Option<String>,
    pub hosts: Vec<HostDecl>,
    pub links: Vec<LinkDecl>,
    pub vms: Vec<VmDecl>,
    pub sessions: Vec<SessionDecl>,
    pub contents: Vec<ContentDecl>,
    pub requests: Vec<RequestDecl>,
    pub migrations: Vec<MigrateDecl>,
    pub settings: Settings,
    pub duration: f64,
    pub seed: u64,
    pub run_span: Span,
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let mut sc = Scenario::default();
    let mut saw_run = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let body = raw.split('#').next().unwrap_or("");
        let tokens = tokenize(body);
        let Some((head, head_col)) = tokens.first().copied() else { continue };
        let mut d = Directive::new(line, &tokens[1..]);
        match head {
            "scenario" => {
                let name = d.positional("id", "scenario name")?;
                sc.name = Some(name);
                d.finish()?;
            }
            "host" => {
                let id = d.positional("id", "host id")?;
                let subnet = d.ident("subnet")?;
                let san = d.opt_ident("san")?;
                let role = match d.opt_raw("role") {
                    None | Some("hypervisor") => HostRole::Hypervisor,
                    Some("router") => HostRole::Router,
                    Some("client") => HostRole::Client,
                    Some("controller") => HostRole::Controller,
                    Some(other) => return Err(d.err("role", format!("unknown role `{other}`"))),
                };
                sc.hosts.push(HostDecl { id, subnet, san, role, span: d.finish()? });
            }
            "link" => {
                let a = d.positional("a", "link endpoint")?;
                let b = d.positional("b", "second link endpoint")?;
                let bw = d.quantity("bw", Dimension::Bandwidth)?;
                let lat = d.quantity("lat", Dimension::Time)?;
                sc.links.push(LinkDecl { a, b, bw, lat, span: d.finish()? });
            }
            "vm" => {
                let id = d.positional("id", "vm id")?;
                let host = d.ident("host")?;
                let mem = d.quantity("mem", Dimension::Size)?;
                let disk = d.opt_quantity("disk", Dimension::Size)?.unwrap_or(0.0);
                let context = d.opt_quantity("context", Dimension::Size)?.unwrap_or(0.0);
                let cpu = d.opt_quantity("cpu", Dimension::Size)?.unwrap_or(DEFAULT_CPU_STATE);
                let dirty = d.quantity("dirty", Dimension::ByteRate)?;
                let home = d.opt_ident("home")?;
                sc.vms.push(VmDecl { id, host, mem, disk, context, cpu, dirty, home, span: d.finish()? });
            }
            "session" => {
                let id = d.positional("id", "session id")?;
                let client = d.ident("client")?;
                let vm = d.ident("vm")?;
                let rate = match d.raw("rate")? {
                    "elastic" => Demand::Elastic,
                    text => Demand::Bounded(
                        parse_quantity(text, Dimension::Bandwidth).map_err(|m| d.err("rate", m))?,
                    ),
                };
                let timeout = d.quantity("timeout", Dimension::Time)?;
                sc.sessions.push(SessionDecl { id, client, vm, rate, timeout, span: d.finish()? });
            }
            "content" => {
                let id = d.positional("id", "content id")?;
                let origin = d.ident("origin")?;
                let list = d.raw("surrogates")?;
                let mut surrogates = Vec::new();
                for item in list.split(',') {
                    if !is_ident(item) {
                        return Err(d.err("surrogates", format!("bad surrogate id `{item}`")));
                    }
                    surrogates.push(item.to_string());
                }
                sc.contents.push(ContentDecl { id, origin, surrogates, span: d.finish()? });
            }
            "request" => {
                let client = d.ident("client")?;
                let content = d.ident("content")?;
                let at = d.quantity("at", Dimension::Time)?;
                let every = d.opt_quantity("every", Dimension::Time)?;
                let until = d.opt_quantity("until", Dimension::Time)?;
                if every == Some(0.0) {
                    return Err(d.err("every", "`every` must be > 0"));
                }
                if until.is_some() && every.is_none() {
                    return Err(d.err("until", "`until` needs `every`"));
                }
                sc.requests.push(RequestDecl { client, content, at, every, until, span: d.finish()? });
            }
            "migrate" => {
                let vm = d.positional("id", "vm id")?;
                let to = d.ident("to")?;
                let at = d.quantity("at", Dimension::Time)?;
                let mode = match d.raw("mode")? {
                    "shared" => MigrationMode::SharedStorage,
                    "full" => MigrationMode::ContextTransfer,
                    other => return Err(d.err("mode", format!("unknown mode `{other}` (expected shared or full)"))),
                };
                let mobility = match d.raw("mobility")? {
                    "arp" => MobilityMode::Arp,
                    "mip" => MobilityMode::Mip,
                    other => return Err(d.err("mobility", format!("unknown mobility `{other}` (expected arp or mip)"))),
                };
                let threshold = d.opt_quantity("threshold", Dimension::Size)?;
                if threshold == Some(0.0) {
                    return Err(d.err("threshold", "threshold must be > 0"));
                }
                let max_rounds = d.opt_int("max_rounds")?.map(|n| n as u32);
                if max_rounds == Some(0) {
                    return Err(d.err("max_rounds", "max_rounds must be >= 1"));
                }
                sc.migrations.push(MigrateDecl { vm, to, at, mode, mobility, threshold, max_rounds, span: d.finish()? });
            }
            "set" => {
                if d.pairs.is_empty() {
                    return Err(ScenarioError::new(line, head_col, "`set` needs at least one key=value"));
                }
                let s = &mut sc.settings;
                if let Some(v) = d.opt_quantity("arp_delay", Dimension::Time)? {
                    s.arp_delay = v;
                }
                if let Some(v) = d.opt_quantity("crypto_overhead", Dimension::Time)? {
                    s.crypto_overhead = v;
                }
                if let Some(v) = d.opt_quantity("link_speed_threshold", Dimension::Bandwidth)? {
                    s.link_speed_threshold = v;
                }
                if let Some(v) = d.opt_quantity("stop_threshold", Dimension::Size)? {
                    if v == 0.0 {
                        return Err(d.err("stop_threshold", "stop_threshold must be > 0"));
                    }
                    s.stop_threshold = v;
                }
                if let Some(v) = d.opt_int("max_rounds")? {
                    if v == 0 {
                        return Err(d.err("max_rounds", "max_rounds must be >= 1"));
                    }
                    s.max_rounds = v as u32;
                }
                if let Some(v) = d.opt_int("max_events")? {
                    s.max_events = v;
                }
                d.finish()?;
            }
            "run" => {
                if saw_run {
                    return Err(ScenarioError::new(line, head_col, "duplicate `run` directive"));
                }
                saw_run = true;
                let duration = d.quantity("duration", Dimension::Time)?;
                if duration <= 0.0 {
                    return Err(d.err("duration", "duration must be > 0"));
                }
                sc.duration = duration;
                sc.seed = d.opt_int("seed")?.unwrap_or(0);
                sc.run_span = d.finish()?;
            }
            other => return Err(ScenarioError::new(line, head_col, format!("unknown directive `{other}`"))),
        }
    }
    if !saw_run {
        let last = text.lines().count().max(1);
        return Err(ScenarioError::new(last, 1, "missing `run duration=<N>s` directive"));
    }
    sc.model()?;
    Ok(sc)
}

fn tokenize(body: &str) -> Vec<(&str, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in body.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((&body[s..i], s + 1));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((&body[s..], s + 1));
    }
    out
}

fn is_ident(s: &str) -> bool {
    !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.' | ':'))
}

/// Remaining tokens of one directive; keys are consumed as they are read and
/// anything left over is reported by [`Directive::finish`].
struct Directive<'a> {
    line: usize,
    positional: Vec<(&'a str, usize)>,
    pairs: Vec<(&'a str, &'a str, usize)>,
    span: Span,
    bad: Option<ScenarioError>,
}

impl<'a> Directive<'a> {
    fn new(line: usize, tokens: &[(&'a str, usize)]) -> Self {
        let mut positional = Vec::new();
        let mut pairs = Vec::new();
        let mut bad = None;
        let mut seen = HashSet::new();
        for &(tok, col) in tokens {
            match tok.split_once('=') {
                Some((k, v)) => {
                    if !seen.insert(k) && bad.is_none() {
                        bad = Some(ScenarioError::new(line, col, format!("duplicate key `{k}`")));
                    }
                    pairs.push((k, v, col));
                }
                None if pairs.is_empty() => positional.push((tok, col)),
                None => {
                    if bad.is_none() {
                        bad = Some(ScenarioError::new(line, col, format!("expected key=value, found `{tok}`")));
                    }
                }
            }
        }
        positional.reverse();
        Directive { line, positional, pairs, span: Span { line, cols: BTreeMap::new() }, bad }
    }

    fn err(&self, key: &str, message: impl Into<String>) -> ScenarioError {
        let col = self
            .span
            .cols
            .get(key)
            .copied()
            .or_else(|| self.pairs.iter().find(|p| p.0 == key).map(|p| p.2))
            .unwrap_or(1);
        ScenarioError::new(self.line, col, message)
    }

    fn check_bad(&mut self) -> Result<(), ScenarioError> {
        match self.bad.take() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    fn positional(&mut self, slot: &str, what: &str) -> Result<String, ScenarioError> {
        self.check_bad()?;
        let (tok, col) = self
            .positional
            .pop()
            .ok_or_else(|| ScenarioError::new(self.line, 1, format!("missing {what}")))?;
        if !is_ident(tok) {
            return Err(ScenarioError::new(self.line, col, format!("bad {what} `{tok}`")));
        }
        self.span.cols.insert(slot.to_string(), col);
        Ok(tok.to_string())
    }

    fn opt_raw(&mut self, key: &str) -> Option<&'a str> {
        let pos = self.pairs.iter().position(|p| p.0 == key)?;
        let (_, v, col) = self.pairs.remove(pos);
        self.span.cols.insert(key.to_string(), col);
        Some(v)
    }

    fn raw(&mut self, key: &str) -> Result<&'a str, ScenarioError> {
        self.check_bad()?;
        self.opt_raw(key)
            .ok_or_else(|| ScenarioError::new(self.line, 1, format!("missing required key `{key}`")))
    }

    fn ident(&mut self, key: &str) -> Result<String, ScenarioError> {
        let v = self.raw(key)?;
        if !is_ident(v) {
            return Err(self.err(key, format!("bad identifier `{v}` for `{key}`")));
        }
        Ok(v.to_string())
    }

    fn opt_ident(&mut self, key: &str) -> Result<Option<String>, ScenarioError> {
        match self.opt_raw(key) {
            None => Ok(None),
            Some(v) if is_ident(v) => Ok(Some(v.to_string())),
            Some(v) => Err(self.err(key, format!("bad identifier `{v}` for `{key}`"))),
        }
    }

    fn quantity(&mut self, key: &str, dim: Dimension) -> Result<f64, ScenarioError> {
        let v = self.raw(key)?;
        parse_quantity(v, dim).map_err(|m| self.err(key, m))
    }

    fn opt_quantity(&mut self, key: &str, dim: Dimension) -> Result<Option<f64>, ScenarioError> {
        match self.opt_raw(key) {
            None => Ok(None),
            Some(v) => parse_quantity(v, dim).map(Some).map_err(|m| self.err(key, m)),
        }
    }

    fn opt_int(&mut self, key: &str) -> Result<Option<u64>, ScenarioError> {
        match self.opt_raw(key) {
            None => Ok(None),
            Some(v) => v
                .parse::<u64>()
                .map(Some)
                .map_err(|_| self.err(key, format!("expected a non-negative integer for `{key}`, found `{v}`"))),
        }
    }

    fn finish(mut self) -> Result<Span, ScenarioError> {
        self.check_bad()?;
        if let Some(&(tok, col)) = self.positional.last() {
            return Err(ScenarioError::new(self.line, col, format!("unexpected argument `{tok}`")));
        }
        if let Some(&(k, _, col)) = self.pairs.first() {
            return Err(ScenarioError::new(self.line, col, format!("unknown key `{k}`")));
        }
        Ok(self.span)
    }
}

/// A periodic request source.
#[derive(Debug, Clone, PartialEq)]
pub struct RequestStream {
    pub client: HostId,
    pub content: String,
    pub at: f64,
    pub every: Option<f64>,
    pub until: f64,
}

impl RequestStream {
    /// Issue time of the `k`-th request, if it exists.
    pub fn nth(&self, k: u64) -> Option<f64> {
        match self.every {
            None => (k == 0).then_some(self.at),
            Some(every) => {
                let t = self.at + k as f64 * every;
                (t <= self.until).then_some(t)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlannedMigration {
    pub plan: MigrationPlan,
    pub report: FeasibilityReport,
    pub line: usize,
}

/// A validated, index-resolved scenario ready to run.
#[derive(Debug, Clone)]
pub struct Model {
    pub name: String,
    pub topo: Topology,
    pub vms: Vec<VmSpec>,
    pub home_hosts: Vec<HostId>,
    pub sessions: Vec<Session>,
    pub contents: Vec<SurrogateSet>,
    pub requests: Vec<RequestStream>,
    /// Sorted by start time, then by line.
    pub migrations: Vec<PlannedMigration>,
    pub controller: Controller,
    pub settings: Settings,
    pub duration: f64,
    pub seed: u64,
    pub run_line: usize,
}

impl Model {
    pub fn vm_names(&self) -> Vec<String> {
        self.vms.iter().map(|v| v.name.clone()).collect()
    }

    /// First infeasible migration, if any.
    pub fn infeasible(&self) -> Option<&PlannedMigration> {
        self.migrations.iter().find(|m| !m.report.feasible)
    }
}

impl Scenario {
    pub fn display_name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    /// Resolves references and checks every structural invariant.
    pub fn model(&self) -> Result<Model, ScenarioError> {
        let mut topo = Topology::new();
        if self.hosts.is_empty() {
            return Err(ScenarioError::new(self.run_span.line.max(1), 1, "scenario declares no hosts"));
        }
        for h in &self.hosts {
            topo.add_host(&h.id, &h.subnet, h.san.as_deref(), h.role).map_err(|e| match e {
                NetError::MissingStorageDomain(_) => h.span.err("id", format!("hypervisor host `{}` needs san=<id>", h.id)),
                other => h.span.err("id", other.to_string()),
            })?;
        }
        for l in &self.links {
            topo.add_link(&l.a, &l.b, l.bw, l.lat).map_err(|e| {
                let key = match &e {
                    NetError::UnknownHost(h) if *h == l.b => "b",
                    NetError::BadLink { .. } => "bw",
                    _ => "a",
                };
                l.span.err(key, e.to_string())
            })?;
        }
        let hypervisor = |span: &Span, key: &str, name: &str| -> Result<HostId, ScenarioError> {
            let id = topo.host_id(name).map_err(|_| span.err(key, format!("unknown host `{name}`")))?;
            if topo.host(id).role != HostRole::Hypervisor {
                return Err(span.err(key, format!("host `{name}` is not a hypervisor host")));
            }
            Ok(id)
        };
        let any_host = |span: &Span, key: &str, name: &str| -> Result<HostId, ScenarioError> {
            topo.host_id(name).map_err(|_| span.err(key, format!("unknown host `{name}`")))
        };

        // Hosts that must be mutually reachable, with the line naming them.
        let mut referenced: Vec<(HostId, &Span, &str)> = Vec::new();

        let mut vm_index: HashMap<&str, VmId> = HashMap::new();
        let mut vms = Vec::new();
        let mut home_hosts = Vec::new();
        for v in &self.vms {
            if vm_index.insert(&v.id, VmId(vms.len())).is_some() {
                return Err(v.span.err("id", format!("duplicate vm `{}`", v.id)));
            }
            let host = hypervisor(&v.span, "host", &v.host)?;
            if v.mem.is_nan() || v.mem <= 0.0 {
                return Err(v.span.err("mem", "mem must be > 0"));
            }
            let home = match &v.home {
                Some(h) => hypervisor(&v.span, "home", h)?,
                None => host,
            };
            referenced.push((host, &v.span, "host"));
            referenced.push((home, &v.span, "home"));
            vms.push(VmSpec {
                name: v.id.clone(),
                host,
                mem_bytes: v.mem,
                disk_bytes: v.disk,
                context_bytes: v.context,
                cpu_state_bytes: v.cpu,
                dirty_rate: v.dirty,
            });
            home_hosts.push(home);
        }
        let vm_ref = |span: &Span, key: &str, name: &str| -> Result<VmId, ScenarioError> {
            vm_index.get(name).copied().ok_or_else(|| span.err(key, format!("unknown vm `{name}`")))
        };

        let mut session_ids = HashSet::new();
        let mut sessions = Vec::new();
        for s in &self.sessions {
            if !session_ids.insert(&s.id) {
                return Err(s.span.err("id", format!("duplicate session `{}`", s.id)));
            }
            let client = any_host(&s.span, "client", &s.client)?;
            let vm = vm_ref(&s.span, "vm", &s.vm)?;
            referenced.push((client, &s.span, "client"));
            sessions.push(Session::new(&s.id, client, vm, s.rate, s.timeout));
        }

        let mut contents: Vec<SurrogateSet> = Vec::new();
        for c in &self.contents {
            if contents.iter().any(|x| x.content == c.id) {
                return Err(c.span.err("id", format!("duplicate content `{}`", c.id)));
            }
            let origin = vm_ref(&c.span, "origin", &c.origin)?;
            let surrogates = c
                .surrogates
                .iter()
                .map(|s| vm_ref(&c.span, "surrogates", s))
                .collect::<Result<Vec<_>, _>>()?;
            contents.push(SurrogateSet { content: c.id.clone(), origin, surrogates });
        }

        let mut requests = Vec::new();
        for r in &self.requests {
            let client = any_host(&r.span, "client", &r.client)?;
            if !contents.iter().any(|c| c.content == r.content) {
                return Err(r.span.err("content", format!("unknown content `{}`", r.content)));
            }
            referenced.push((client, &r.span, "client"));
            requests.push(RequestStream {
                client,
                content: r.content.clone(),
                at: r.at,
                every: r.every,
                until: r.until.unwrap_or(self.duration),
            });
        }

        let controller = Controller {
            hosts: topo
                .hosts()
                .filter(|(_, h)| h.role == HostRole::Controller)
                .map(|(id, _)| id)
                .collect(),
        };
        for h in self.hosts.iter().filter(|h| h.role == HostRole::Controller) {
            referenced.push((topo.host_id(&h.id).expect("declared above"), &h.span, "id"));
        }

        let mut order: Vec<&MigrateDecl> = self.migrations.iter().collect();
        order.sort_by(|x, y| x.at.total_cmp(&y.at).then(x.span.line.cmp(&y.span.line)));
        let mut location: Vec<HostId> = vms.iter().map(|v| v.host).collect();
        let mut migrations = Vec::new();
        for m in order {
            let vm = vm_ref(&m.span, "id", &m.vm)?;
            let dst = hypervisor(&m.span, "to", &m.to)?;
            referenced.push((dst, &m.span, "to"));
            let plan = MigrationPlan {
                vm,
                src: location[vm.0],
                dst,
                mode: m.mode,
                mobility: m.mobility,
                start_at: SimTime::from_secs(m.at),
                stop_threshold_bytes: m.threshold.unwrap_or(self.settings.stop_threshold),
                max_rounds: m.max_rounds.unwrap_or(self.settings.max_rounds),
            };
            let report = match check_feasibility(&plan, &topo, &vms, self.settings.link_speed_threshold) {
                Ok(r) => r,
                Err(PlanError::SameHost(h)) => {
                    return Err(m.span.err("to", format!("vm `{}` is already on `{h}` at t={}s", m.vm, m.at)))
                }
                Err(PlanError::Net(NetError::Unreachable(a, b))) => {
                    return Err(m.span.err("to", format!("no route from `{a}` to `{b}`")))
                }
                Err(e) => return Err(m.span.err("id", e.to_string())),
            };
            location[vm.0] = dst;
            migrations.push(PlannedMigration { plan, report, line: m.span.line });
        }

        if let Some(&(root, _, _)) = referenced.first() {
            for &(h, span, key) in &referenced {
                if let Err(NetError::Unreachable(..)) = topo.connected(&[root, h]) {
                    return Err(span.err(
                        key,
                        format!("host `{}` is not connected to `{}`", topo.name(h), topo.name(root)),
                    ));
                }
            }
        }

        Ok(Model {
            name: self.display_name().to_string(),
            topo,
            vms,
            home_hosts,
            sessions,
            contents,
            requests,
            migrations,
            controller,
            settings: self.settings.clone(),
            duration: self.duration,
            seed: self.seed,
            run_line: self.run_span.line,
        })
    }

    /// Canonical text form; parsing it yields an equivalent scenario.
    pub fn render(&self) -> String {
        use Dimension::*;
        let mut out = String::new();
        if let Some(name) = &self.name {
            let _ = writeln!(out, "scenario {name}");
        }
        for h in &self.hosts {
            let _ = write!(out, "host {} subnet={}", h.id, h.subnet);
            if let Some(san) = &h.san {
                let _ = write!(out, " san={san}");
            }
            if h.role != HostRole::Hypervisor {
                let _ = write!(out, " role={}", h.role.as_str());
            }
            out.push('\n');
        }
        for l in &self.links {
            let _ = writeln!(
                out,
                "link {} {} bw={} lat={}",
                l.a,
                l.b,
                render_quantity(l.bw, Bandwidth),
                render_quantity(l.lat, Time)
            );
        }
        for v in &self.vms {
            let _ = write!(
                out,
                "vm {} host={} mem={} disk={} context={} cpu={} dirty={}",
                v.id,
                v.host,
                render_quantity(v.mem, Size),
                render_quantity(v.disk, Size),
                render_quantity(v.context, Size),
                render_quantity(v.cpu, Size),
                render_quantity(v.dirty, ByteRate)
            );
            if let Some(home) = &v.home {
                let _ = write!(out, " home={home}");
            }
            out.push('\n');
        }
        for s in &self.sessions {
            let rate = match s.rate {
                Demand::Elastic => "elastic".to_string(),
                Demand::Bounded(r) => render_quantity(r, Bandwidth),
            };
            let _ = writeln!(
                out,
                "session {} client={} vm={} rate={rate} timeout={}",
                s.id,
                s.client,
                s.vm,
                render_quantity(s.timeout, Time)
            );
        }
        for c in &self.contents {
            let _ = writeln!(out, "content {} origin={} surrogates={}", c.id, c.origin, c.surrogates.join(","));
        }
        for r in &self.requests {
            let _ = write!(out, "request client={} content={} at={}", r.client, r.content, render_quantity(r.at, Time));
            if let Some(every) = r.every {
                let _ = write!(out, " every={}", render_quantity(every, Time));
            }
            if let Some(until) = r.until {
                let _ = write!(out, " until={}", render_quantity(until, Time));
            }
            out.push('\n');
        }
        for m in &self.migrations {
            let _ = write!(
                out,
                "migrate {} to={} at={} mode={} mobility={}",
                m.vm,
                m.to,
                render_quantity(m.at, Time),
                m.mode.as_str(),
                m.mobility.as_str()
            );
            if let Some(t) = m.threshold {
                let _ = write!(out, " threshold={}", render_quantity(t, Size));
            }
            if let Some(n) = m.max_rounds {
                let _ = write!(out, " max_rounds={n}");
            }
            out.push('\n');
        }
        let s = &self.settings;
        let _ = writeln!(
            out,
            "set arp_delay={} crypto_overhead={} link_speed_threshold={} stop_threshold={} max_rounds={} max_events={}",
            render_quantity(s.arp_delay, Time),
            render_quantity(s.crypto_overhead, Time),
            render_quantity(s.link_speed_threshold, Bandwidth),
            render_quantity(s.stop_threshold, Size),
            s.max_rounds,
            s.max_events
        );
        let _ = writeln!(out, "run duration={} seed={}", render_quantity(self.duration, Time), self.seed);
        out
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.render())
    }
}
