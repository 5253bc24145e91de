//! Network world model: hosts, links, subnets, storage domains, latency
//! routing and max-min fair sharing of link capacity among fluid flows.
//!
//! Links are undirected and their capacity is shared by traffic in both
//! directions. A VM is attached behind its host's NAT and shares the host's
//! network location, so VM-addressed traffic terminates at the host with no
//! extra latency.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HostId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HostRole {
    Hypervisor,
    Router,
    Client,
    Controller,
}

impl HostRole {
    pub fn as_str(self) -> &'static str {
        match self {
            HostRole::Hypervisor => "hypervisor",
            HostRole::Router => "router",
            HostRole::Client => "client",
            HostRole::Controller => "controller",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Host {
    pub name: String,
    pub subnet: String,
    /// SAN membership; always present on hypervisor hosts.
    pub storage_domain: Option<String>,
    pub role: HostRole,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub a: HostId,
    pub b: HostId,
    /// Bits per second, strictly positive.
    pub capacity: f64,
    /// One-way propagation delay in seconds.
    pub latency: f64,
}

impl Link {
    pub fn other(&self, end: HostId) -> HostId {
        if end == self.a {
            self.b
        } else {
            self.a
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetError {
    #[error("duplicate host `{0}`")]
    DuplicateHost(String),
    #[error("unknown host `{0}`")]
    UnknownHost(String),
    #[error("hypervisor host `{0}` has no storage domain")]
    MissingStorageDomain(String),
    #[error("link {0}-{1} would connect a host to itself")]
    SelfLink(String, String),
    #[error("duplicate link between `{0}` and `{1}`")]
    DuplicateLink(String, String),
    #[error("link {a}-{b}: capacity must be > 0 bit/s and latency >= 0 s")]
    BadLink { a: String, b: String },
    #[error("no route from `{0}` to `{1}`")]
    Unreachable(String, String),
}

/// A walk through the topology. `hosts` has one more entry than `links`
/// unless the path is empty.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Path {
    pub hosts: Vec<HostId>,
    pub links: Vec<LinkId>,
}

impl Path {
    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Concatenates `next` onto `self`; `next` must start where `self` ends.
    pub fn join(mut self, next: &Path) -> Path {
        if self.hosts.is_empty() {
            return next.clone();
        }
        if let Some(first) = next.hosts.first() {
            debug_assert_eq!(self.hosts.last(), Some(first));
            self.hosts.extend_from_slice(&next.hosts[1..]);
        }
        self.links.extend_from_slice(&next.links);
        self
    }

    pub fn reversed(&self) -> Path {
        Path {
            hosts: self.hosts.iter().rev().copied().collect(),
            links: self.links.iter().rev().copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Topology {
    hosts: Vec<Host>,
    links: Vec<Link>,
    by_name: HashMap<String, HostId>,
    adjacency: Vec<Vec<LinkId>>,
    /// Position of each host in name order, for lexicographic tie-breaks.
    name_rank: Vec<usize>,
}

/// Latency, host sequence and link sequence of a tentative route.
type Reached = (f64, Vec<HostId>, Vec<LinkId>);

impl Topology {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_host(
        &mut self,
        name: &str,
        subnet: &str,
        storage_domain: Option<&str>,
        role: HostRole,
    ) -> Result<HostId, NetError> {
        if self.by_name.contains_key(name) {
            return Err(NetError::DuplicateHost(name.to_string()));
        }
        if role == HostRole::Hypervisor && storage_domain.is_none() {
            return Err(NetError::MissingStorageDomain(name.to_string()));
        }
        let id = HostId(self.hosts.len());
        self.hosts.push(Host {
            name: name.to_string(),
            subnet: subnet.to_string(),
            storage_domain: storage_domain.map(str::to_string),
            role,
        });
        self.by_name.insert(name.to_string(), id);
        self.adjacency.push(Vec::new());
        self.rerank();
        Ok(id)
    }

    pub fn add_link(&mut self, a: &str, b: &str, capacity: f64, latency: f64) -> Result<LinkId, NetError> {
        let ha = self.host_id(a)?;
        let hb = self.host_id(b)?;
        if ha == hb {
            return Err(NetError::SelfLink(a.to_string(), b.to_string()));
        }
        if !(capacity > 0.0 && capacity.is_finite() && latency >= 0.0 && latency.is_finite()) {
            return Err(NetError::BadLink { a: a.to_string(), b: b.to_string() });
        }
        if self.link_between(ha, hb).is_some() {
            return Err(NetError::DuplicateLink(a.to_string(), b.to_string()));
        }
        let id = LinkId(self.links.len());
        self.links.push(Link { a: ha, b: hb, capacity, latency });
        self.adjacency[ha.0].push(id);
        self.adjacency[hb.0].push(id);
        Ok(id)
    }

    fn rerank(&mut self) {
        let mut order: Vec<usize> = (0..self.hosts.len()).collect();
        order.sort_by(|&x, &y| self.hosts[x].name.cmp(&self.hosts[y].name));
        self.name_rank = vec![0; order.len()];
        for (rank, idx) in order.into_iter().enumerate() {
            self.name_rank[idx] = rank;
        }
    }

    pub fn host_id(&self, name: &str) -> Result<HostId, NetError> {
        self.by_name
            .get(name)
            .copied()
            .ok_or_else(|| NetError::UnknownHost(name.to_string()))
    }

    pub fn host(&self, id: HostId) -> &Host {
        &self.hosts[id.0]
    }

    pub fn hosts(&self) -> impl Iterator<Item = (HostId, &Host)> {
        self.hosts.iter().enumerate().map(|(i, h)| (HostId(i), h))
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.0]
    }

    pub fn links(&self) -> impl Iterator<Item = (LinkId, &Link)> {
        self.links.iter().enumerate().map(|(i, l)| (LinkId(i), l))
    }

    pub fn link_count(&self) -> usize {
        self.links.len()
    }

    pub fn link_between(&self, a: HostId, b: HostId) -> Option<LinkId> {
        self.adjacency[a.0]
            .iter()
            .copied()
            .find(|&l| self.links[l.0].other(a) == b)
    }

    pub fn name(&self, id: HostId) -> &str {
        &self.hosts[id.0].name
    }

    pub fn same_subnet(&self, a: HostId, b: HostId) -> bool {
        self.hosts[a.0].subnet == self.hosts[b.0].subnet
    }

    /// Hosts without a SAN never share storage, not even with themselves.
    pub fn same_storage_domain(&self, a: HostId, b: HostId) -> bool {
        match (&self.hosts[a.0].storage_domain, &self.hosts[b.0].storage_domain) {
            (Some(x), Some(y)) => x == y,
            _ => false,
        }
    }

    /// Minimum-latency path. Equal-latency candidates are ordered by their
    /// host-name sequence and the lexicographically smallest wins.
    pub fn shortest_path(&self, from: HostId, to: HostId) -> Result<Path, NetError> {
        if from == to {
            return Ok(Path { hosts: vec![from], links: Vec::new() });
        }
        let n = self.hosts.len();
        // Best (latency, host sequence) found so far; dense Dijkstra is plenty
        // for scenario-sized graphs.
        let mut best: Vec<Option<Reached>> = vec![None; n];
        let mut settled = vec![false; n];
        best[from.0] = Some((0.0, vec![from], Vec::new()));
        loop {
            let mut pick: Option<usize> = None;
            for v in 0..n {
                if settled[v] || best[v].is_none() {
                    continue;
                }
                pick = match pick {
                    None => Some(v),
                    Some(u) if self.better(best[v].as_ref().unwrap(), best[u].as_ref().unwrap()) => Some(v),
                    keep => keep,
                };
            }
            let Some(u) = pick else { break };
            settled[u] = true;
            if u == to.0 {
                break;
            }
            let (dist, hosts, links) = best[u].clone().unwrap();
            for &lid in &self.adjacency[u] {
                let link = &self.links[lid.0];
                let v = link.other(HostId(u));
                if settled[v.0] {
                    continue;
                }
                let mut cand_hosts = hosts.clone();
                cand_hosts.push(v);
                let mut cand_links = links.clone();
                cand_links.push(lid);
                let cand = (dist + link.latency, cand_hosts, cand_links);
                let replace = match &best[v.0] {
                    None => true,
                    Some(cur) => self.better(&cand, cur),
                };
                if replace {
                    best[v.0] = Some(cand);
                }
            }
        }
        match best[to.0].take() {
            Some((_, hosts, links)) if settled[to.0] => Ok(Path { hosts, links }),
            _ => Err(NetError::Unreachable(self.name(from).to_string(), self.name(to).to_string())),
        }
    }

    fn better(&self, x: &(f64, Vec<HostId>, Vec<LinkId>), y: &(f64, Vec<HostId>, Vec<LinkId>)) -> bool {
        match x.0.total_cmp(&y.0) {
            std::cmp::Ordering::Less => true,
            std::cmp::Ordering::Greater => false,
            std::cmp::Ordering::Equal => {
                let rx = x.1.iter().map(|h| self.name_rank[h.0]);
                let ry = y.1.iter().map(|h| self.name_rank[h.0]);
                rx.lt(ry)
            }
        }
    }

    /// Sum of one-way link latencies along the path.
    pub fn path_latency(&self, path: &Path) -> f64 {
        path.links.iter().map(|l| self.links[l.0].latency).sum()
    }

    /// Smallest link capacity on the path; infinite for an empty path.
    pub fn bottleneck_capacity(&self, path: &Path) -> f64 {
        path.links
            .iter()
            .map(|l| self.links[l.0].capacity)
            .fold(f64::INFINITY, f64::min)
    }

    /// True when every host in `hosts` can reach the first one.
    pub fn connected(&self, hosts: &[HostId]) -> Result<(), NetError> {
        let Some(&root) = hosts.first() else { return Ok(()) };
        let mut seen = vec![false; self.hosts.len()];
        let mut stack = vec![root];
        seen[root.0] = true;
        while let Some(u) = stack.pop() {
            for &l in &self.adjacency[u.0] {
                let v = self.links[l.0].other(u);
                if !seen[v.0] {
                    seen[v.0] = true;
                    stack.push(v);
                }
            }
        }
        match hosts.iter().find(|h| !seen[h.0]) {
            Some(&h) => Err(NetError::Unreachable(self.name(root).to_string(), self.name(h).to_string())),
            None => Ok(()),
        }
    }
}

/// Bandwidth a flow asks for.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Demand {
    /// Takes whatever the fair share allows.
    Elastic,
    /// Never exceeds this many bits per second.
    Bounded(f64),
}

impl Demand {
    pub fn cap(self) -> f64 {
        match self {
            Demand::Elastic => f64::INFINITY,
            Demand::Bounded(r) => r,
        }
    }
}

impl fmt::Display for Demand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Demand::Elastic => f.write_str("elastic"),
            Demand::Bounded(r) => write!(f, "{r}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowId(pub u64);

/// A fluid flow. A link appearing twice in `path.links` (tunnel triangles
/// can fold back on themselves) carries the flow twice.
#[derive(Debug, Clone, PartialEq)]
pub struct Flow {
    pub id: FlowId,
    pub src: HostId,
    pub dst: HostId,
    pub path: Path,
    pub demand: Demand,
    pub allocated_rate: f64,
}

/// Ties in saturation level closer than this (relative) freeze together.
const FILL_EPS: f64 = 1e-12;

/// Max-min fair rates by progressive filling.
///
/// All unfrozen flows are raised together until a link saturates or a
/// bounded flow reaches its demand; the affected flows freeze and filling
/// continues with the rest. Flows with an empty path touch no link: a
/// bounded one receives its demand, an elastic one receives zero.
pub fn allocate_bandwidth(topo: &Topology, flows: &[Flow]) -> Vec<f64> {
    let mut rates = vec![0.0; flows.len()];
    let mut frozen = vec![false; flows.len()];
    for (i, f) in flows.iter().enumerate() {
        if f.path.links.is_empty() {
            rates[i] = match f.demand {
                Demand::Elastic => 0.0,
                Demand::Bounded(r) => r,
            };
            frozen[i] = true;
        } else if f.demand.cap() <= 0.0 {
            frozen[i] = true;
        }
    }
    let mut frozen_load = vec![0.0; topo.link_count()];
    let mut level = 0.0f64;
    while frozen.iter().any(|&fz| !fz) {
        let mut weight = vec![0usize; topo.link_count()];
        for (i, f) in flows.iter().enumerate() {
            if !frozen[i] {
                for l in &f.path.links {
                    weight[l.0] += 1;
                }
            }
        }
        let mut next = f64::INFINITY;
        for (l, &w) in weight.iter().enumerate() {
            if w > 0 {
                let s = ((topo.links[l].capacity - frozen_load[l]) / w as f64).max(level);
                next = next.min(s);
            }
        }
        for (i, f) in flows.iter().enumerate() {
            if !frozen[i] {
                next = next.min(f.demand.cap());
            }
        }
        level = next;
        let tol = level.abs() * FILL_EPS;
        let saturated: Vec<bool> = weight
            .iter()
            .enumerate()
            .map(|(l, &w)| {
                w > 0 && (topo.links[l].capacity - frozen_load[l]) / w as f64 <= level + tol
            })
            .collect();
        for (i, f) in flows.iter().enumerate() {
            if frozen[i] {
                continue;
            }
            let at_demand = f.demand.cap() <= level + tol;
            let bottlenecked = f.path.links.iter().any(|l| saturated[l.0]);
            if at_demand || bottlenecked {
                rates[i] = if at_demand { f.demand.cap().min(level) } else { level };
                frozen[i] = true;
                for l in &f.path.links {
                    frozen_load[l.0] += rates[i];
                }
            }
        }
    }
    rates
}

/// Per-link sum of allocated rates, counting repeated links once per use.
pub fn link_loads(topo: &Topology, flows: &[Flow], rates: &[f64]) -> Vec<f64> {
    let mut load = vec![0.0; topo.link_count()];
    for (f, r) in flows.iter().zip(rates) {
        for l in &f.path.links {
            load[l.0] += r;
        }
    }
    load
}
