//! Client sessions with continuity accounting, and the vCDN controller that
//! sends each request to the closest available surrogate.
//!
//! Sessions are sticky: they stay with their VM and absorb its downtime.
//! Requests are not: a surrogate in downtime is skipped and the request goes
//! to the next-closest one.

use thiserror::Error;

use crate::migration::VmId;
use crate::mobility::AddressBinding;
use crate::net::{Demand, HostId, NetError, Topology};
use crate::sim::SimTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionState {
    Active,
    Interrupted,
    Dropped,
    Completed,
}

impl SessionState {
    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Active => "active",
            SessionState::Interrupted => "interrupted",
            SessionState::Dropped => "dropped",
            SessionState::Completed => "completed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub name: String,
    pub client: HostId,
    pub vm: VmId,
    pub demand: Demand,
    /// Longest tolerable interruption, seconds.
    pub timeout: f64,
    pub state: SessionState,
    pub interruptions: Vec<(SimTime, SimTime)>,
}

impl Session {
    pub fn new(name: &str, client: HostId, vm: VmId, demand: Demand, timeout: f64) -> Self {
        Session {
            name: name.to_string(),
            client,
            vm,
            demand,
            timeout,
            state: SessionState::Active,
            interruptions: Vec::new(),
        }
    }

    pub fn max_interruption(&self) -> f64 {
        self.interruptions.iter().map(|(s, e)| *e - *s).fold(0.0, f64::max)
    }

    pub fn dropped(&self) -> bool {
        self.state == SessionState::Dropped
    }
}

/// Records a downtime window of the session's VM.
///
/// The window already includes the redirect delay. The session drops when
/// the window is strictly longer than its timeout; a dropped session stays
/// dropped. Sessions of other VMs are left alone.
pub fn account_interruption(session: &mut Session, vm: VmId, window: (SimTime, SimTime)) {
    if session.vm != vm || session.dropped() {
        return;
    }
    session.interruptions.push(window);
    session.state = if window.1 - window.0 > session.timeout {
        SessionState::Dropped
    } else {
        SessionState::Active
    };
}

/// Surrogate VMs that all serve the same content.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateSet {
    pub content: String,
    pub origin: VmId,
    pub surrogates: Vec<VmId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestRecord {
    pub client: HostId,
    pub content: String,
    pub issued_at: SimTime,
    pub served_by: VmId,
    pub latency: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ServiceError {
    #[error("unknown content `{0}`")]
    UnknownContent(String),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Picks the candidate whose current host has the lowest direct path
/// latency from `client`; ties go to the smallest VM name.
///
/// `names` maps VM indices to names and `bindings` to current hosts.
/// Returns `None` if every candidate is excluded.
pub fn select_surrogate(
    topo: &Topology,
    client: HostId,
    candidates: &[VmId],
    bindings: &[AddressBinding],
    names: &[String],
    excluded: impl Fn(VmId) -> bool,
) -> Result<Option<(VmId, f64)>, NetError> {
    let mut best: Option<(VmId, f64)> = None;
    for &vm in candidates.iter().filter(|&&vm| !excluded(vm)) {
        let latency = topo.path_latency(&topo.shortest_path(client, bindings[vm.0].current_host)?);
        let better = match best {
            None => true,
            Some((cur, cur_lat)) => latency < cur_lat || (latency == cur_lat && names[vm.0] < names[cur.0]),
        };
        if better {
            best = Some((vm, latency));
        }
    }
    Ok(best)
}

/// The vCDN request router.
#[derive(Debug, Clone, Default)]
pub struct Controller {
    /// Controller hosts; each request consults the closest one.
    pub hosts: Vec<HostId>,
}

impl Controller {
    /// Round trip from `client` to the nearest controller, zero without one.
    pub fn control_hop(&self, topo: &Topology, client: HostId) -> Result<f64, NetError> {
        let mut best: Option<f64> = None;
        for &c in &self.hosts {
            let one_way = topo.path_latency(&topo.shortest_path(client, c)?);
            best = Some(best.map_or(one_way, |b: f64| b.min(one_way)));
        }
        Ok(2.0 * best.unwrap_or(0.0))
    }

    /// Serves one request. Surrogates in downtime are skipped; when none is
    /// left the origin serves it.
    #[allow(clippy::too_many_arguments)]
    pub fn handle_request(
        &self,
        topo: &Topology,
        client: HostId,
        content: &str,
        sets: &[SurrogateSet],
        bindings: &[AddressBinding],
        names: &[String],
        in_downtime: impl Fn(VmId) -> bool,
        now: SimTime,
    ) -> Result<RequestRecord, ServiceError> {
        let set = sets
            .iter()
            .find(|s| s.content == content)
            .ok_or_else(|| ServiceError::UnknownContent(content.to_string()))?;
        let chosen = match select_surrogate(topo, client, &set.surrogates, bindings, names, &in_downtime)? {
            Some(hit) => hit,
            None => {
                let host = bindings[set.origin.0].current_host;
                (set.origin, topo.path_latency(&topo.shortest_path(client, host)?))
            }
        };
        Ok(RequestRecord {
            client,
            content: content.to_string(),
            issued_at: now,
            served_by: chosen.0,
            latency: self.control_hop(topo, client)? + chosen.1,
        })
    }
}

/// Arithmetic mean of request latencies; `None` for no requests.
pub fn mean_latency<'a>(records: impl IntoIterator<Item = &'a RequestRecord>) -> Option<f64> {
    let (sum, n) = records.into_iter().fold((0.0, 0usize), |(s, n), r| (s + r.latency, n + 1));
    (n > 0).then(|| sum / n as f64)
}
