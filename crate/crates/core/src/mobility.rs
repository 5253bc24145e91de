//! Hypervisor-controlled redirection of a migrated VM's traffic.
//!
//! A cross-subnet move keeps the VM's address anchored at a home agent (the
//! home host's hypervisor) and tunnels traffic to the foreign agent at the
//! destination host. The tunnel handshake starts together with the
//! migration, so it normally completes long before stop-and-copy. A
//! same-subnet move is announced with a gratuitous ARP broadcast instead.

use crate::migration::{MigrationPlan, MobilityMode, VmId};
use crate::net::{HostId, NetError, Path, Topology};
use crate::sim::SimTime;

pub const DEFAULT_ARP_DELAY: f64 = 0.010;
pub const DEFAULT_CRYPTO_OVERHEAD: f64 = 0.050;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MobilityConfig {
    /// Seconds for an ARP announcement to take effect.
    pub arp_delay: f64,
    /// Fixed cost of the secure tunnel handshake on top of its round trips.
    pub crypto_overhead: f64,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        MobilityConfig { arp_delay: DEFAULT_ARP_DELAY, crypto_overhead: DEFAULT_CRYPTO_OVERHEAD }
    }
}

/// Where traffic for a VM must be sent.
#[derive(Debug, Clone, PartialEq)]
pub struct AddressBinding {
    pub vm: VmId,
    /// Home agent location; the VM's address belongs to this host's subnet.
    pub home_host: HostId,
    pub current_host: HostId,
    /// Number of completed switchovers.
    pub epoch: u64,
    /// True while traffic reaches the VM through a home-agent tunnel.
    pub tunneled: bool,
}

impl AddressBinding {
    pub fn new(vm: VmId, home_host: HostId, current_host: HostId) -> Self {
        AddressBinding { vm, home_host, current_host, epoch: 0, tunneled: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TunnelStatus {
    Pending,
    Up,
    TornDown,
}

impl TunnelStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TunnelStatus::Pending => "pending",
            TunnelStatus::Up => "up",
            TunnelStatus::TornDown => "torn-down",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TunnelState {
    pub ha: HostId,
    pub fa: HostId,
    pub established_at: SimTime,
    pub setup_cost: f64,
    /// One-way HA to FA latency, carried by the binding update.
    pub ha_fa_latency: f64,
    torn_down: bool,
}

impl TunnelState {
    pub fn up_at(&self) -> f64 {
        self.established_at.secs() + self.setup_cost
    }

    pub fn status(&self, now: SimTime) -> TunnelStatus {
        if self.torn_down {
            TunnelStatus::TornDown
        } else if now.secs() >= self.up_at() {
            TunnelStatus::Up
        } else {
            TunnelStatus::Pending
        }
    }

    pub fn tear_down(&mut self) {
        self.torn_down = true;
    }
}

/// How the switchover will be carried out.
#[derive(Debug, Clone, PartialEq)]
pub enum Redirect {
    Tunnel(TunnelState),
    Arp { delay: f64 },
}

/// Launches redirection for a migration starting at `now`.
///
/// In MIP mode the tunnel runs from the binding's home host to the
/// destination and costs two round trips plus the crypto overhead.
pub fn begin_mobility(
    plan: &MigrationPlan,
    binding: &AddressBinding,
    topo: &Topology,
    cfg: &MobilityConfig,
    now: SimTime,
) -> Result<Redirect, NetError> {
    match plan.mobility {
        MobilityMode::Arp => Ok(Redirect::Arp { delay: cfg.arp_delay }),
        MobilityMode::Mip => {
            let ha = binding.home_host;
            let fa = plan.dst;
            let one_way = topo.path_latency(&topo.shortest_path(ha, fa)?);
            let rtt = 2.0 * one_way;
            Ok(Redirect::Tunnel(TunnelState {
                ha,
                fa,
                established_at: now,
                setup_cost: 2.0 * rtt + cfg.crypto_overhead,
                ha_fa_latency: one_way,
                torn_down: false,
            }))
        }
    }
}

/// Redirect delay for a stop-and-copy that finished at `now`.
///
/// A tunnel that is already up only needs the binding update to travel from
/// HA to FA; a pending one adds its remaining setup time first.
pub fn switchover_delay(redirect: &Redirect, now: SimTime) -> f64 {
    match redirect {
        Redirect::Arp { delay } => *delay,
        Redirect::Tunnel(t) => {
            let remaining = (t.up_at() - now.secs()).max(0.0);
            remaining + t.ha_fa_latency
        }
    }
}

/// Points the binding at its new host. Returns the redirect delay charged
/// for a stop-and-copy that finished at `stop_copy_done`.
pub fn complete_switchover(
    binding: &mut AddressBinding,
    redirect: &Redirect,
    dst: HostId,
    stop_copy_done: SimTime,
) -> f64 {
    binding.current_host = dst;
    binding.epoch += 1;
    binding.tunneled = matches!(redirect, Redirect::Tunnel(_)) && binding.home_host != dst;
    switchover_delay(redirect, stop_copy_done)
}

/// A client's route to a VM together with its end-to-end latency.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoute {
    pub path: Path,
    pub latency: f64,
}

/// Route from `client` to wherever the binding says the VM is.
///
/// Tunneled bindings use triangle routing client → HA → FA → VM host, whose
/// latency is the sum of the three segment latencies. Otherwise, and before
/// any migration, the route is the direct shortest path.
pub fn client_route(topo: &Topology, client: HostId, binding: &AddressBinding) -> Result<ClientRoute, NetError> {
    if binding.tunneled {
        let to_ha = topo.shortest_path(client, binding.home_host)?;
        let tunnel = topo.shortest_path(binding.home_host, binding.current_host)?;
        // The foreign agent is the VM's host, so the last segment is local.
        let to_vm = topo.shortest_path(binding.current_host, binding.current_host)?;
        let latency = topo.path_latency(&to_ha) + topo.path_latency(&tunnel) + topo.path_latency(&to_vm);
        Ok(ClientRoute { path: to_ha.join(&tunnel).join(&to_vm), latency })
    } else {
        let path = topo.shortest_path(client, binding.current_host)?;
        Ok(ClientRoute { latency: topo.path_latency(&path), path })
    }
}

/// Route a session takes after at least one switchover.
pub fn post_migration_path(topo: &Topology, client: HostId, binding: &AddressBinding) -> Result<ClientRoute, NetError> {
    debug_assert!(binding.epoch > 0, "no switchover has happened yet");
    client_route(topo, client, binding)
}
