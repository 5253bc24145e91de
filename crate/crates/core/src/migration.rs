//! Migration model: Table-I style feasibility checks, the pre-copy
//! recurrence and the per-migration phase state machine driven by the
//! engine.
//!
//! Pre-copy uses the geometric dirty-set model. Round one copies all of
//! memory; every later round re-sends what was dirtied while the previous
//! round ran. Once the next payload drops to the stop threshold (or the
//! round cap is hit) the VM pauses and the residual is copied during
//! downtime together with the CPU state.

use std::fmt;

use thiserror::Error;

use crate::net::{HostId, NetError, Topology};
use crate::sim::SimTime;
use crate::units::{GBPS, MIB};

pub const DEFAULT_STOP_THRESHOLD: f64 = 4.0 * MIB;
pub const DEFAULT_MAX_ROUNDS: u32 = 30;
pub const DEFAULT_LINK_SPEED_THRESHOLD: f64 = GBPS;
pub const DEFAULT_CPU_STATE: f64 = 8.0 * MIB;

pub const WARN_HIGH_LINK_SPEED: &str = "high link speed required";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VmId(pub usize);

/// Sizes in bytes, dirty rate in bytes per second.
#[derive(Debug, Clone, PartialEq)]
pub struct VmSpec {
    pub name: String,
    pub host: HostId,
    pub mem_bytes: f64,
    pub disk_bytes: f64,
    pub context_bytes: f64,
    pub cpu_state_bytes: f64,
    pub dirty_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MigrationMode {
    /// Source and destination share a SAN; only memory and CPU state move.
    SharedStorage,
    /// Disk and software context are copied ahead of memory.
    ContextTransfer,
}

impl MigrationMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MigrationMode::SharedStorage => "shared",
            MigrationMode::ContextTransfer => "full",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MobilityMode {
    Arp,
    Mip,
}

impl MobilityMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MobilityMode::Arp => "arp",
            MobilityMode::Mip => "mip",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MigrationPlan {
    pub vm: VmId,
    pub src: HostId,
    pub dst: HostId,
    pub mode: MigrationMode,
    pub mobility: MobilityMode,
    pub start_at: SimTime,
    pub stop_threshold_bytes: f64,
    pub max_rounds: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StorageRequirement {
    Shared,
    MustTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NetworkContinuity {
    ArpBroadcast,
    TunnelRequired,
    /// Live sessions cannot survive the move.
    None,
}

/// One row of the live-migration requirements matrix, evaluated for a plan.
/// CPU state always travels as the same context and memory is always copied
/// page by page, so those columns carry no data.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityReport {
    pub feasible: bool,
    pub storage: StorageRequirement,
    pub network_continuity: NetworkContinuity,
    pub warnings: Vec<String>,
    /// Why the plan is infeasible; empty when feasible.
    pub blockers: Vec<String>,
}

impl FeasibilityReport {
    pub fn cpu_state(&self) -> &'static str {
        "same context"
    }

    pub fn memory(&self) -> &'static str {
        "copy memory pages"
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("unknown VM index {0}")]
    UnknownVm(usize),
    #[error("VM `{vm}` is not on source host `{src}`")]
    WrongSource { vm: String, src: String },
    #[error("migration source and destination are both `{0}`")]
    SameHost(String),
    #[error("`{0}` is not a hypervisor host")]
    NotHypervisor(String),
    #[error("stop threshold must be > 0 and max_rounds >= 1")]
    BadLimits,
    #[error(transparent)]
    Net(#[from] NetError),
}

/// Checks a plan against the requirements matrix.
///
/// `current_host` is where the VM runs when the plan starts; it differs from
/// `spec.host` for a VM's second and later migrations.
pub fn check_feasibility(
    plan: &MigrationPlan,
    topo: &Topology,
    specs: &[VmSpec],
    link_speed_threshold: f64,
) -> Result<FeasibilityReport, PlanError> {
    specs.get(plan.vm.0).ok_or(PlanError::UnknownVm(plan.vm.0))?;
    if plan.src.0 >= topo.host_count() || plan.dst.0 >= topo.host_count() {
        return Err(PlanError::Net(NetError::UnknownHost(format!("#{}", plan.src.0.max(plan.dst.0)))));
    }
    if plan.src == plan.dst {
        return Err(PlanError::SameHost(topo.name(plan.src).to_string()));
    }
    for h in [plan.src, plan.dst] {
        if topo.host(h).role != crate::net::HostRole::Hypervisor {
            return Err(PlanError::NotHypervisor(topo.name(h).to_string()));
        }
    }
    if plan.stop_threshold_bytes.is_nan() || plan.stop_threshold_bytes <= 0.0 || plan.max_rounds < 1 {
        return Err(PlanError::BadLimits);
    }
    let path = topo.shortest_path(plan.src, plan.dst)?;

    let mut warnings = Vec::new();
    let mut blockers = Vec::new();
    let same_subnet = topo.same_subnet(plan.src, plan.dst);

    let storage = match plan.mode {
        MigrationMode::SharedStorage => {
            if !topo.same_storage_domain(plan.src, plan.dst) {
                blockers.push(format!(
                    "shared storage requested but `{}` and `{}` are on different SANs",
                    topo.name(plan.src),
                    topo.name(plan.dst)
                ));
            }
            StorageRequirement::Shared
        }
        MigrationMode::ContextTransfer => {
            if topo.bottleneck_capacity(&path) < link_speed_threshold {
                warnings.push(WARN_HIGH_LINK_SPEED.to_string());
            }
            StorageRequirement::MustTransfer
        }
    };

    let network_continuity = if same_subnet {
        NetworkContinuity::ArpBroadcast
    } else if plan.mobility == MobilityMode::Arp {
        blockers.push(format!(
            "ARP announcement cannot cross from subnet `{}` to `{}`; live sessions would be lost",
            topo.host(plan.src).subnet,
            topo.host(plan.dst).subnet
        ));
        NetworkContinuity::None
    } else {
        NetworkContinuity::TunnelRequired
    };

    Ok(FeasibilityReport {
        feasible: blockers.is_empty(),
        storage,
        network_continuity,
        warnings,
        blockers,
    })
}

/// Closed-form pre-copy schedule at a constant transfer rate.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecopySchedule {
    pub round_durations: Vec<f64>,
    /// Bytes left for stop-and-copy.
    pub residual_bytes: f64,
    pub converged: bool,
}

/// What the engine should do after a pre-copy round finishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RoundOutcome {
    /// Start another round carrying this many bytes.
    Continue(f64),
    /// Pause the VM; the residual is this many bytes.
    Stop { residual: f64, converged: bool },
}

/// Decides the step after round `round` (1-based) that lasted `duration`
/// seconds while the VM dirtied `dirty_rate` bytes/s.
pub fn next_round(round: u32, duration: f64, dirty_rate: f64, threshold: f64, max_rounds: u32) -> RoundOutcome {
    let payload = dirty_rate * duration;
    if payload <= threshold {
        RoundOutcome::Stop { residual: payload, converged: true }
    } else if round >= max_rounds {
        RoundOutcome::Stop { residual: payload, converged: false }
    } else {
        RoundOutcome::Continue(payload)
    }
}

/// Iterates the pre-copy recurrence for memory `mem` bytes, rate `rate`
/// bytes/s and dirty rate `dirty` bytes/s.
pub fn plan_precopy(mem: f64, rate: f64, dirty: f64, threshold: f64, max_rounds: u32) -> PrecopySchedule {
    assert!(mem > 0.0 && rate > 0.0 && dirty >= 0.0 && threshold > 0.0 && max_rounds >= 1);
    let mut round_durations = Vec::new();
    let mut payload = mem;
    loop {
        let duration = payload / rate;
        round_durations.push(duration);
        let round = round_durations.len() as u32;
        match next_round(round, duration, dirty, threshold, max_rounds) {
            RoundOutcome::Continue(next) => payload = next,
            RoundOutcome::Stop { residual, converged } => {
                return PrecopySchedule { round_durations, residual_bytes: residual, converged };
            }
        }
    }
}

/// Measured phases of one migration.
#[derive(Debug, Clone, PartialEq)]
pub struct MigrationOutcome {
    pub vm: VmId,
    pub mode: MigrationMode,
    pub mobility: MobilityMode,
    pub t_start: f64,
    pub t_disk: f64,
    pub t_context: f64,
    pub round_durations: Vec<f64>,
    /// Duration of the paused residual + CPU state copy.
    pub t_stop_copy: f64,
    pub t_redirect: f64,
    pub t_downtime: f64,
    pub t_total: f64,
    pub bytes_total: f64,
    pub residual_bytes: f64,
    pub converged: bool,
    /// False when the scenario ended before switchover.
    pub completed: bool,
    pub warnings: Vec<String>,
}

impl MigrationOutcome {
    pub fn rounds(&self) -> usize {
        self.round_durations.len()
    }

    pub fn t_precopy(&self) -> f64 {
        self.round_durations.iter().sum()
    }
}

/// Where a running migration is in its phase sequence.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Phase {
    Disk,
    Context,
    Round(u32),
    StopCopy,
    Redirect,
    Done,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Phase::Disk => f.write_str("disk"),
            Phase::Context => f.write_str("context"),
            Phase::Round(i) => write!(f, "round{i}"),
            Phase::StopCopy => f.write_str("stop-copy"),
            Phase::Redirect => f.write_str("redirect"),
            Phase::Done => f.write_str("done"),
        }
    }
}

/// Engine-side state of one migration.
#[derive(Debug, Clone)]
pub struct MigrationRun {
    pub plan: MigrationPlan,
    pub phase: Phase,
    pub outcome: MigrationOutcome,
    pub downtime_start: Option<SimTime>,
}

/// Transfer the engine should start next: phase and bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transfer {
    pub phase: Phase,
    pub bytes: f64,
}

impl MigrationRun {
    pub fn new(plan: MigrationPlan, warnings: Vec<String>) -> Self {
        let outcome = MigrationOutcome {
            vm: plan.vm,
            mode: plan.mode,
            mobility: plan.mobility,
            t_start: plan.start_at.secs(),
            t_disk: 0.0,
            t_context: 0.0,
            round_durations: Vec::new(),
            t_stop_copy: 0.0,
            t_redirect: 0.0,
            t_downtime: 0.0,
            t_total: 0.0,
            bytes_total: 0.0,
            residual_bytes: 0.0,
            converged: false,
            completed: false,
            warnings,
        };
        MigrationRun { plan, phase: Phase::Disk, outcome, downtime_start: None }
    }

    /// First transfer once the migration starts.
    pub fn start(&mut self, vm: &VmSpec) -> Transfer {
        match self.plan.mode {
            MigrationMode::ContextTransfer => {
                self.phase = Phase::Disk;
                Transfer { phase: Phase::Disk, bytes: vm.disk_bytes }
            }
            MigrationMode::SharedStorage => {
                self.phase = Phase::Round(1);
                Transfer { phase: Phase::Round(1), bytes: vm.mem_bytes }
            }
        }
    }

    /// Records a finished transfer of `bytes` that took `duration` seconds
    /// and returns the next one. `None` means stop-and-copy is done and the
    /// redirect must follow.
    pub fn transfer_done(&mut self, vm: &VmSpec, bytes: f64, duration: f64) -> Option<Transfer> {
        self.outcome.bytes_total += bytes;
        match self.phase {
            Phase::Disk => {
                self.outcome.t_disk = duration;
                self.phase = Phase::Context;
                Some(Transfer { phase: Phase::Context, bytes: vm.context_bytes })
            }
            Phase::Context => {
                self.outcome.t_context = duration;
                self.phase = Phase::Round(1);
                Some(Transfer { phase: Phase::Round(1), bytes: vm.mem_bytes })
            }
            Phase::Round(i) => {
                self.outcome.round_durations.push(duration);
                match next_round(i, duration, vm.dirty_rate, self.plan.stop_threshold_bytes, self.plan.max_rounds) {
                    RoundOutcome::Continue(payload) => {
                        self.phase = Phase::Round(i + 1);
                        Some(Transfer { phase: self.phase, bytes: payload })
                    }
                    RoundOutcome::Stop { residual, converged } => {
                        self.outcome.residual_bytes = residual;
                        self.outcome.converged = converged;
                        self.phase = Phase::StopCopy;
                        Some(Transfer { phase: Phase::StopCopy, bytes: residual + vm.cpu_state_bytes })
                    }
                }
            }
            Phase::StopCopy => {
                self.outcome.t_stop_copy = duration;
                self.phase = Phase::Redirect;
                None
            }
            Phase::Redirect | Phase::Done => unreachable!("no transfer runs in phase {}", self.phase),
        }
    }

    /// Closes the books once redirection has completed.
    pub fn finish(&mut self, t_redirect: f64) {
        let o = &mut self.outcome;
        o.t_redirect = t_redirect;
        o.t_downtime = o.t_stop_copy + t_redirect;
        o.t_total = o.t_disk + o.t_context + o.t_precopy() + o.t_downtime;
        o.completed = true;
        self.phase = Phase::Done;
    }

    /// Books whatever finished before the scenario ended.
    pub fn abandon(&mut self) {
        let o = &mut self.outcome;
        o.t_total = o.t_disk + o.t_context + o.t_precopy() + o.t_stop_copy;
        o.converged = false;
        o.warnings.push("incomplete at scenario end".to_string());
    }
}
