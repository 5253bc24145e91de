//! Discrete-event core: simulated clock, ordered event queue and the seeded
//! randomness source handed to models.
//!
//! Events are keyed by `(at, seq)`. `seq` is assigned at insertion and is
//! unique per queue, so events sharing a timestamp pop in insertion order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Default cap on dispatched events per run.
pub const DEFAULT_MAX_EVENTS: u64 = 10_000_000;

/// Simulated time in seconds. Always finite and non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimTime(f64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0.0);

    /// Returns `None` for negative, NaN or infinite values.
    pub fn new(seconds: f64) -> Option<Self> {
        (seconds.is_finite() && seconds >= 0.0).then_some(SimTime(seconds))
    }

    /// Panics on values [`SimTime::new`] would reject.
    pub fn from_secs(seconds: f64) -> Self {
        Self::new(seconds).unwrap_or_else(|| panic!("invalid simulated time {seconds}"))
    }

    pub fn secs(self) -> f64 {
        self.0
    }
}

impl Eq for SimTime {}

impl PartialOrd for SimTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for SimTime {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add<f64> for SimTime {
    type Output = SimTime;

    fn add(self, seconds: f64) -> SimTime {
        SimTime::from_secs(self.0 + seconds)
    }
}

impl Sub for SimTime {
    type Output = f64;

    fn sub(self, earlier: SimTime) -> f64 {
        self.0 - earlier.0
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.0)
    }
}

/// Closed set of event tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EventKind {
    FlowStart,
    FlowEnd,
    RoundComplete,
    Switchover,
    RequestArrival,
    MigrationStart,
    ScenarioEnd,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::FlowStart => "flow-start",
            EventKind::FlowEnd => "flow-end",
            EventKind::RoundComplete => "round-complete",
            EventKind::Switchover => "switchover",
            EventKind::RequestArrival => "request-arrival",
            EventKind::MigrationStart => "migration-start",
            EventKind::ScenarioEnd => "scenario-end",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Queue key of a scheduled event; usable to cancel it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct EventKey {
    pub at: SimTime,
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<P> {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
    pub payload: P,
}

impl<P> SimEvent<P> {
    pub fn key(&self) -> EventKey {
        EventKey { at: self.at, seq: self.seq }
    }
}

/// One dispatched event as recorded by [`EventQueue::run_until`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    pub at: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event scheduled in the past: at {at} but clock is {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },
    #[error("event budget of {limit} dispatched events exceeded")]
    BudgetExceeded { limit: u64 },
}

/// Pending events ordered by `(at, seq)` plus the simulated clock.
#[derive(Debug)]
pub struct EventQueue<P> {
    pending: BTreeMap<EventKey, (EventKind, P)>,
    next_seq: u64,
    clock: SimTime,
    dispatched: u64,
    max_events: u64,
}

impl<P> Default for EventQueue<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P> EventQueue<P> {
    pub fn new() -> Self {
        Self::with_budget(DEFAULT_MAX_EVENTS)
    }

    pub fn with_budget(max_events: u64) -> Self {
        EventQueue {
            pending: BTreeMap::new(),
            next_seq: 0,
            clock: SimTime::ZERO,
            dispatched: 0,
            max_events,
        }
    }

    pub fn now(&self) -> SimTime {
        self.clock
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, at: SimTime, kind: EventKind, payload: P) -> Result<EventKey, SimError> {
        if at < self.clock {
            return Err(SimError::ScheduleInPast { at, now: self.clock });
        }
        let key = EventKey { at, seq: self.next_seq };
        self.next_seq += 1;
        self.pending.insert(key, (kind, payload));
        Ok(key)
    }

    /// Removes a pending event. Returns it if it had not been dispatched yet.
    pub fn cancel(&mut self, key: EventKey) -> Option<SimEvent<P>> {
        self.pending.remove(&key).map(|(kind, payload)| SimEvent {
            at: key.at,
            seq: key.seq,
            kind,
            payload,
        })
    }

    pub fn peek_key(&self) -> Option<EventKey> {
        self.pending.keys().next().copied()
    }

    /// Pops the next event with `at <= t_end`, advancing the clock to it.
    pub fn pop_until(&mut self, t_end: SimTime) -> Result<Option<SimEvent<P>>, SimError> {
        match self.peek_key() {
            Some(key) if key.at <= t_end => {
                if self.dispatched >= self.max_events {
                    return Err(SimError::BudgetExceeded { limit: self.max_events });
                }
                let event = self.cancel(key).expect("peeked key is pending");
                self.dispatched += 1;
                self.clock = event.at;
                Ok(Some(event))
            }
            _ => Ok(None),
        }
    }

    /// Dispatches every event with `at <= t_end` in key order, then sets the
    /// clock to `t_end`. The handler may schedule further events.
    pub fn run_until<E, F>(&mut self, t_end: SimTime, mut handler: F) -> Result<Vec<Dispatch>, E>
    where
        E: From<SimError>,
        F: FnMut(&mut Self, SimEvent<P>) -> Result<(), E>,
    {
        let mut trace = Vec::new();
        while let Some(event) = self.pop_until(t_end)? {
            trace.push(Dispatch { at: event.at, seq: event.seq, kind: event.kind });
            handler(self, event)?;
        }
        if self.clock < t_end {
            self.clock = t_end;
        }
        Ok(trace)
    }
}

/// Seeded randomness shared by a run. Current models are deterministic and
/// do not draw from it; the seed is still recorded in every output.
#[derive(Debug, Clone)]
pub struct SimRng {
    seed: u64,
    rng: ChaCha8Rng,
}

impl SimRng {
    pub fn new(seed: u64) -> Self {
        SimRng { seed, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn t(s: f64) -> SimTime {
        SimTime::from_secs(s)
    }

    #[test]
    fn single_event_pops() {
        let mut q = EventQueue::new();
        q.schedule(t(0.0), EventKind::ScenarioEnd, ()).unwrap();
        let ev = q.pop_until(t(1.0)).unwrap().unwrap();
        assert_eq!(ev.at, t(0.0));
        assert!(q.pop_until(t(1.0)).unwrap().is_none());
    }

    #[test]
    fn equal_times_pop_in_seq_order() {
        let mut q = EventQueue::new();
        q.schedule(t(5.0), EventKind::FlowStart, "first").unwrap();
        q.schedule(t(5.0), EventKind::FlowStart, "second").unwrap();
        let a = q.pop_until(t(9.0)).unwrap().unwrap();
        let b = q.pop_until(t(9.0)).unwrap().unwrap();
        assert_eq!((a.seq, a.payload), (0, "first"));
        assert_eq!((b.seq, b.payload), (1, "second"));
    }

    #[test]
    fn event_scheduled_during_dispatch_precedes_later_one() {
        // Queue states: {2, 4} -> dispatch 2, insert 3 -> {3, 4} -> 3 then 4.
        let mut q = EventQueue::new();
        q.schedule(t(2.0), EventKind::FlowStart, 2).unwrap();
        q.schedule(t(4.0), EventKind::FlowStart, 4).unwrap();
        let mut order = Vec::new();
        q.run_until(t(10.0), |q, ev| -> Result<(), SimError> {
            order.push(ev.payload);
            if ev.payload == 2 {
                q.schedule(t(3.0), EventKind::FlowEnd, 3)?;
            }
            Ok(())
        })
        .unwrap();
        assert_eq!(order, vec![2, 3, 4]);
    }

    #[test]
    fn scheduling_in_the_past_is_an_error() {
        let mut q = EventQueue::new();
        q.schedule(t(2.0), EventKind::FlowStart, ()).unwrap();
        q.pop_until(t(5.0)).unwrap();
        let err = q.schedule(t(1.0), EventKind::FlowStart, ()).unwrap_err();
        assert_eq!(err, SimError::ScheduleInPast { at: t(1.0), now: t(2.0) });
    }

    #[test]
    fn empty_run_advances_clock_to_end() {
        let mut q: EventQueue<()> = EventQueue::new();
        let trace = q.run_until(t(7.5), |_, _| Ok::<(), SimError>(())).unwrap();
        assert!(trace.is_empty());
        assert_eq!(q.now(), t(7.5));
    }

    #[test]
    fn run_until_stops_at_end_time() {
        let mut q = EventQueue::new();
        for s in [1.0, 2.0, 3.0] {
            q.schedule(t(s), EventKind::RequestArrival, ()).unwrap();
        }
        let trace = q.run_until(t(2.0), |_, _| Ok::<(), SimError>(())).unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(q.len(), 1);
    }

    #[test]
    fn doubling_chain_dispatches_three_times_before_five() {
        // 1 -> 2 -> 4 -> 8; only the first three fall inside t_end = 5.
        let mut q = EventQueue::new();
        q.schedule(t(1.0), EventKind::RoundComplete, ()).unwrap();
        let trace = q
            .run_until(t(5.0), |q, ev| -> Result<(), SimError> {
                q.schedule(t(ev.at.secs() * 2.0), EventKind::RoundComplete, ())?;
                Ok(())
            })
            .unwrap();
        let times: Vec<f64> = trace.iter().map(|d| d.at.secs()).collect();
        assert_eq!(times, vec![1.0, 2.0, 4.0]);
        assert_eq!(q.peek_key().unwrap().at, t(8.0));
    }

    #[test]
    fn budget_overflow_aborts() {
        let mut q = EventQueue::with_budget(3);
        q.schedule(t(0.0), EventKind::FlowStart, ()).unwrap();
        let err = q
            .run_until(t(1.0), |q, ev| -> Result<(), SimError> {
                q.schedule(ev.at, EventKind::FlowStart, ())?;
                Ok(())
            })
            .unwrap_err();
        assert_eq!(err, SimError::BudgetExceeded { limit: 3 });
        assert_eq!(q.dispatched(), 3);
    }

    #[test]
    fn cancelled_events_never_dispatch() {
        let mut q = EventQueue::new();
        let k = q.schedule(t(1.0), EventKind::FlowEnd, "stale").unwrap();
        q.schedule(t(2.0), EventKind::FlowEnd, "live").unwrap();
        assert!(q.cancel(k).is_some());
        assert!(q.cancel(k).is_none());
        let ev = q.pop_until(t(3.0)).unwrap().unwrap();
        assert_eq!(ev.payload, "live");
    }

    #[test]
    fn rejects_invalid_times() {
        assert!(SimTime::new(-1.0).is_none());
        assert!(SimTime::new(f64::NAN).is_none());
        assert!(SimTime::new(f64::INFINITY).is_none());
    }

    proptest! {
        #[test]
        fn dispatch_keys_are_nondecreasing(times in proptest::collection::vec(0u32..50, 1..60)) {
            let mut q = EventQueue::new();
            for (i, s) in times.iter().enumerate() {
                q.schedule(t(*s as f64), EventKind::FlowStart, i).unwrap();
            }
            let trace = q
                .run_until(t(100.0), |q, ev| -> Result<(), SimError> {
                    // Every fifth event reschedules a follower at the same or later time.
                    if ev.payload % 5 == 0 && ev.at.secs() < 60.0 {
                        q.schedule(ev.at + (ev.payload % 3) as f64, EventKind::FlowEnd, ev.payload + 1)?;
                    }
                    Ok(())
                })
                .unwrap();
            for pair in trace.windows(2) {
                prop_assert!((pair[0].at, pair[0].seq) < (pair[1].at, pair[1].seq));
            }
        }
    }
}
