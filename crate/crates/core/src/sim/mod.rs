//! Frame-level simulation of the hybrid protocol and its two baselines.
//!
//! Each run is sequential and consumes a single [`Randomness`] stream, so a
//! seed fully determines its [`SimReport`]. Frame 0 only collects arrivals;
//! frames `1..=I` are simulated and reported.

mod csma;
mod device;
mod hybrid;
mod random;
mod tdma;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::timing::{Nanos, TimingConstants};

pub use csma::{run_csma, run_csma_with};
pub use device::{Device, DeviceStats, Packet};
pub use hybrid::{run_hybrid, run_hybrid_with};
pub use random::{ContenderGroup, Randomness, SeededRandomness, SlotOutcome};
pub use tdma::{run_tdma, run_tdma_with};

/// Protocol under simulation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hybrid,
    Csma,
    Tdma,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Hybrid, Variant::Csma, Variant::Tdma];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Hybrid => "hybrid",
            Variant::Csma => "csma",
            Variant::Tdma => "tdma",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.trim().to_ascii_lowercase().as_str() {
            "hybrid" => Ok(Variant::Hybrid),
            "csma" => Ok(Variant::Csma),
            "tdma" => Ok(Variant::Tdma),
            other => Err(Error::InvalidArgument(format!("unknown variant `{other}`"))),
        }
    }
}

/// How much detail a run records per frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TraceLevel {
    /// Aggregates only.
    #[default]
    Summary,
    /// Aggregates plus every channel event and the contender list.
    Full,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventKind {
    Notification,
    Idle,
    Collision,
    Success,
    Announcement,
    Data,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Notification => "notification",
            EventKind::Idle => "idle",
            EventKind::Collision => "collision",
            EventKind::Success => "success",
            EventKind::Announcement => "announcement",
            EventKind::Data => "data",
        }
    }
}

/// One channel event; `start` is the offset from the frame start.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub kind: EventKind,
    pub start: Nanos,
    pub duration: Nanos,
    pub transmitters: u64,
    pub device: Option<usize>,
}

/// A device contending in a frame and its probability.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContenderRecord {
    pub device: usize,
    pub q: u32,
    pub d: u32,
    pub p: f64,
}

/// A contention winner and its transmission slot (0-based) in the TOP.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Winner {
    pub device: usize,
    pub slot: u64,
}

/// Device-time spent in each radio mode, summed over devices (device·ns).
///
/// `top_idle` is the time contention losers spend during the transmission
/// period. They sleep behaviourally but the default energy accounting
/// charges idle power, so the ledger keeps the duration separately.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RadioLedger {
    pub np_rx: u128,
    pub cop_tx: u128,
    pub cop_idle: u128,
    pub ap_rx: u128,
    pub top_tx: u128,
    pub top_idle: u128,
    /// Contention energy (J) with the channel-level charging rule: idle runs
    /// before a collision at idle power; collisions, the last idle run and
    /// the success at transmit power.
    pub per_event_cop_j: f64,
}

/// What happened in one frame.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FrameTrace {
    pub index: u64,
    /// Devices holding a packet when the frame's contention starts.
    pub active: u64,
    /// Devices charged for the notification broadcast.
    pub notified: u64,
    /// Packets delivered in this frame.
    pub m: u64,
    pub winners: Vec<Winner>,
    pub t_cop: Nanos,
    pub idle_slots: u64,
    pub collision_slots: u64,
    pub success_slots: u64,
    pub idle_time: Nanos,
    pub collision_time: Nanos,
    pub success_time: Nanos,
    pub ledger: RadioLedger,
    pub events: Vec<TraceEvent>,
    pub contenders: Vec<ContenderRecord>,
}

/// Result of one simulation run.
#[derive(Clone, Debug, PartialEq)]
pub struct SimReport {
    pub variant: Variant,
    pub seed: u64,
    pub tc: TimingConstants,
    pub frames: Vec<FrameTrace>,
    /// Final device states, indexed by device id.
    pub devices: Vec<Device>,
}

impl SimReport {
    pub fn utilities(&self) -> Vec<f64> {
        let share = self.tc.t_r.0 as f64 / self.tc.t_frame.0 as f64;
        self.frames.iter().map(|f| f.m as f64 * share).collect()
    }

    pub fn device_count(&self) -> usize {
        self.devices.len()
    }
}

/// Channel-time bookkeeping shared by the contention loops.
#[derive(Debug)]
struct ContentionAccount {
    p_tx: f64,
    p_idle: f64,
    pending_j: f64,
    idle_run: Nanos,
}

impl ContentionAccount {
    fn new(tc: &TimingConstants) -> Self {
        Self { p_tx: tc.p_tx, p_idle: tc.p_idle, pending_j: 0.0, idle_run: Nanos(0) }
    }

    /// Records one slot heard by `listeners` devices, `transmitters` of
    /// which sent a request.
    fn slot(&mut self, trace: &mut FrameTrace, kind: EventKind, duration: Nanos, listeners: u64, transmitters: u64) {
        let d = duration.0 as u128;
        trace.ledger.cop_tx += transmitters as u128 * d;
        trace.ledger.cop_idle += listeners.saturating_sub(transmitters) as u128 * d;
        let secs = duration.as_secs();
        match kind {
            EventKind::Idle => {
                trace.idle_slots += 1;
                trace.idle_time += duration;
                self.idle_run += duration;
            }
            EventKind::Collision => {
                trace.collision_slots += 1;
                trace.collision_time += duration;
                self.pending_j += self.idle_run.as_secs() * self.p_idle + secs * self.p_tx;
                self.idle_run = Nanos(0);
            }
            EventKind::Success => {
                trace.success_slots += 1;
                trace.success_time += duration;
                trace.ledger.per_event_cop_j +=
                    self.pending_j + self.idle_run.as_secs() * self.p_tx + secs * self.p_tx;
                self.pending_j = 0.0;
                self.idle_run = Nanos(0);
            }
            _ => unreachable!("not a contention slot"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variant_parsing() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
        }
        assert!("aloha".parse::<Variant>().is_err());
    }
}
