use serde::{Deserialize, Serialize};

use crate::priority::ContentionIdentity;
use crate::timing::Nanos;

/// A buffered packet: arrival offset within its frame and the frame index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Packet {
    pub arrival: Nanos,
    pub frame: u64,
}

/// Per-device counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeviceStats {
    pub generated: u64,
    pub dropped: u64,
    /// Successful transmissions `W`.
    pub delivered: u64,
    /// Sum of `k2 - k1` over delivered packets.
    pub delay_frames: u64,
}

/// Simulated endpoint with a one-packet buffer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Device {
    pub id: usize,
    pub class: u32,
    pub failures: u32,
    pub buffer: Option<Packet>,
    pub stats: DeviceStats,
}

impl Device {
    pub fn new(id: usize, class: u32) -> Self {
        Self { id, class, failures: 0, buffer: None, stats: DeviceStats::default() }
    }

    pub fn is_active(&self) -> bool {
        self.buffer.is_some()
    }

    pub fn identity(&self) -> ContentionIdentity {
        ContentionIdentity::new(self.class, self.failures)
    }

    /// Stores a new packet, replacing (and dropping) any buffered one.
    pub fn receive(&mut self, frame: u64, arrival: Nanos) {
        self.stats.generated += 1;
        if self.buffer.is_some() {
            self.stats.dropped += 1;
        }
        self.buffer = Some(Packet { arrival, frame });
    }

    /// Sends the buffered packet in frame `frame` and clears the failure count.
    pub fn transmit(&mut self, frame: u64) -> Option<Packet> {
        let packet = self.buffer.take()?;
        self.stats.delivered += 1;
        self.stats.delay_frames += frame - packet.frame;
        self.failures = 0;
        Some(packet)
    }

    pub fn buffered(&self) -> u64 {
        self.buffer.is_some() as u64
    }
}
