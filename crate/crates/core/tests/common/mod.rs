#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use hybridmac_core::optimizer::FramePlan;
use hybridmac_core::sim::{self, ContenderGroup, Randomness, SimReport, SlotOutcome, TraceLevel};
use hybridmac_core::{ClassConfig, Nanos, TimingConstants};

/// Scripted slot result, naming devices rather than group positions.
#[derive(Clone, Debug)]
pub enum Scripted {
    Idle,
    Collision(u64),
    Win(usize),
}

/// Random source replaying fixed arrivals and per-frame slot outcomes. When
/// a frame's script runs out every further slot is idle.
///
/// The reservation simulators draw a frame's arrivals after its contention
/// period, so the arrival call for frame `i` marks the start of frame
/// `i + 1`. The CSMA simulator draws them up front; use [`Self::csma`].
pub struct ScriptedRandomness {
    pub arrivals: BTreeMap<(u64, usize), Vec<Nanos>>,
    pub slots: BTreeMap<u64, VecDeque<Scripted>>,
    lead: u64,
    current: u64,
}

impl Default for ScriptedRandomness {
    fn default() -> Self {
        Self { arrivals: BTreeMap::new(), slots: BTreeMap::new(), lead: 1, current: 0 }
    }
}

impl ScriptedRandomness {
    pub fn csma() -> Self {
        Self { lead: 0, ..Self::default() }
    }

    pub fn arrive(&mut self, frame: u64, device: usize, offset_ms: u64) {
        self.arrivals.entry((frame, device)).or_default().push(Nanos::from_ms(offset_ms));
    }

    pub fn script(&mut self, frame: u64, slots: Vec<Scripted>) {
        self.slots.insert(frame, slots.into());
    }
}

impl Randomness for ScriptedRandomness {
    fn arrivals(&mut self, frame: u64, device: usize, _lambda: f64, _t_frame: Nanos, out: &mut Vec<Nanos>) {
        self.current = frame + self.lead;
        if let Some(list) = self.arrivals.get(&(frame, device)) {
            out.extend(list);
        }
    }

    fn draw_slot(&mut self, groups: &[ContenderGroup<'_>]) -> SlotOutcome {
        let next = self.slots.get_mut(&self.current).and_then(|q| q.pop_front());
        match next {
            None | Some(Scripted::Idle) => SlotOutcome::Idle,
            Some(Scripted::Collision(n)) => SlotOutcome::Collision { transmitters: n },
            Some(Scripted::Win(device)) => {
                for (group, g) in groups.iter().enumerate() {
                    if let Some(member) = g.members.iter().position(|&m| m == device) {
                        return SlotOutcome::Success { group, member };
                    }
                }
                panic!("scripted winner {device} is not contending");
            }
        }
    }
}

/// Device indices are zero-based: `D1` is device 0.
pub const P1: f64 = 0.1;

/// Eight devices of one class over four frames: the warm-up frame activates
/// D1, D2 (twice), D5 and D7; D1 and D2 win frame 1 while D3, D4, D5 and D8
/// receive packets; D7 alone loses frame 2, wins frame 3 at the third level
/// and, refilled during frame 3, returns at the first level in frame 4.
pub fn eight_device_replay() -> SimReport {
    use Scripted::*;
    let cfg = ClassConfig::homogeneous(8, P1, 1.0, 1.0);
    let tc = TimingConstants::default();
    let plan = FramePlan::uniform(1.0, P1, 4, 8, 200.0);
    let mut rng = ScriptedRandomness::default();
    rng.arrive(0, 0, 100);
    rng.arrive(0, 1, 100);
    rng.arrive(0, 1, 500);
    rng.arrive(0, 4, 300);
    rng.arrive(0, 6, 700);
    rng.script(1, vec![Collision(2), Win(0), Idle, Win(1)]);
    rng.arrive(1, 1, 900);
    for d in [2, 3, 4, 7] {
        rng.arrive(1, d, 50);
    }
    rng.script(2, vec![Win(1), Win(2), Collision(3), Win(3), Win(4), Win(7)]);
    rng.script(3, vec![Idle, Win(6)]);
    rng.arrive(3, 6, 800);
    rng.script(4, vec![Win(6)]);
    sim::run_hybrid_with(&cfg, &tc, &plan, 4, 0, &mut rng, TraceLevel::Full).expect("scripted run")
}
