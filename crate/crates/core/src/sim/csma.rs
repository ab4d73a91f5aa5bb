use super::hybrid::event;
use super::{
    ContenderGroup, ContentionAccount, Device, EventKind, FrameTrace, Randomness, SeededRandomness, SimReport,
    SlotOutcome, TraceLevel, Variant, Winner,
};
use crate::error::{Error, Result};
use crate::timing::{ClassConfig, Nanos, TimingConstants};

/// p-persistent CSMA baseline with a seeded random stream.
pub fn run_csma(cfg: &ClassConfig, tc: &TimingConstants, p: f64, frames: usize, seed: u64) -> Result<SimReport> {
    let mut rng = SeededRandomness::new(seed);
    run_csma_with(cfg, tc, p, frames, seed, &mut rng, TraceLevel::Summary)
}

/// p-persistent CSMA baseline with an explicit random source.
///
/// The whole frame is contention. Every buffered device transmits a request
/// with probability `p` in each slot; a success is followed at once by the
/// data slot. Packets arriving mid-frame join at the next slot boundary. A
/// slot is started only if a success and its data slot would still end
/// inside the frame.
pub fn run_csma_with<R: Randomness + ?Sized>(
    cfg: &ClassConfig,
    tc: &TimingConstants,
    p: f64,
    frames: usize,
    seed: u64,
    rng: &mut R,
    level: TraceLevel,
) -> Result<SimReport> {
    cfg.validate()?;
    tc.validate()?;
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::InvalidArgument(format!("csma probability {p} not in (0, 1]")));
    }
    let slots = tc.slot_durations();
    let full = level == TraceLevel::Full;
    let mut devices: Vec<Device> =
        cfg.device_classes().into_iter().enumerate().map(|(id, q)| Device::new(id, q)).collect();
    let mut scratch = Vec::new();
    for dev in devices.iter_mut() {
        scratch.clear();
        rng.arrivals(0, dev.id, cfg.lambda, tc.t_frame, &mut scratch);
        for &a in &scratch {
            dev.receive(0, a);
        }
    }

    let mut traces = Vec::with_capacity(frames);
    let mut pending: Vec<(Nanos, usize)> = Vec::new();
    for index in 1..=frames as u64 {
        let mut trace = FrameTrace { index, ..FrameTrace::default() };
        pending.clear();
        for dev in devices.iter() {
            scratch.clear();
            rng.arrivals(index, dev.id, cfg.lambda, tc.t_frame, &mut scratch);
            pending.extend(scratch.iter().map(|&a| (a, dev.id)));
        }
        pending.sort_unstable();

        let mut contenders: Vec<usize> = devices.iter().filter(|d| d.is_active()).map(|d| d.id).collect();
        trace.active = contenders.len() as u64;
        let mut account = ContentionAccount::new(tc);
        let mut next = 0;
        let mut t = Nanos::ZERO;
        let mut busy = Nanos::ZERO;
        loop {
            while next < pending.len() && pending[next].0 <= t {
                let (a, id) = pending[next];
                if !devices[id].is_active() {
                    contenders.push(id);
                }
                devices[id].receive(index, a);
                next += 1;
            }
            if contenders.is_empty() {
                match pending.get(next) {
                    Some(&(a, _)) => {
                        t = t.max(a);
                        continue;
                    }
                    None => break,
                }
            }
            if t + slots.success + tc.t_r > tc.t_frame {
                break;
            }
            let listeners = contenders.len() as u64;
            let view = [ContenderGroup { p, members: &contenders }];
            match rng.draw_slot(&view) {
                SlotOutcome::Idle => {
                    account.slot(&mut trace, EventKind::Idle, slots.idle, listeners, 0);
                    if full {
                        trace.events.push(event(EventKind::Idle, t, slots.idle, 0, None));
                    }
                    t += slots.idle;
                    busy += slots.idle;
                }
                SlotOutcome::Collision { transmitters } => {
                    account.slot(&mut trace, EventKind::Collision, slots.collision, listeners, transmitters);
                    if full {
                        trace.events.push(event(EventKind::Collision, t, slots.collision, transmitters, None));
                    }
                    t += slots.collision;
                    busy += slots.collision;
                }
                SlotOutcome::Success { member, .. } => {
                    let id = contenders.swap_remove(member);
                    account.slot(&mut trace, EventKind::Success, slots.success, listeners, 1);
                    devices[id].transmit(index);
                    trace.ledger.top_tx += tc.t_r.0 as u128;
                    trace.ledger.top_idle += (listeners - 1) as u128 * tc.t_r.0 as u128;
                    trace.winners.push(Winner { device: id, slot: trace.m });
                    trace.m += 1;
                    if full {
                        trace.events.push(event(EventKind::Success, t, slots.success, 1, Some(id)));
                        trace.events.push(event(EventKind::Data, t + slots.success, tc.t_r, 1, Some(id)));
                    }
                    t += slots.success + tc.t_r;
                    busy += slots.success;
                }
            }
        }
        trace.t_cop = busy;
        for &(a, id) in &pending[next..] {
            devices[id].receive(index, a);
        }
        traces.push(trace);
    }
    Ok(SimReport { variant: Variant::Csma, seed, tc: tc.clone(), frames: traces, devices })
}
