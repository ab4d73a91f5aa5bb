use super::hybrid::event;
use super::{Device, EventKind, FrameTrace, Randomness, SeededRandomness, SimReport, TraceLevel, Variant, Winner};
use crate::error::Result;
use crate::timing::{ClassConfig, Nanos, TimingConstants};

/// Round-robin TDMA baseline with a seeded random stream.
pub fn run_tdma(cfg: &ClassConfig, tc: &TimingConstants, frames: usize, seed: u64) -> Result<SimReport> {
    let mut rng = SeededRandomness::new(seed);
    run_tdma_with(cfg, tc, frames, seed, &mut rng, TraceLevel::Summary)
}

/// Round-robin TDMA baseline with an explicit random source.
///
/// A frame offers `min(K, floor(T_frame / T_r))` slots. Ownership cycles over
/// device ids and continues across frames, so with more devices than slots a
/// device owns a slot only every few frames. An owner with an empty buffer
/// wastes its slot.
pub fn run_tdma_with<R: Randomness + ?Sized>(
    cfg: &ClassConfig,
    tc: &TimingConstants,
    frames: usize,
    seed: u64,
    rng: &mut R,
    level: TraceLevel,
) -> Result<SimReport> {
    cfg.validate()?;
    tc.validate()?;
    let full = level == TraceLevel::Full;
    let mut devices: Vec<Device> =
        cfg.device_classes().into_iter().enumerate().map(|(id, q)| Device::new(id, q)).collect();
    let k = devices.len() as u64;
    let per_frame = tc.slots_per_frame().min(k);
    let mut arrivals = Vec::new();
    for dev in devices.iter_mut() {
        arrivals.clear();
        rng.arrivals(0, dev.id, cfg.lambda, tc.t_frame, &mut arrivals);
        for &a in &arrivals {
            dev.receive(0, a);
        }
    }

    let mut traces = Vec::with_capacity(frames);
    let mut cursor = 0u64;
    for index in 1..=frames as u64 {
        let mut trace = FrameTrace { index, ..FrameTrace::default() };
        trace.active = devices.iter().filter(|d| d.is_active()).count() as u64;
        for dev in devices.iter_mut() {
            arrivals.clear();
            rng.arrivals(index, dev.id, cfg.lambda, tc.t_frame, &mut arrivals);
            // first slot index owned by this device in the current frame
            let slot = (dev.id as u64 + k - cursor) % k;
            if slot >= per_frame {
                for &a in &arrivals {
                    dev.receive(index, a);
                }
                continue;
            }
            let start = tc.t_r * slot;
            let split = arrivals.partition_point(|&a| a < start);
            for &a in &arrivals[..split] {
                dev.receive(index, a);
            }
            if dev.transmit(index).is_some() {
                trace.m += 1;
                trace.winners.push(Winner { device: dev.id, slot });
                trace.ledger.top_tx += tc.t_r.0 as u128;
                if full {
                    trace.events.push(event(EventKind::Data, start, tc.t_r, 1, Some(dev.id)));
                }
            }
            for &a in &arrivals[split..] {
                dev.receive(index, a);
            }
        }
        trace.winners.sort_by_key(|w| w.slot);
        trace.events.sort_by_key(|e| e.start);
        trace.t_cop = Nanos::ZERO;
        cursor = (cursor + per_frame) % k.max(1);
        traces.push(trace);
    }
    Ok(SimReport { variant: Variant::Tdma, seed, tc: tc.clone(), frames: traces, devices })
}
