use std::collections::BTreeMap;

use super::{
    ContenderGroup, ContenderRecord, ContentionAccount, Device, EventKind, FrameTrace, Randomness, SeededRandomness,
    SimReport, SlotOutcome, TraceEvent, TraceLevel, Variant, Winner,
};
use crate::error::{Error, Result};
use crate::optimizer::FramePlan;
use crate::priority::{ContentionIdentity, ProbabilityRule};
use crate::timing::{ClassConfig, Nanos, TimingConstants};

/// Simulates the hybrid protocol under `plan` with a seeded random stream.
pub fn run_hybrid(
    cfg: &ClassConfig,
    tc: &TimingConstants,
    plan: &FramePlan,
    frames: usize,
    seed: u64,
) -> Result<SimReport> {
    let mut rng = SeededRandomness::new(seed);
    run_hybrid_with(cfg, tc, plan, frames, seed, &mut rng, TraceLevel::Summary)
}

/// Simulates the hybrid protocol with an explicit random source.
///
/// Each frame: notification, contention until either plan threshold (or the
/// frame budget) is reached, announcement, then one transmission slot per
/// winner in order of winning. Losers escalate their failure count.
pub fn run_hybrid_with<R: Randomness + ?Sized>(
    cfg: &ClassConfig,
    tc: &TimingConstants,
    plan: &FramePlan,
    frames: usize,
    seed: u64,
    rng: &mut R,
    level: TraceLevel,
) -> Result<SimReport> {
    cfg.validate()?;
    tc.validate()?;
    if plan.horizon() != frames {
        return Err(Error::PlanMismatch(format!(
            "plan covers {} frames, run asks for {frames}",
            plan.horizon()
        )));
    }
    if plan.alpha_opt != cfg.alpha || plan.p_inl_opt != cfg.p_inl {
        return Err(Error::PlanMismatch(format!(
            "plan operating point ({}, {}) differs from configuration ({}, {})",
            plan.alpha_opt, plan.p_inl_opt, cfg.alpha, cfg.p_inl
        )));
    }
    if tc.t_nof + tc.t_anc + tc.t_r > tc.t_frame {
        return Err(Error::PlanMismatch("frame too short for notification and announcement".into()));
    }
    let rule = ProbabilityRule::new(cfg.p_inl, cfg.alpha, cfg.escalation())?;
    let slots = tc.slot_durations();
    let full = level == TraceLevel::Full;
    let mut devices: Vec<Device> =
        cfg.device_classes().into_iter().enumerate().map(|(id, q)| Device::new(id, q)).collect();
    let k = devices.len() as u64;
    let mut arrivals = Vec::new();
    for dev in devices.iter_mut() {
        arrivals.clear();
        rng.arrivals(0, dev.id, cfg.lambda, tc.t_frame, &mut arrivals);
        for &a in &arrivals {
            dev.receive(0, a);
        }
    }

    let mut traces = Vec::with_capacity(frames);
    let mut slot_of: Vec<Option<u64>> = vec![None; devices.len()];
    for (planned, index) in plan.frames.iter().zip(1u64..) {
        let mut trace = FrameTrace { index, notified: k, ..FrameTrace::default() };
        trace.ledger.np_rx = k as u128 * tc.t_nof.0 as u128;
        if full {
            trace.events.push(event(EventKind::Notification, Nanos::ZERO, tc.t_nof, 0, None));
        }

        let mut by_identity: BTreeMap<ContentionIdentity, Vec<usize>> = BTreeMap::new();
        for dev in devices.iter().filter(|d| d.is_active()) {
            by_identity.entry(dev.identity()).or_default().push(dev.id);
        }
        let mut groups: Vec<(f64, Vec<usize>)> =
            by_identity.into_iter().map(|(id, members)| (rule.probability(id), members)).collect();
        let active: u64 = groups.iter().map(|g| g.1.len() as u64).sum();
        trace.active = active;
        if full {
            for (p, members) in &groups {
                for &m in members {
                    let id = devices[m].identity();
                    trace.contenders.push(ContenderRecord { device: m, q: id.q, d: id.d, p: *p });
                }
            }
        }

        let threshold = Nanos::from_us_f64(planned.t_cop_opt_us);
        let mut account = ContentionAccount::new(tc);
        let mut elapsed = Nanos::ZERO;
        let mut winners: Vec<usize> = Vec::new();
        let mut remaining = active;
        loop {
            let won = winners.len() as u64;
            if won >= planned.m_opt || elapsed > threshold || remaining == 0 {
                break;
            }
            if tc.t_nof + elapsed + slots.success + tc.t_anc + tc.t_r * (won + 1) > tc.t_frame {
                break;
            }
            let view: Vec<ContenderGroup<'_>> =
                groups.iter().map(|(p, members)| ContenderGroup { p: *p, members }).collect();
            let (kind, duration, transmitters, device) = match rng.draw_slot(&view) {
                SlotOutcome::Idle => (EventKind::Idle, slots.idle, 0, None),
                SlotOutcome::Collision { transmitters } => (EventKind::Collision, slots.collision, transmitters, None),
                SlotOutcome::Success { group, member } => {
                    let id = groups[group].1.swap_remove(member);
                    winners.push(id);
                    remaining -= 1;
                    (EventKind::Success, slots.success, 1, Some(id))
                }
            };
            account.slot(&mut trace, kind, duration, active, transmitters);
            if full {
                trace.events.push(event(kind, tc.t_nof + elapsed, duration, transmitters, device));
            }
            elapsed += duration;
        }
        trace.t_cop = elapsed;

        trace.ledger.ap_rx = active as u128 * tc.t_anc.0 as u128;
        let ap_start = tc.t_nof + elapsed;
        if full {
            trace.events.push(event(EventKind::Announcement, ap_start, tc.t_anc, 0, None));
        }
        let top_start = ap_start + tc.t_anc;
        let m = winners.len() as u64;
        trace.m = m;
        trace.ledger.top_tx = m as u128 * tc.t_r.0 as u128;
        trace.ledger.top_idle = (active - m) as u128 * m as u128 * tc.t_r.0 as u128;
        for (slot, &id) in (0u64..).zip(&winners) {
            slot_of[id] = Some(slot);
            trace.winners.push(Winner { device: id, slot });
            if full {
                trace.events.push(event(EventKind::Data, top_start + tc.t_r * slot, tc.t_r, 1, Some(id)));
            }
        }

        for (_, members) in &groups {
            for &id in members {
                devices[id].failures += 1;
            }
        }
        for dev in devices.iter_mut() {
            arrivals.clear();
            rng.arrivals(index, dev.id, cfg.lambda, tc.t_frame, &mut arrivals);
            match slot_of[dev.id].take() {
                Some(slot) => {
                    let tx = top_start + tc.t_r * slot;
                    let split = arrivals.partition_point(|&a| a < tx);
                    for &a in &arrivals[..split] {
                        dev.receive(index, a);
                    }
                    dev.transmit(index);
                    for &a in &arrivals[split..] {
                        dev.receive(index, a);
                    }
                }
                None => {
                    for &a in &arrivals {
                        dev.receive(index, a);
                    }
                }
            }
        }
        traces.push(trace);
    }
    Ok(SimReport { variant: Variant::Hybrid, seed, tc: tc.clone(), frames: traces, devices })
}

pub(super) fn event(kind: EventKind, start: Nanos, duration: Nanos, transmitters: u64, device: Option<usize>) -> TraceEvent {
    TraceEvent { kind, start, duration, transmitters, device }
}
