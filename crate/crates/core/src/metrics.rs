//! Evaluation metrics computed from simulation reports.
//!
//! Utility, drop ratio, delay and the per-frame energy decomposition, plus
//! CSV writers. Every CSV starts with a `# schema=<name>/<version>` line.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::{FrameTrace, SimReport};
use crate::timing::TimingConstants;

pub const FRAME_SCHEMA: &str = "hybridmac-frames/1";
pub const DEVICE_SCHEMA: &str = "hybridmac-devices/1";
pub const TRACE_SCHEMA: &str = "hybridmac-trace/1";

/// How radio time is converted to energy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnergyAccounting {
    /// Transmitters at transmit power, every other awake device at idle
    /// power, losers idle through the transmission period.
    #[default]
    Physical,
    /// Contention energy charged once per channel event, with collisions,
    /// the final idle run and the success at transmit power.
    PerEvent,
    /// Physical, except that losers sleep through the transmission period.
    SleepingLosers,
}

/// Energy spent in one frame, joules.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyBreakdown {
    pub e_np: f64,
    pub e_cop: f64,
    pub e_ap: f64,
    /// Winners transmitting data.
    pub e_s: f64,
    /// Other devices during data transmissions.
    pub e_in: f64,
    pub e_top: f64,
    pub e_frame: f64,
}

impl EnergyBreakdown {
    fn from_parts(e_np: f64, e_cop: f64, e_ap: f64, e_s: f64, e_in: f64) -> Self {
        let e_top = e_s + e_in;
        Self { e_np, e_cop, e_ap, e_s, e_in, e_top, e_frame: e_np + e_cop + e_ap + e_top }
    }

    /// Component-wise mean.
    pub fn mean(items: &[EnergyBreakdown]) -> EnergyBreakdown {
        if items.is_empty() {
            return EnergyBreakdown::default();
        }
        let n = items.len() as f64;
        let avg = |f: fn(&EnergyBreakdown) -> f64| items.iter().map(f).sum::<f64>() / n;
        EnergyBreakdown::from_parts(avg(|e| e.e_np), avg(|e| e.e_cop), avg(|e| e.e_ap), avg(|e| e.e_s), avg(|e| e.e_in))
    }
}

fn joules(device_ns: u128, watts: f64) -> f64 {
    device_ns as f64 * 1e-9 * watts
}

/// Checks that a trace's aggregates agree with each other.
pub fn check_trace(trace: &FrameTrace, tc: &TimingConstants) -> Result<()> {
    let fail = |what: String| Err(Error::InconsistentTrace(format!("frame {}: {what}", trace.index)));
    if trace.winners.len() as u64 != trace.m {
        return fail(format!("{} winners listed for M = {}", trace.winners.len(), trace.m));
    }
    let mut slots: Vec<u64> = trace.winners.iter().map(|w| w.slot).collect();
    slots.sort_unstable();
    if slots.windows(2).any(|w| w[0] == w[1]) {
        return fail("duplicate transmission slot".into());
    }
    if trace.idle_time + trace.collision_time + trace.success_time != trace.t_cop {
        return fail("slot times do not add up to the contention period".into());
    }
    if trace.ledger.top_tx != trace.m as u128 * tc.t_r.0 as u128 {
        return fail("data airtime differs from M slots".into());
    }
    if trace.active < trace.m && trace.notified > 0 {
        return fail(format!("{} winners among {} active devices", trace.m, trace.active));
    }
    if !trace.events.is_empty() {
        use crate::sim::EventKind::*;
        let contention: u64 = trace
            .events
            .iter()
            .filter(|e| matches!(e.kind, Idle | Collision | Success))
            .map(|e| e.duration.0)
            .sum();
        if contention != trace.t_cop.0 {
            return fail("event durations do not add up to the contention period".into());
        }
    }
    Ok(())
}

/// Energy decomposition of one frame.
pub fn energy_per_frame(trace: &FrameTrace, tc: &TimingConstants, accounting: EnergyAccounting) -> Result<EnergyBreakdown> {
    check_trace(trace, tc)?;
    let l = &trace.ledger;
    let e_np = joules(l.np_rx, tc.p_rx);
    let e_cop = match accounting {
        EnergyAccounting::PerEvent => l.per_event_cop_j,
        _ => joules(l.cop_tx, tc.p_tx) + joules(l.cop_idle, tc.p_idle),
    };
    let e_ap = joules(l.ap_rx, tc.p_rx);
    let e_s = joules(l.top_tx, tc.p_tx);
    let e_in = match accounting {
        EnergyAccounting::SleepingLosers => 0.0,
        _ => joules(l.top_idle, tc.p_idle),
    };
    Ok(EnergyBreakdown::from_parts(e_np, e_cop, e_ap, e_s, e_in))
}

/// Energy of every frame of a report.
pub fn frame_energies(report: &SimReport, accounting: EnergyAccounting) -> Result<Vec<EnergyBreakdown>> {
    report.frames.iter().map(|f| energy_per_frame(f, &report.tc, accounting)).collect()
}

/// Mean realized `M * T_r / T_frame` over the report's frames.
pub fn channel_utility_of(report: &SimReport) -> f64 {
    let u = report.utilities();
    if u.is_empty() {
        0.0
    } else {
        u.iter().sum::<f64>() / u.len() as f64
    }
}

/// Which devices a ratio is computed over.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    Device(usize),
    Class(u32),
    Aggregate,
}

fn totals(report: &SimReport, scope: Scope) -> Result<(u64, u64, u64, u64)> {
    let mut acc = (0, 0, 0, 0);
    let mut any = false;
    for dev in &report.devices {
        let include = match scope {
            Scope::Device(id) => dev.id == id,
            Scope::Class(q) => dev.class == q,
            Scope::Aggregate => true,
        };
        if include {
            any = true;
            acc.0 += dev.stats.generated;
            acc.1 += dev.stats.dropped;
            acc.2 += dev.stats.delivered;
            acc.3 += dev.stats.delay_frames;
        }
    }
    if !any {
        return Err(Error::InvalidArgument(format!("{scope:?} matches no device")));
    }
    Ok(acc)
}

/// Dropped over generated packets.
pub fn drop_ratio(report: &SimReport, scope: Scope) -> Result<f64> {
    let (generated, dropped, _, _) = totals(report, scope)?;
    if generated == 0 {
        return Err(Error::UndefinedRatio(format!("{scope:?} generated no packets")));
    }
    Ok(dropped as f64 / generated as f64)
}

/// Mean frames from a packet's arrival frame to its transmission frame.
pub fn avg_delay(report: &SimReport, scope: Scope) -> Result<f64> {
    let (_, _, delivered, delay) = totals(report, scope)?;
    if delivered == 0 {
        return Err(Error::UndefinedRatio(format!("{scope:?} delivered no packets")));
    }
    Ok(delay as f64 / delivered as f64)
}

/// Per-device summary row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeviceRow {
    pub device: usize,
    pub class: u32,
    pub generated: u64,
    pub dropped: u64,
    pub drop_ratio: Option<f64>,
    pub delivered: u64,
    pub avg_delay: Option<f64>,
}

pub fn device_rows(report: &SimReport) -> Vec<DeviceRow> {
    report
        .devices
        .iter()
        .map(|d| DeviceRow {
            device: d.id,
            class: d.class,
            generated: d.stats.generated,
            dropped: d.stats.dropped,
            drop_ratio: (d.stats.generated > 0).then(|| d.stats.dropped as f64 / d.stats.generated as f64),
            delivered: d.stats.delivered,
            avg_delay: (d.stats.delivered > 0).then(|| d.stats.delay_frames as f64 / d.stats.delivered as f64),
        })
        .collect()
}

/// Decimal rendering with at least nine significant digits.
pub fn format_number(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (8 - magnitude).max(0) as usize;
    format!("{x:.decimals$}")
}

fn optional(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

/// Writes the per-frame table.
pub fn write_frame_csv<W: Write>(report: &SimReport, accounting: EnergyAccounting, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema={FRAME_SCHEMA} variant={} seed={}", report.variant, report.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "M", "T_COP_us", "utility", "e_np_J", "e_cop_J", "e_ap_J", "e_top_J", "e_frame_J"])?;
    let share = report.tc.t_r.0 as f64 / report.tc.t_frame.0 as f64;
    for f in &report.frames {
        let e = energy_per_frame(f, &report.tc, accounting)?;
        w.write_record([
            f.index.to_string(),
            f.m.to_string(),
            format_number(f.t_cop.as_us()),
            format_number(f.m as f64 * share),
            format_number(e.e_np),
            format_number(e.e_cop),
            format_number(e.e_ap),
            format_number(e.e_top),
            format_number(e.e_frame),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes the per-device table.
pub fn write_device_csv<W: Write>(report: &SimReport, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema={DEVICE_SCHEMA} variant={} seed={}", report.variant, report.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device", "class", "generated", "dropped", "drop_ratio", "W", "avg_delay_frames"])?;
    for r in device_rows(report) {
        w.write_record([
            r.device.to_string(),
            r.class.to_string(),
            r.generated.to_string(),
            r.dropped.to_string(),
            optional(r.drop_ratio),
            r.delivered.to_string(),
            optional(r.avg_delay),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes every recorded channel event. Empty unless the run kept a full
/// trace.
pub fn write_trace_csv<W: Write>(report: &SimReport, out: W) -> Result<()> {
    let mut out = out;
    writeln!(out, "# schema={TRACE_SCHEMA} variant={} seed={}", report.variant, report.seed)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["frame", "event", "start_us", "duration_us", "transmitters", "devices"])?;
    for f in &report.frames {
        for e in &f.events {
            w.write_record([
                f.index.to_string(),
                e.kind.as_str().to_string(),
                format_number(e.start.as_us()),
                format_number(e.duration.as_us()),
                e.transmitters.to_string(),
                e.device.map(|d| d.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
