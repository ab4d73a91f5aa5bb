use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, Context};
use hybridmac_core::metrics::{self, EnergyAccounting};
use hybridmac_core::optimizer::optimize_grid;
use hybridmac_core::sim::{self, SeededRandomness, SimReport, TraceLevel};
use hybridmac_core::{ClassConfig, FramePlan, Variant};
use rayon::prelude::*;
use serde::Serialize;

use crate::resolve::Resolved;
use crate::{svg, Args, Failure};

#[derive(Serialize)]
struct Summary {
    scenario: String,
    devices: u64,
    class_sizes: Vec<u64>,
    lambda: f64,
    frames: usize,
    seeds: Vec<u64>,
    accounting: EnergyAccounting,
    plan: PlanSummary,
    variants: Vec<VariantSummary>,
}

#[derive(Serialize)]
struct PlanSummary {
    source: &'static str,
    alpha: f64,
    p_inl: f64,
    utility: f64,
}

#[derive(Serialize)]
pub struct VariantSummary {
    pub variant: Variant,
    pub utility_mean: f64,
    pub utility_std: f64,
    pub utilities: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub drop_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub avg_delay_frames: Option<f64>,
    pub e_frame_mean_j: f64,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Plan for the hybrid runs: the supplied file or the optimizer's best cell.
pub fn plan_for_run(resolved: &Resolved) -> Result<(FramePlan, &'static str), Failure> {
    let s = &resolved.scenario;
    match &resolved.plan {
        Some(p) => Ok((p.clone(), "file")),
        None => Ok((optimize_grid(&s.classes, &s.timing, s.frames, &s.grid.axes())?.best, "optimizer")),
    }
}

/// Runs one protocol for one seed.
pub fn simulate(
    variant: Variant,
    cfg: &ClassConfig,
    resolved: &Resolved,
    plan: &FramePlan,
    csma_p: f64,
    seed: u64,
    level: TraceLevel,
) -> hybridmac_core::Result<SimReport> {
    let s = &resolved.scenario;
    let mut rng = SeededRandomness::new(seed);
    match variant {
        Variant::Hybrid => sim::run_hybrid_with(cfg, &s.timing, plan, s.frames, seed, &mut rng, level),
        Variant::Csma => sim::run_csma_with(cfg, &s.timing, csma_p, s.frames, seed, &mut rng, level),
        Variant::Tdma => sim::run_tdma_with(cfg, &s.timing, s.frames, seed, &mut rng, level),
    }
}

pub fn summarize(variant: Variant, reports: &[&SimReport], accounting: EnergyAccounting) -> Result<VariantSummary, Failure> {
    let utilities: Vec<f64> = reports.iter().map(|r| metrics::channel_utility_of(r)).collect();
    let (utility_mean, utility_std) = mean_std(&utilities);
    let (mut generated, mut dropped, mut delivered, mut delay) = (0u64, 0u64, 0u64, 0u64);
    let mut energy = Vec::new();
    for r in reports {
        for d in &r.devices {
            generated += d.stats.generated;
            dropped += d.stats.dropped;
            delivered += d.stats.delivered;
            delay += d.stats.delay_frames;
        }
        energy.extend(metrics::frame_energies(r, accounting)?.into_iter().map(|e| e.e_frame));
    }
    Ok(VariantSummary {
        variant,
        utility_mean,
        utility_std,
        utilities,
        drop_ratio: (generated > 0).then(|| dropped as f64 / generated as f64),
        avg_delay_frames: (delivered > 0).then(|| delay as f64 / delivered as f64),
        e_frame_mean_j: mean_std(&energy).0,
    })
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path)
        .map(BufWriter::new)
        .with_context(|| format!("creating {}", path.display()))
        .map_err(Failure::Runtime)
}

pub fn run(args: &Args, resolved: &Resolved) -> Result<(), Failure> {
    let s = &resolved.scenario;
    let accounting: EnergyAccounting = args.accounting.into();
    let (plan, source) = plan_for_run(resolved)?;
    let cfg = s.classes.with_params(plan.alpha_opt, plan.p_inl_opt);
    let csma_p = s.csma_p.unwrap_or(plan.p_inl_opt);
    let level = if args.trace { TraceLevel::Full } else { TraceLevel::Summary };
    let variants = s.variant.variants();

    let jobs: Vec<(Variant, u64)> = variants.iter().flat_map(|&v| s.seeds.iter().map(move |&seed| (v, seed))).collect();
    let reports: Vec<SimReport> = jobs
        .par_iter()
        .map(|&(v, seed)| simulate(v, &cfg, resolved, &plan, csma_p, seed, level))
        .collect::<Result<_, _>>()?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::Runtime)?;
    if variants.contains(&Variant::Hybrid) {
        fs::write(args.out.join("plan.toml"), plan.to_toml()?)
            .context("writing plan.toml")
            .map_err(Failure::Runtime)?;
    }
    for r in &reports {
        let stem = format!("{}-seed{}", r.variant, r.seed);
        metrics::write_frame_csv(r, accounting, create(&args.out.join(format!("{stem}-frames.csv")))?)?;
        metrics::write_device_csv(r, create(&args.out.join(format!("{stem}-devices.csv")))?)?;
        if args.trace {
            metrics::write_trace_csv(r, create(&args.out.join(format!("{stem}-trace.csv")))?)?;
        }
    }

    let mut summaries = Vec::new();
    for &v in &variants {
        let group: Vec<&SimReport> = reports.iter().filter(|r| r.variant == v).collect();
        summaries.push(summarize(v, &group, accounting)?);
    }
    for v in &summaries {
        println!(
            "{:<6} utility {:.4} +/- {:.4}  drop {}  delay {}  E_frame {:.4} J",
            v.variant,
            v.utility_mean,
            v.utility_std,
            v.drop_ratio.map_or("n/a".into(), |x| format!("{x:.4}")),
            v.avg_delay_frames.map_or("n/a".into(), |x| format!("{x:.4}")),
            v.e_frame_mean_j
        );
    }
    if args.svg {
        let series: Vec<svg::Series> = variants
            .iter()
            .map(|&v| {
                let group: Vec<Vec<f64>> =
                    reports.iter().filter(|r| r.variant == v).map(SimReport::utilities).collect();
                let points = (0..s.frames)
                    .map(|i| {
                        let u = group.iter().map(|us| us[i]).sum::<f64>() / group.len() as f64;
                        ((i + 1) as f64, u)
                    })
                    .collect();
                svg::Series { name: v.to_string(), points }
            })
            .collect();
        let chart = svg::line_chart("Channel utility per frame", "frame", "utility", &series);
        fs::write(args.out.join("utility.svg"), chart).context("writing utility.svg").map_err(Failure::Runtime)?;
    }
    let summary = Summary {
        scenario: s.name.clone(),
        devices: s.classes.total_devices(),
        class_sizes: s.classes.class_sizes.clone(),
        lambda: s.classes.lambda,
        frames: s.frames,
        seeds: s.seeds.clone(),
        accounting,
        plan: PlanSummary { source, alpha: plan.alpha_opt, p_inl: plan.p_inl_opt, utility: plan.utility },
        variants: summaries,
    };
    let text = toml::to_string_pretty(&summary).map_err(|e| Failure::Runtime(anyhow!(e)))?;
    fs::write(args.out.join("summary.toml"), text).context("writing summary.toml").map_err(Failure::Runtime)?;
    Ok(())
}
