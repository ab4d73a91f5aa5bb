use std::fmt::Write as _;
use std::fs;

use anyhow::{anyhow, Context};
use hybridmac_core::config::SweepAxes;
use hybridmac_core::metrics::{self, format_number};
use hybridmac_core::optimizer::{optimize_grid, plan_for};
use hybridmac_core::sim::TraceLevel;
use hybridmac_core::{ClassConfig, FramePlan, Variant};
use rayon::prelude::*;

use crate::resolve::Resolved;
use crate::run::{mean_std, simulate};
use crate::{svg, Args, Failure};

pub const SWEEP_SCHEMA: &str = "hybridmac-sweep/1";

/// One planned point of the sweep.
struct Cell {
    k: u64,
    lambda: f64,
    cfg: ClassConfig,
    plan: FramePlan,
}

struct Row {
    k: u64,
    lambda: f64,
    alpha: f64,
    p_inl: f64,
    variant: Variant,
    analytic: Option<f64>,
    simulated: Option<(f64, f64)>,
}

fn opt(x: Option<f64>) -> String {
    x.map(format_number).unwrap_or_default()
}

pub fn sweep(args: &Args, resolved: &Resolved, axes: &SweepAxes) -> Result<(), Failure> {
    let s = &resolved.scenario;
    if !axes.k.is_empty() && s.classes.class_sizes.len() != 1 {
        return Err(Failure::Config(anyhow!("a k sweep needs a single-class scenario")));
    }
    let ks: Vec<u64> = if axes.k.is_empty() { vec![s.classes.total_devices()] } else { axes.k.clone() };
    let lambdas = if axes.lambda.is_empty() { vec![s.classes.lambda] } else { axes.lambda.clone() };
    let fixed_point = !axes.alpha.is_empty() || !axes.p_inl.is_empty();
    let alphas = if axes.alpha.is_empty() { vec![s.classes.alpha] } else { axes.alpha.clone() };
    let ps = if axes.p_inl.is_empty() { vec![s.classes.p_inl] } else { axes.p_inl.clone() };

    let mut points = Vec::new();
    for &k in &ks {
        for &lambda in &lambdas {
            let mut cfg = ClassConfig { lambda, ..s.classes.clone() };
            if !axes.k.is_empty() {
                cfg.class_sizes = vec![k];
            }
            if fixed_point {
                for &a in &alphas {
                    for &p in &ps {
                        points.push((k, lambda, Some((a, p)), cfg.clone()));
                    }
                }
            } else {
                points.push((k, lambda, None, cfg));
            }
        }
    }
    // without alpha/p_inl axes each (K, lambda) runs at the optimizer's best cell
    let cells: Vec<Cell> = points
        .into_par_iter()
        .map(|(k, lambda, point, cfg)| {
            let plan = match point {
                Some((a, p)) => plan_for(&cfg.with_params(a, p), &s.timing, s.frames)?,
                None => optimize_grid(&cfg, &s.timing, s.frames, &s.grid.axes())?.best,
            };
            let cfg = cfg.with_params(plan.alpha_opt, plan.p_inl_opt);
            Ok(Cell { k, lambda, cfg, plan })
        })
        .collect::<Result<_, hybridmac_core::Error>>()?;

    let variants = s.variant.variants();
    let simulate_cells = args.simulate || variants.iter().any(|&v| v != Variant::Hybrid);
    let jobs: Vec<(usize, Variant, u64)> = if simulate_cells {
        (0..cells.len())
            .flat_map(|c| variants.iter().flat_map(move |&v| s.seeds.iter().map(move |&seed| (c, v, seed))))
            .collect()
    } else {
        Vec::new()
    };
    let utilities: Vec<f64> = jobs
        .par_iter()
        .map(|&(c, v, seed)| {
            let cell = &cells[c];
            let csma_p = s.csma_p.unwrap_or(cell.plan.p_inl_opt);
            let r = simulate(v, &cell.cfg, resolved, &cell.plan, csma_p, seed, TraceLevel::Summary)?;
            Ok(metrics::channel_utility_of(&r))
        })
        .collect::<Result<_, hybridmac_core::Error>>()?;

    let mut rows = Vec::new();
    for (c, cell) in cells.iter().enumerate() {
        for &v in &variants {
            let simulated = simulate_cells.then(|| {
                let us: Vec<f64> =
                    jobs.iter().zip(&utilities).filter(|((jc, jv, _), _)| *jc == c && *jv == v).map(|(_, &u)| u).collect();
                mean_std(&us)
            });
            if v != Variant::Hybrid && simulated.is_none() {
                continue;
            }
            rows.push(Row {
                k: cell.k,
                lambda: cell.lambda,
                alpha: cell.plan.alpha_opt,
                p_inl: cell.plan.p_inl_opt,
                variant: v,
                analytic: (v == Variant::Hybrid).then_some(cell.plan.utility),
                simulated,
            });
        }
    }

    let seeds: Vec<String> = s.seeds.iter().map(u64::to_string).collect();
    let mut text = format!(
        "# schema={SWEEP_SCHEMA} scenario={} frames={} seeds={}\n",
        s.name,
        s.frames,
        seeds.join(";")
    );
    text.push_str("K,lambda,alpha,p_inl,variant,analytic_utility,sim_utility_mean,sim_utility_std\n");
    for r in &rows {
        let _ = writeln!(
            text,
            "{},{},{},{},{},{},{},{}",
            r.k,
            format_number(r.lambda),
            format_number(r.alpha),
            format_number(r.p_inl),
            r.variant,
            opt(r.analytic),
            opt(r.simulated.map(|x| x.0)),
            opt(r.simulated.map(|x| x.1)),
        );
    }
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))
        .map_err(Failure::Runtime)?;
    fs::write(args.out.join("sweep.csv"), &text).context("writing sweep.csv").map_err(Failure::Runtime)?;

    for &k in &ks {
        for &lambda in &lambdas {
            let best = rows
                .iter()
                .filter(|r| r.k == k && r.lambda == lambda && r.variant == Variant::Hybrid)
                .fold(None::<&Row>, |b, r| match b {
                    Some(b) if b.analytic >= r.analytic => Some(b),
                    _ => Some(r),
                });
            if let Some(b) = best {
                println!(
                    "K={k} lambda={lambda}: best alpha={} p_inl={} analytic utility {:.4}",
                    b.alpha,
                    b.p_inl,
                    b.analytic.unwrap_or(0.0)
                );
            }
        }
    }

    if args.svg {
        let chart = sweep_chart(&rows, &ks, &lambdas, &alphas, &ps);
        fs::write(args.out.join("sweep.svg"), chart).context("writing sweep.svg").map_err(Failure::Runtime)?;
    }
    Ok(())
}

/// Utility against the longest axis, one line per variant and remaining
/// parameters. Simulated means where available, analytic values otherwise.
fn sweep_chart(rows: &[Row], ks: &[u64], lambdas: &[f64], alphas: &[f64], ps: &[f64]) -> String {
    let (label, x_of): (&str, fn(&Row) -> f64) = if lambdas.len() > 1 {
        ("lambda", |r| r.lambda)
    } else if ks.len() > 1 {
        ("K", |r| r.k as f64)
    } else if ps.len() > 1 || alphas.len() == 1 {
        ("p_inl", |r| r.p_inl)
    } else {
        ("alpha", |r| r.alpha)
    };
    let mut series: Vec<svg::Series> = Vec::new();
    for r in rows {
        let Some(y) = r.simulated.map(|s| s.0).or(r.analytic) else { continue };
        let mut name = r.variant.to_string();
        if label != "K" && ks.len() > 1 {
            name.push_str(&format!(" K={}", r.k));
        }
        if label != "lambda" && lambdas.len() > 1 {
            name.push_str(&format!(" lambda={}", r.lambda));
        }
        if label != "alpha" && alphas.len() > 1 {
            name.push_str(&format!(" alpha={}", r.alpha));
        }
        if label != "p_inl" && ps.len() > 1 {
            name.push_str(&format!(" p_inl={}", r.p_inl));
        }
        match series.iter_mut().find(|s| s.name == name) {
            Some(s) => s.points.push((x_of(r), y)),
            None => series.push(svg::Series { name, points: vec![(x_of(r), y)] }),
        }
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    svg::line_chart("Channel utility", label, "utility", &series)
}
