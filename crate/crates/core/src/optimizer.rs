//! Channel-utility maximization over a horizon of frames.
//!
//! For a fixed `(alpha, p_inl)` the base station predicts the active
//! population of every frame with an expected-value recursion: survivors of a
//! frame move up one virtual class, winners leave, and empty devices are
//! re-activated by Poisson arrivals. In each frame it admits the largest
//! winner count `M` whose expected contention period still leaves room for
//! `M` transmission slots. The outer search is a grid over `(alpha, p_inl)`.
//!
//! The prediction uses `alpha` for both the class and the escalation
//! indicator; `ClassConfig::alpha_escalation` only affects the simulator.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, ContentionMixture, MixtureEntry};
use crate::error::{Error, Result};
use crate::priority;
use crate::timing::{ClassConfig, PopulationState, TimingConstants};

/// Mean fraction of each frame spent in scheduled data transmission.
pub fn channel_utility(m_per_frame: &[u64], tc: &TimingConstants) -> f64 {
    if m_per_frame.is_empty() {
        return 0.0;
    }
    let slot_share = tc.t_r.as_us() / tc.t_frame.as_us();
    let total: u64 = m_per_frame.iter().sum();
    total as f64 * slot_share / m_per_frame.len() as f64
}

/// Largest `m` with `m * (e_attempt + t_r) <= t_frame`, capped at `active`.
pub fn feasible_m(e_attempt_us: f64, active: f64, tc: &TimingConstants) -> u64 {
    if !e_attempt_us.is_finite() || active < 1.0 {
        return 0;
    }
    let per_winner = e_attempt_us + tc.t_r.as_us();
    let by_time = (tc.t_frame.as_us() / per_winner).floor();
    by_time.min(active.floor()).max(0.0) as u64
}

/// Largest winner count whose expected contention period and transmission
/// slots fit in one frame. Zero when contention cannot produce a winner.
pub fn max_feasible_m(mix: &ContentionMixture, tc: &TimingConstants) -> u64 {
    match analytics::expected_tcop(1, mix, tc) {
        Ok(e) => feasible_m(e.e_attempt, mix.total_devices(), tc),
        Err(_) => 0,
    }
}

/// Contention mixture of a predicted population, one entry per occupied
/// virtual class.
pub fn population_mixture(
    state: &PopulationState,
    alpha: f64,
    p_inl: f64,
) -> Result<(ContentionMixture, Vec<usize>)> {
    let counts = state.virtual_counts();
    let mut entries = Vec::new();
    let mut classes = Vec::new();
    for (rho, &n) in counts.iter().enumerate() {
        if n > 0.0 {
            let p = priority::virtual_class_probability(rho as u32, alpha, p_inl)?;
            entries.push(MixtureEntry { p, n });
            classes.push(rho);
        }
    }
    Ok((ContentionMixture::new(entries)?, classes))
}

/// Expected population at the start of the first contention frame: every
/// device that received a packet during the warm-up frame, at its class's
/// preliminary level.
pub fn initial_population(cfg: &ClassConfig, tc: &TimingConstants) -> PopulationState {
    let mut state = PopulationState::empty(cfg.q_count());
    for (qi, &k) in cfg.class_sizes.iter().enumerate() {
        state.counts[qi].push(analytics::expected_new_arrivals(k as f64, cfg.lambda, tc.t_frame));
    }
    state
}

/// Integer winners per virtual class: ceilings of `m * share`, trimmed back
/// to `m` by removing units where the ceiling added the most.
fn allocate_winners(m_total: u64, shares: &[f64]) -> Vec<f64> {
    let raw: Vec<f64> = shares.iter().map(|s| m_total as f64 * s).collect();
    // tolerance keeps 3.0000000001 from rounding up to 4
    let mut alloc: Vec<f64> = raw.iter().map(|r| (r - 1e-9).ceil().max(0.0)).collect();
    let mut excess = alloc.iter().sum::<f64>() - m_total as f64;
    while excess > 0.5 {
        let idx = (0..alloc.len())
            .filter(|&i| alloc[i] >= 1.0)
            .max_by(|&i, &j| {
                let (gi, gj) = (alloc[i] - raw[i], alloc[j] - raw[j]);
                gi.total_cmp(&gj).then(j.cmp(&i))
            })
            .expect("excess implies a positive allocation");
        alloc[idx] -= 1.0;
        excess -= 1.0;
    }
    alloc
}

/// Advances the predicted population by one frame in which `m_total`
/// devices win contention.
pub fn evolve_population(
    state: &PopulationState,
    m_total: u64,
    cfg: &ClassConfig,
    tc: &TimingConstants,
) -> Result<PopulationState> {
    let active = state.total_active();
    if m_total as f64 > active + 1e-9 {
        return Err(Error::InfeasibleWinners { requested: m_total, available: active });
    }
    let virtual_counts = state.virtual_counts();
    let mut winners_by_rho = vec![0.0; virtual_counts.len()];
    if m_total > 0 {
        let (mix, classes) = population_mixture(state, cfg.alpha, cfg.p_inl)?;
        let shares = analytics::success_shares(&mix)?;
        let alloc = allocate_winners(m_total, &shares);
        for (&rho, w) in classes.iter().zip(alloc) {
            winners_by_rho[rho] = w.min(virtual_counts[rho]);
        }
        // winners clipped by a class's population move to classes with room,
        // most likely winners first, so exactly `m_total` devices leave
        let mut shortfall = m_total as f64 - winners_by_rho.iter().sum::<f64>();
        let mut order: Vec<usize> = (0..classes.len()).collect();
        order.sort_by(|&i, &j| shares[j].total_cmp(&shares[i]).then(i.cmp(&j)));
        for i in order {
            if shortfall <= 0.0 {
                break;
            }
            let rho = classes[i];
            let extra = (virtual_counts[rho] - winners_by_rho[rho]).min(shortfall).max(0.0);
            winners_by_rho[rho] += extra;
            shortfall -= extra;
        }
    }

    let mut next = PopulationState::empty(cfg.q_count());
    next.frame_index = state.frame_index + 1;
    for (qi, row) in state.counts.iter().enumerate() {
        let mut promoted = vec![0.0; row.len() + 1];
        for (d, &n) in row.iter().enumerate() {
            let rho = qi + d;
            let frac = if virtual_counts[rho] > 0.0 { n / virtual_counts[rho] } else { 0.0 };
            let won = winners_by_rho[rho] * frac;
            promoted[d + 1] = (n - won).max(0.0);
        }
        let survivors: f64 = promoted.iter().sum();
        let empty = (cfg.class_sizes[qi] as f64 - survivors).max(0.0);
        promoted[0] = analytics::expected_new_arrivals(empty, cfg.lambda, tc.t_frame);
        while promoted.len() > 1 && *promoted.last().unwrap() == 0.0 {
            promoted.pop();
        }
        next.counts[qi] = promoted;
    }
    Ok(next)
}

/// Planned thresholds for one frame.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlannedFrame {
    /// 1-based frame index.
    pub index: u64,
    /// Winner-count threshold.
    pub m_opt: u64,
    /// Contention-time threshold in microseconds.
    pub t_cop_opt_us: f64,
    pub predicted_utility: f64,
    #[serde(skip)]
    pub population: Option<PopulationState>,
}

/// Operating point and per-frame thresholds produced by the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FramePlan {
    pub alpha_opt: f64,
    pub p_inl_opt: f64,
    pub utility: f64,
    pub frames: Vec<PlannedFrame>,
}

impl FramePlan {
    pub fn horizon(&self) -> usize {
        self.frames.len()
    }

    pub fn m_per_frame(&self) -> Vec<u64> {
        self.frames.iter().map(|f| f.m_opt).collect()
    }

    /// Serializes as a TOML document.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let plan: FramePlan = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        for (i, f) in plan.frames.iter().enumerate() {
            if f.index != i as u64 + 1 {
                return Err(Error::Parse(format!("frame {} listed out of order", f.index)));
            }
        }
        Ok(plan)
    }

    /// A plan with identical thresholds in every frame.
    pub fn uniform(alpha: f64, p_inl: f64, frames: usize, m_opt: u64, t_cop_opt_us: f64) -> Self {
        Self {
            alpha_opt: alpha,
            p_inl_opt: p_inl,
            utility: 0.0,
            frames: (1..=frames as u64)
                .map(|index| PlannedFrame {
                    index,
                    m_opt,
                    t_cop_opt_us,
                    predicted_utility: 0.0,
                    population: None,
                })
                .collect(),
        }
    }
}

/// Greedy per-frame plan at the configuration's own `(alpha, p_inl)`.
pub fn plan_for(cfg: &ClassConfig, tc: &TimingConstants, horizon: usize) -> Result<FramePlan> {
    cfg.validate()?;
    tc.validate()?;
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least one frame".into()));
    }
    let slot_share = tc.t_r.as_us() / tc.t_frame.as_us();
    let mut state = initial_population(cfg, tc);
    let mut frames = Vec::with_capacity(horizon);
    for index in 1..=horizon as u64 {
        let (mix, _) = population_mixture(&state, cfg.alpha, cfg.p_inl)?;
        let m = max_feasible_m(&mix, tc);
        let t_cop = analytics::expected_tcop(m, &mix, tc)?.e_tcop;
        let next = evolve_population(&state, m, cfg, tc)?;
        frames.push(PlannedFrame {
            index,
            m_opt: m,
            t_cop_opt_us: t_cop,
            predicted_utility: m as f64 * slot_share,
            population: Some(state),
        });
        state = next;
    }
    let utility = channel_utility(&frames.iter().map(|f| f.m_opt).collect::<Vec<_>>(), tc);
    Ok(FramePlan { alpha_opt: cfg.alpha, p_inl_opt: cfg.p_inl, utility, frames })
}

/// Search lattice over `(alpha, p_inl)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GridAxes {
    pub alpha: Vec<f64>,
    pub p_inl: Vec<f64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self {
            alpha: vec![0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 2.0, 3.0, 4.0, 5.0],
            p_inl: (1..=10).map(|i| i as f64 / 10.0).collect(),
        }
    }
}

impl GridAxes {
    /// The default lattice plus initial probabilities down to `1e-4`.
    ///
    /// With hundreds of active devices every default `p_inl` makes a lone
    /// transmission vanishingly rare, so large networks need this range.
    pub fn extended() -> Self {
        let mut axes = Self::default();
        let mut small = vec![1e-4, 2e-4, 5e-4, 1e-3, 2e-3, 5e-3, 1e-2, 2e-2, 5e-2];
        small.append(&mut axes.p_inl);
        axes.p_inl = small;
        axes
    }

    /// Adds `levels` midpoints between neighbouring values of each axis.
    pub fn refined(&self, levels: usize) -> Self {
        fn refine(axis: &[f64], levels: usize) -> Vec<f64> {
            let mut sorted = axis.to_vec();
            sorted.sort_by(f64::total_cmp);
            sorted.dedup();
            let mut out = Vec::new();
            for w in sorted.windows(2) {
                for k in 0..=levels {
                    out.push(w[0] + (w[1] - w[0]) * k as f64 / (levels + 1) as f64);
                }
            }
            if let Some(&last) = sorted.last() {
                out.push(last);
            }
            out
        }
        Self { alpha: refine(&self.alpha, levels), p_inl: refine(&self.p_inl, levels) }
    }
}

/// Utility of one lattice point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridCell {
    pub alpha: f64,
    pub p_inl: f64,
    pub utility: f64,
}

/// Result of a grid search: every cell plus the winning plan.
#[derive(Clone, Debug)]
pub struct GridSearch {
    pub cells: Vec<GridCell>,
    pub best: FramePlan,
}

/// Evaluates every lattice point. Cells are returned in lexicographic
/// `(alpha, p_inl)` order; ties go to the smallest point.
pub fn optimize_grid(
    cfg: &ClassConfig,
    tc: &TimingConstants,
    horizon: usize,
    axes: &GridAxes,
) -> Result<GridSearch> {
    let mut points: Vec<(f64, f64)> = axes
        .alpha
        .iter()
        .flat_map(|&a| axes.p_inl.iter().map(move |&p| (a, p)))
        .collect();
    points.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
    points.dedup();
    if points.is_empty() {
        return Err(Error::InvalidArgument("empty search grid".into()));
    }
    let plans: Vec<FramePlan> = points
        .par_iter()
        .map(|&(a, p)| plan_for(&cfg.with_params(a, p), tc, horizon))
        .collect::<Result<_>>()?;
    let cells = plans
        .iter()
        .map(|pl| GridCell { alpha: pl.alpha_opt, p_inl: pl.p_inl_opt, utility: pl.utility })
        .collect();
    let mut best = 0;
    for (i, pl) in plans.iter().enumerate() {
        if pl.utility > plans[best].utility {
            best = i;
        }
    }
    let best = plans.into_iter().nth(best).expect("non-empty grid");
    Ok(GridSearch { cells, best })
}

/// Best plan over the default lattice.
pub fn optimize(cfg: &ClassConfig, tc: &TimingConstants, horizon: usize) -> Result<FramePlan> {
    Ok(optimize_grid(cfg, tc, horizon, &GridAxes::default())?.best)
}
