//! Independent checks of the closed forms and the simulator.
//!
//! Each check returns a [`CheckOutcome`]; [`run_all`] runs the default suite
//! used by the command-line `--validate` flag.

use nalgebra::SymmetricEigen;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::analytics::{self, ContentionMixture};
use crate::error::{Error, Result};
use crate::optimizer::FramePlan;
use crate::sim::{self, ContenderGroup, EventKind, Randomness, SeededRandomness, SlotOutcome, TraceLevel};
use crate::timing::{ClassConfig, TimingConstants};

/// Result of one named check.
#[derive(Clone, Debug, PartialEq)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl CheckOutcome {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Probabilities of zero, one and several transmitters, by enumerating
/// every transmit/silent pattern of the listed devices.
pub fn enumerate_slot_law(device_probs: &[f64]) -> [f64; 3] {
    fn dfs(probs: &[f64], weight: f64, transmitters: usize, law: &mut [f64; 3]) {
        match probs.split_first() {
            None => law[transmitters.min(2)] += weight,
            Some((&p, rest)) => {
                dfs(rest, weight * (1.0 - p), transmitters, law);
                dfs(rest, weight * p, transmitters + 1, law);
            }
        }
    }
    let mut law = [0.0; 3];
    dfs(device_probs, 1.0, 0, &mut law);
    law
}

/// Per-device probabilities of a mixture with integral counts.
pub fn expand_mixture(mix: &ContentionMixture) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for e in mix.entries() {
        if e.n.fract() != 0.0 {
            return Err(Error::InvalidArgument(format!("count {} is not integral", e.n)));
        }
        out.extend(std::iter::repeat_n(e.p, e.n as usize));
    }
    Ok(out)
}

/// Busy-slot quantities derived from the enumerated slot law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumeratedValues {
    pub p_success: f64,
    pub p_collision: f64,
    pub e_collisions: f64,
    pub e_idle: f64,
}

pub fn enumeration_oracle(mix: &ContentionMixture, delta_idle_us: f64) -> Result<EnumeratedValues> {
    let [p0, p1, p2] = enumerate_slot_law(&expand_mixture(mix)?);
    let busy = p1 + p2;
    if busy <= 0.0 {
        return Err(Error::DegenerateMixture);
    }
    let p_success = p1 / busy;
    Ok(EnumeratedValues {
        p_success,
        p_collision: p2 / busy,
        e_collisions: p2 / p1,
        e_idle: delta_idle_us * p0 / busy,
    })
}

/// Signature of a closed-form success probability under test.
pub type SuccessFn = fn(&ContentionMixture) -> Result<f64>;

/// A deliberately wrong success probability that omits the transmit
/// probability from the lone-transmitter term. Used to show the
/// enumeration check catches the mistake.
pub fn success_without_transmit_factor(mix: &ContentionMixture) -> Result<f64> {
    let p0 = analytics::prob_no_transmission(mix);
    if p0 >= 1.0 {
        return Err(Error::DegenerateMixture);
    }
    let mut single = 0.0;
    for (i, e) in mix.entries().iter().enumerate() {
        if e.n == 0.0 {
            continue;
        }
        let mut term = e.n * (1.0 - e.p).powf(e.n - 1.0);
        for (j, o) in mix.entries().iter().enumerate() {
            if j != i {
                term *= (1.0 - o.p).powf(o.n);
            }
        }
        single += term;
    }
    Ok(single / (1.0 - p0))
}

/// Random mixture with up to four classes and up to twenty devices whose
/// busy-slot quantities are finite.
pub fn random_mixture(rng: &mut impl Rng) -> ContentionMixture {
    loop {
        let classes = rng.random_range(1..=4usize);
        let mut budget = 20u32;
        let mut pairs = Vec::new();
        for _ in 0..classes {
            if budget == 0 {
                break;
            }
            let n = rng.random_range(0..=budget.min(8));
            budget -= n;
            let p = if rng.random_bool(0.1) { 1.0 } else { rng.random_range(0.01..0.99) };
            pairs.push((p, n as f64));
        }
        let mix = ContentionMixture::from_pairs(&pairs).expect("valid probabilities");
        if analytics::prob_single_transmission(&mix) > 0.0 {
            return mix;
        }
    }
}

/// Compares the closed forms with exhaustive enumeration on `samples`
/// random mixtures. Errors are absolute for values up to one and relative
/// above, since expected collision counts reach 1e9 where an absolute
/// `1e-9` is below double precision.
pub fn check_enumeration(samples: usize, seed: u64, p_success: SuccessFn) -> CheckOutcome {
    let delta_idle = TimingConstants::default().delta_idle.as_us();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut failure = None;
    for _ in 0..samples {
        let mix = random_mixture(&mut rng);
        let oracle = enumeration_oracle(&mix, delta_idle).expect("sampled mixtures are busy");
        let closed = (|| -> Result<[f64; 4]> {
            let ps = p_success(&mix)?;
            Ok([
                ps,
                analytics::prob_collision_given_busy(&mix)?,
                analytics::expected_collisions(&mix)?,
                analytics::expected_idle(&mix, delta_idle)?,
            ])
        })();
        let expected = [oracle.p_success, oracle.p_collision, oracle.e_collisions, oracle.e_idle];
        match closed {
            Ok(values) => {
                for (v, e) in values.iter().zip(expected) {
                    worst = worst.max((v - e).abs() / e.abs().max(1.0));
                }
            }
            Err(e) => failure = Some(e.to_string()),
        }
    }
    let passed = failure.is_none() && worst <= 1e-9;
    let detail = match failure {
        Some(e) => format!("closed form failed: {e}"),
        None => format!("{samples} mixtures, max error {worst:.3e}"),
    };
    CheckOutcome::new("enumeration oracle", passed, detail)
}

/// Empirical slot statistics of a fixed contending population.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlotSample {
    pub slots: u64,
    pub busy: u64,
    pub successes: u64,
    pub idle_slots: u64,
    /// Sum of squared idle-run lengths, for the run-length variance.
    pub idle_run_sq: f64,
}

/// Draws `slots` contention slots of `n` devices with probability `p`
/// through the simulator's random source.
pub fn sample_slots(n: usize, p: f64, slots: u64, seed: u64) -> SlotSample {
    let members: Vec<usize> = (0..n).collect();
    let groups = [ContenderGroup { p, members: &members }];
    let mut rng = SeededRandomness::new(seed);
    let mut s = SlotSample { slots, busy: 0, successes: 0, idle_slots: 0, idle_run_sq: 0.0 };
    let mut run = 0u64;
    for _ in 0..slots {
        match rng.draw_slot(&groups) {
            SlotOutcome::Idle => {
                s.idle_slots += 1;
                run += 1;
            }
            outcome => {
                s.busy += 1;
                s.successes += matches!(outcome, SlotOutcome::Success { .. }) as u64;
                s.idle_run_sq += (run * run) as f64;
                run = 0;
            }
        }
    }
    s
}

/// Standardized errors of the empirical success probability and mean idle
/// time against the closed forms.
pub fn calibration_z(n: usize, p: f64, slots: u64, seed: u64, delta_idle_us: f64) -> Result<(f64, f64)> {
    let mix = ContentionMixture::single(p, n as f64)?;
    let s = sample_slots(n, p, slots, seed);
    let busy = s.busy as f64;
    let ps = analytics::prob_success_given_busy(&mix)?;
    let z_success = (s.successes as f64 / busy - ps) / (ps * (1.0 - ps) / busy).sqrt();
    // idle runs preceding each busy slot are i.i.d. geometric
    let mean_run = s.idle_slots as f64 / busy;
    let var_run = s.idle_run_sq / busy - mean_run * mean_run;
    let e_idle = analytics::expected_idle(&mix, delta_idle_us)?;
    let z_idle = (mean_run * delta_idle_us - e_idle) / (delta_idle_us * (var_run / busy).sqrt());
    Ok((z_success, z_idle))
}

pub fn check_monte_carlo(seed: u64) -> CheckOutcome {
    let delta_idle = TimingConstants::default().delta_idle.as_us();
    match calibration_z(500, 0.01, 200_000, seed, delta_idle) {
        Ok((zs, zi)) => CheckOutcome::new(
            "slot calibration",
            zs.abs() <= 3.0 && zi.abs() <= 3.0,
            format!("n=500 p=0.01, z(success)={zs:.2} z(idle)={zi:.2}"),
        ),
        Err(e) => CheckOutcome::new("slot calibration", false, e.to_string()),
    }
}

/// Largest relative deviation between the analytic Hessian and central
/// finite differences of the large-population form.
pub fn hessian_fd_error(m: f64, alpha: f64, p_inl: f64, l_total: f64, tc: &TimingConstants) -> Result<f64> {
    let h = analytics::tcop_hessian_scaled(m, alpha, p_inl, l_total, tc)?;
    let s = h.log_scale;
    let f = |v: [f64; 3]| analytics::asymptotic_tcop_scaled(v[0], v[2], v[1], l_total, tc, s);
    // steps a twentieth of the local scale of ln h(x), which steepens as
    // L / (1 - x) near x = 1. Smaller steps lose to rounding in 1 - x there,
    // so the h^2 error of larger ones is removed by Richardson extrapolation.
    let x = (1.0 + alpha) * p_inl;
    let curvature = (1.0 / x + (l_total - 1.0) / (1.0 - x))
        .max((1.0 / (x * x) + (l_total - 1.0) / ((1.0 - x) * (1.0 - x))).sqrt());
    let dx = 5e-2 / curvature;
    let steps = [(1e-3 * m).max(1e-3), (dx / (1.0 + alpha)).min(1e-2 * p_inl), (dx / p_inl).min(1e-2 * alpha)];
    let x0 = [m, p_inl, alpha];
    let central = |i: usize, j: usize, shrink: f64| -> Result<f64> {
        let (hi, hj) = (steps[i] * shrink, steps[j] * shrink);
        let eval = |si: f64, sj: f64| {
            let mut v = x0;
            v[i] += si * hi;
            v[j] += sj * hj;
            f(v)
        };
        if i == j {
            Ok((eval(0.5, 0.5)? - 2.0 * f(x0)? + eval(-0.5, -0.5)?) / (hi * hi))
        } else {
            Ok((eval(1.0, 1.0)? - eval(1.0, -1.0)? - eval(-1.0, 1.0)? + eval(-1.0, -1.0)?) / (4.0 * hi * hj))
        }
    };
    let mut worst = 0.0f64;
    let scale = h.matrix.abs().max();
    for i in 0..3 {
        for j in i..3 {
            let fd = (4.0 * central(i, j, 0.5)? - central(i, j, 1.0)?) / 3.0;
            let exact = h.matrix[(i, j)];
            let err = if exact == 0.0 { fd.abs() / scale } else { (fd - exact).abs() / exact.abs() };
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// Smallest eigenvalue of the Hessian relative to its trace.
pub fn hessian_min_eigen_ratio(m: f64, alpha: f64, p_inl: f64, l_total: f64, tc: &TimingConstants) -> Result<f64> {
    let h = analytics::tcop_hessian_scaled(m, alpha, p_inl, l_total, tc)?;
    let eig = SymmetricEigen::new(h.matrix);
    Ok(eig.eigenvalues.min() / h.matrix.trace())
}

/// The `(alpha, p_inl, m)` lattice of the convexity check. The `p_inl`
/// axis is log-spaced from `1e-4` to just below `1 / (1 + alpha)`, where the
/// form diverges.
pub fn convexity_grid() -> Vec<(f64, f64, f64)> {
    let alphas = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0];
    let ms = [1.0, 10.0, 50.0, 100.0, 200.0, 400.0];
    let mut out = Vec::new();
    for &a in &alphas {
        let top = 0.999 / (1.0 + a);
        let lo: f64 = 1e-4;
        let steps = 12;
        for k in 0..=steps {
            let p = lo * (top / lo).powf(k as f64 / steps as f64);
            for &m in &ms {
                out.push((a, p, m));
            }
        }
    }
    out
}

pub fn check_hessian(tc: &TimingConstants) -> CheckOutcome {
    let l = 1e5;
    let fd = hessian_fd_error(100.0, 1.0, 0.001, l, tc);
    let mut worst_ratio = f64::INFINITY;
    let mut worst_at = (0.0, 0.0, 0.0);
    for (a, p, m) in convexity_grid() {
        match hessian_min_eigen_ratio(m, a, p, l, tc) {
            Ok(r) if r < worst_ratio => {
                worst_ratio = r;
                worst_at = (a, p, m);
            }
            Ok(_) => {}
            Err(e) => return CheckOutcome::new("hessian", false, e.to_string()),
        }
    }
    match fd {
        Ok(err) => CheckOutcome::new(
            "hessian",
            err <= 1e-4 && worst_ratio >= -1e-8,
            format!(
                "fd rel error {err:.2e}; min eigenvalue/trace {worst_ratio:.2e} at alpha={} p_inl={:.3e} m={}",
                worst_at.0, worst_at.1, worst_at.2
            ),
        ),
        Err(e) => CheckOutcome::new("hessian", false, e.to_string()),
    }
}

/// Runs the hybrid simulator with a single class and no escalation, and
/// returns the standardized difference between the observed number of
/// successful slots and the number predicted slot by slot from the current
/// contender count.
pub fn simulator_calibration_z(k: u64, p: f64, frames: usize, seed: u64) -> Result<(f64, u64)> {
    let tc = TimingConstants::default();
    let cfg = ClassConfig { alpha_escalation: Some(0.0), ..ClassConfig::homogeneous(k, p, 1.0, 1.0) };
    let m = tc.slots_per_frame();
    let plan = FramePlan::uniform(cfg.alpha, cfg.p_inl, frames, m, f64::INFINITY);
    let mut rng = SeededRandomness::new(seed);
    let report = sim::run_hybrid_with(&cfg, &tc, &plan, frames, seed, &mut rng, TraceLevel::Full)?;
    let (mut expected, mut variance, mut observed, mut busy) = (0.0, 0.0, 0.0, 0u64);
    for frame in &report.frames {
        let mut contenders = frame.active as f64;
        for e in &frame.events {
            match e.kind {
                EventKind::Collision | EventKind::Success => {
                    let ps = analytics::prob_success_given_busy(&ContentionMixture::single(p, contenders)?)?;
                    expected += ps;
                    variance += ps * (1.0 - ps);
                    busy += 1;
                    if e.kind == EventKind::Success {
                        observed += 1.0;
                        contenders -= 1.0;
                    }
                }
                _ => {}
            }
        }
    }
    Ok(((observed - expected) / variance.sqrt(), busy))
}

pub fn check_simulator_calibration(seed: u64) -> CheckOutcome {
    match simulator_calibration_z(1200, 0.002, 150, seed) {
        Ok((z, busy)) => CheckOutcome::new(
            "simulator calibration",
            z.abs() <= 3.0 && busy >= 100_000,
            format!("{busy} busy slots, z={z:.2}"),
        ),
        Err(e) => CheckOutcome::new("simulator calibration", false, e.to_string()),
    }
}

/// The default validation suite.
pub fn run_all() -> Vec<CheckOutcome> {
    let tc = TimingConstants::default();
    vec![
        check_enumeration(200, 7, analytics::prob_success_given_busy),
        check_monte_carlo(11),
        check_hessian(&tc),
        check_simulator_calibration(5),
    ]
}
