//! Closed-form model of the contention period.
//!
//! Active devices are grouped by contending probability into a
//! [`ContentionMixture`]. In every contention slot each device transmits a
//! request independently with its probability; a slot is idle, a success
//! (exactly one transmitter) or a collision. From the slot law follow the
//! geometric number of collisions per success, the expected idle time before
//! each busy slot, and the expected length of a contention period that
//! produces `m` winners.
//!
//! Products of many `(1 - p)` factors are evaluated in log space so that
//! populations of several thousand devices do not underflow.
//!
//! The second half of the module holds the large-population form used for
//! the convexity analysis: every device is assumed to contend with the single
//! probability `x = (1 + alpha) * p_inl`, and the contention period length is
//! written as a function of `(m, p_inl, alpha)` together with its Hessian.

use nalgebra::Matrix3;

use crate::error::{Error, Result};
use crate::timing::{Nanos, TimingConstants};

/// Active devices sharing one contending probability.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureEntry {
    pub p: f64,
    /// Number of devices. Real-valued so expected populations can be used.
    pub n: f64,
}

/// Occupied virtual classes of a contention period.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ContentionMixture {
    entries: Vec<MixtureEntry>,
}

impl ContentionMixture {
    pub fn new(entries: Vec<MixtureEntry>) -> Result<Self> {
        for e in &entries {
            if !(e.p > 0.0 && e.p <= 1.0) {
                return Err(Error::InvalidArgument(format!("probability {} not in (0, 1]", e.p)));
            }
            if !(e.n.is_finite() && e.n >= 0.0) {
                return Err(Error::InvalidArgument(format!("count {} must be >= 0", e.n)));
            }
        }
        Ok(Self { entries })
    }

    /// Builds a mixture from `(p, n)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(pairs.iter().map(|&(p, n)| MixtureEntry { p, n }).collect())
    }

    pub fn single(p: f64, n: f64) -> Result<Self> {
        Self::new(vec![MixtureEntry { p, n }])
    }

    pub fn entries(&self) -> &[MixtureEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_devices(&self) -> f64 {
        self.entries.iter().map(|e| e.n).sum()
    }

    fn log_terms(&self) -> LogTerms {
        log_terms(&self.entries)
    }
}

/// `x * ln(1 - p)`, with `0^0 = 1` and a fractional device at `p = 1`
/// treated as a single certain transmitter.
fn ln_pow_complement(p: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return if x > 0.0 { f64::NEG_INFINITY } else { 0.0 };
    }
    x * (-p).ln_1p()
}

struct LogTerms {
    /// ln P(no transmitter)
    ln_p0: f64,
    /// ln of the single-transmitter probability contributed by each entry
    ln_single: Vec<f64>,
}

fn log_terms(entries: &[MixtureEntry]) -> LogTerms {
    let own: Vec<f64> = entries.iter().map(|e| ln_pow_complement(e.p, e.n)).collect();
    let k = own.len();
    // prefix/suffix sums avoid subtracting an entry's own term from the total
    let mut prefix = vec![0.0; k + 1];
    for i in 0..k {
        prefix[i + 1] = prefix[i] + own[i];
    }
    let mut suffix = vec![0.0; k + 1];
    for i in (0..k).rev() {
        suffix[i] = suffix[i + 1] + own[i];
    }
    let ln_single = entries
        .iter()
        .enumerate()
        .map(|(i, e)| {
            if e.n == 0.0 {
                return f64::NEG_INFINITY;
            }
            e.n.ln() + e.p.ln() + ln_pow_complement(e.p, e.n - 1.0) + prefix[i] + suffix[i + 1]
        })
        .collect();
    LogTerms { ln_p0: prefix[k], ln_single }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// ln(1 - e^a) for a <= 0.
fn ln_one_minus_exp(a: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        0.0
    } else {
        (-a.exp_m1()).ln()
    }
}

struct BusyLaw {
    ln_p0: f64,
    ln_p1: f64,
    ln_busy: f64,
}

fn busy_law(mix: &ContentionMixture) -> Result<BusyLaw> {
    let t = mix.log_terms();
    let ln_busy = ln_one_minus_exp(t.ln_p0);
    if ln_busy == f64::NEG_INFINITY {
        return Err(Error::DegenerateMixture);
    }
    Ok(BusyLaw { ln_p0: t.ln_p0, ln_p1: log_sum_exp(&t.ln_single), ln_busy })
}

/// Probability that no device transmits in a slot.
pub fn prob_no_transmission(mix: &ContentionMixture) -> f64 {
    mix.log_terms().ln_p0.exp()
}

/// Probability that exactly one device transmits in a slot.
pub fn prob_single_transmission(mix: &ContentionMixture) -> f64 {
    log_sum_exp(&mix.log_terms().ln_single).exp()
}

/// P(exactly one transmitter | at least one transmitter).
pub fn prob_success_given_busy(mix: &ContentionMixture) -> Result<f64> {
    let law = busy_law(mix)?;
    Ok((law.ln_p1 - law.ln_busy).exp().min(1.0))
}

/// P(two or more transmitters | at least one transmitter).
pub fn prob_collision_given_busy(mix: &ContentionMixture) -> Result<f64> {
    Ok(1.0 - prob_success_given_busy(mix)?)
}

/// Mean number of collisions before a success (geometric law).
pub fn expected_collisions(mix: &ContentionMixture) -> Result<f64> {
    let law = busy_law(mix)?;
    if law.ln_p1 == f64::NEG_INFINITY {
        return Err(Error::DivergentExpectation);
    }
    // (1 - P0) / P1 - 1, kept as expm1 of the log ratio for accuracy
    let v = (law.ln_busy - law.ln_p1).max(0.0).exp_m1();
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::DivergentExpectation)
    }
}

/// Expected idle time (in microseconds) preceding one busy slot.
pub fn expected_idle(mix: &ContentionMixture, delta_idle_us: f64) -> Result<f64> {
    let law = busy_law(mix)?;
    Ok(delta_idle_us * (law.ln_p0 - law.ln_busy).exp())
}

/// Expected contention-period quantities for `m` winners. Times in microseconds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CopExpectation {
    pub m: u64,
    pub e_collisions: f64,
    /// Mean idle run preceding one busy slot.
    pub e_idle: f64,
    /// Mean time between consecutive successes.
    pub e_attempt: f64,
    pub e_tcop: f64,
    /// Idle share of `e_attempt`: `(E[N_c] + 1) * E[Idle]`.
    pub idle_time: f64,
    /// Collision share of `e_attempt`: `E[N_c] * delta_coll`.
    pub collision_time: f64,
    /// Success share of `e_attempt`: `delta_succ`.
    pub success_time: f64,
}

impl CopExpectation {
    fn zero() -> Self {
        Self {
            m: 0,
            e_collisions: 0.0,
            e_idle: 0.0,
            e_attempt: 0.0,
            e_tcop: 0.0,
            idle_time: 0.0,
            collision_time: 0.0,
            success_time: 0.0,
        }
    }
}

/// Expected contention-period length for `m` winners against `mix`.
///
/// With `m == 0` the period is empty and no busy-slot quantity is required;
/// the per-attempt fields are still filled in when they are defined.
pub fn expected_tcop(m: u64, mix: &ContentionMixture, tc: &TimingConstants) -> Result<CopExpectation> {
    let slots = tc.slot_durations();
    let attempt = (|| -> Result<CopExpectation> {
        let e_collisions = expected_collisions(mix)?;
        let e_idle = expected_idle(mix, slots.idle.as_us())?;
        let idle_time = (e_collisions + 1.0) * e_idle;
        let collision_time = e_collisions * slots.collision.as_us();
        let success_time = slots.success.as_us();
        let e_attempt = idle_time + collision_time + success_time;
        Ok(CopExpectation {
            m,
            e_collisions,
            e_idle,
            e_attempt,
            e_tcop: m as f64 * e_attempt,
            idle_time,
            collision_time,
            success_time,
        })
    })();
    match attempt {
        Ok(e) => Ok(e),
        Err(_) if m == 0 => Ok(CopExpectation::zero()),
        Err(e) => Err(e),
    }
}

/// Probability that the lone transmitter of a successful slot belongs to
/// entry `target`.
pub fn success_share(mix: &ContentionMixture, target: usize) -> Result<f64> {
    if target >= mix.len() {
        return Err(Error::InvalidArgument(format!(
            "entry {target} out of range for a mixture of {}",
            mix.len()
        )));
    }
    Ok(success_shares(mix)?[target])
}

/// [`success_share`] for every entry.
pub fn success_shares(mix: &ContentionMixture) -> Result<Vec<f64>> {
    let t = mix.log_terms();
    let total = log_sum_exp(&t.ln_single);
    if total == f64::NEG_INFINITY {
        return Err(Error::DegenerateMixture);
    }
    Ok(t.ln_single.iter().map(|l| (l - total).exp()).collect())
}

/// Expected number of currently empty devices that receive at least one
/// packet within a frame.
pub fn expected_new_arrivals(empty_count: f64, lambda: f64, t_frame: Nanos) -> f64 {
    if empty_count <= 0.0 || lambda <= 0.0 {
        return 0.0;
    }
    empty_count * -(-lambda * t_frame.as_secs()).exp_m1()
}

// ---------------------------------------------------------------------------
// Large-population form
// ---------------------------------------------------------------------------

fn check_asymptotic(alpha: f64, p_inl: f64, l_total: f64) -> Result<f64> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
    }
    if !(p_inl > 0.0 && p_inl <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_inl = {p_inl} not in (0, 1]")));
    }
    if !(l_total.is_finite() && l_total >= 1.0) {
        return Err(Error::InvalidArgument(format!("population {l_total} must be >= 1")));
    }
    let x = (1.0 + alpha) * p_inl;
    if x > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "(1 + alpha) * p_inl = {x} exceeds 1"
        )));
    }
    Ok(x)
}

/// Coefficients of the per-attempt time `g(x) = a / x + b * h(x) + c` where
/// `h(x) = 1 / (x (1 - x)^(L - 1))`.
struct AsymptoticForm {
    a: f64,
    b: f64,
    c: f64,
    l: f64,
}

impl AsymptoticForm {
    fn new(l_total: f64, tc: &TimingConstants) -> Self {
        let s = tc.slot_durations();
        let (di, dc, ds) = (s.idle.as_us(), s.collision.as_us(), s.success.as_us());
        Self { a: (di - dc) / l_total, b: dc / l_total, c: ds - dc, l: l_total }
    }

    fn ln_h(&self, x: f64) -> f64 {
        -x.ln() - (self.l - 1.0) * (-x).ln_1p()
    }

    /// Natural scale of the form at `x`: `ln(b * h(x))`.
    fn log_scale(&self, x: f64) -> f64 {
        self.b.ln() + self.ln_h(x)
    }

    /// `g(x) * exp(-log_scale)`.
    fn per_attempt_scaled(&self, x: f64, log_scale: f64) -> f64 {
        let rest = (self.a / x + self.c) * (-log_scale).exp();
        rest + (self.b.ln() + self.ln_h(x) - log_scale).exp()
    }
}

/// Large-population contention-period length (microseconds) with a single
/// effective probability `(1 + alpha) * p_inl` over `l_total` devices and
/// the `(1 - x)^(L - 1) ~ (1 - x)^L` simplification.
pub fn asymptotic_tcop(
    m: f64,
    alpha: f64,
    p_inl: f64,
    l_total: f64,
    tc: &TimingConstants,
) -> Result<f64> {
    asymptotic_tcop_scaled(m, alpha, p_inl, l_total, tc, 0.0)
}

/// [`asymptotic_tcop`] multiplied by `exp(-log_scale)`; usable where the
/// unscaled value overflows.
pub fn asymptotic_tcop_scaled(
    m: f64,
    alpha: f64,
    p_inl: f64,
    l_total: f64,
    tc: &TimingConstants,
    log_scale: f64,
) -> Result<f64> {
    let x = check_asymptotic(alpha, p_inl, l_total)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    let form = AsymptoticForm::new(l_total, tc);
    Ok(m * form.per_attempt_scaled(x, log_scale))
}

/// Single-probability form before the `(1 - x)^(L - 1) ~ (1 - x)^L`
/// simplification. Equals [`expected_tcop`] of a one-entry mixture.
pub fn single_probability_tcop(
    m: f64,
    alpha: f64,
    p_inl: f64,
    l_total: f64,
    tc: &TimingConstants,
) -> Result<f64> {
    let x = check_asymptotic(alpha, p_inl, l_total)?;
    if m == 0.0 {
        return Ok(0.0);
    }
    let s = tc.slot_durations();
    let (di, dc, ds) = (s.idle.as_us(), s.collision.as_us(), s.success.as_us());
    let lx = l_total * x;
    let h = (-(lx.ln()) - (l_total - 1.0) * (-x).ln_1p()).exp();
    let idle_ratio = (1.0 - x) / lx;
    Ok(m * (idle_ratio * di + (h - idle_ratio - 1.0) * dc + ds))
}

/// Natural log-scale of the large-population form at `(alpha, p_inl)`; the
/// Hessian entries are of order `exp(log_scale)`.
pub fn hessian_log_scale(alpha: f64, p_inl: f64, l_total: f64, tc: &TimingConstants) -> Result<f64> {
    let x = check_asymptotic(alpha, p_inl, l_total)?;
    Ok(AsymptoticForm::new(l_total, tc).log_scale(x))
}

/// Hessian of the large-population form divided by `exp(log_scale)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ScaledHessian {
    pub log_scale: f64,
    /// Variable order `(m, p_inl, alpha)`.
    pub matrix: Matrix3<f64>,
}

impl ScaledHessian {
    pub fn unscaled(&self) -> Matrix3<f64> {
        self.matrix * self.log_scale.exp()
    }
}

/// Hessian of [`asymptotic_tcop`] with respect to `(m, p_inl, alpha)`,
/// returned in scaled form.
pub fn tcop_hessian_scaled(
    m: f64,
    alpha: f64,
    p_inl: f64,
    l_total: f64,
    tc: &TimingConstants,
) -> Result<ScaledHessian> {
    let x = check_asymptotic(alpha, p_inl, l_total)?;
    if x >= 1.0 {
        return Err(Error::InvalidArgument(
            "(1 + alpha) * p_inl = 1: the contention period diverges".into(),
        ));
    }
    let form = AsymptoticForm::new(l_total, tc);
    let s = form.log_scale(x);
    let inv_scale = (-s).exp();
    let l = form.l;
    // d/dx ln h and d2/dx2 ln h
    let u = -1.0 / x + (l - 1.0) / (1.0 - x);
    let v = 1.0 / (x * x) + (l - 1.0) / ((1.0 - x) * (1.0 - x));
    // g'/S and g''/S; the b*h part equals exactly 1 after scaling
    let g1 = -form.a / (x * x) * inv_scale + u;
    let g2 = 2.0 * form.a / (x * x * x) * inv_scale + (u * u + v);
    let xp = 1.0 + alpha;
    let xa = p_inl;
    let h_mp = g1 * xp;
    let h_ma = g1 * xa;
    let h_pp = m * g2 * xp * xp;
    let h_aa = m * g2 * xa * xa;
    let h_pa = m * (g2 * xp * xa + g1);
    let matrix = Matrix3::new(
        0.0, h_mp, h_ma, //
        h_mp, h_pp, h_pa, //
        h_ma, h_pa, h_aa,
    );
    Ok(ScaledHessian { log_scale: s, matrix })
}

/// Hessian of [`asymptotic_tcop`] with respect to `(m, p_inl, alpha)`.
pub fn tcop_hessian(
    m: f64,
    alpha: f64,
    p_inl: f64,
    l_total: f64,
    tc: &TimingConstants,
) -> Result<Matrix3<f64>> {
    Ok(tcop_hessian_scaled(m, alpha, p_inl, l_total, tc)?.unscaled())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mix(pairs: &[(f64, f64)]) -> ContentionMixture {
        ContentionMixture::from_pairs(pairs).unwrap()
    }

    #[test]
    fn no_transmission_edge_cases() {
        assert_eq!(prob_no_transmission(&mix(&[(1.0, 1.0)])), 0.0);
        assert_eq!(prob_no_transmission(&mix(&[(0.3, 0.0), (0.5, 0.0)])), 1.0);
        assert_eq!(prob_no_transmission(&ContentionMixture::default()), 1.0);
        let p = prob_no_transmission(&mix(&[(0.1, 10.0)]));
        assert!((p - 0.9f64.powi(10)).abs() < 1e-15);
    }

    #[test]
    fn lone_and_certain_transmitters() {
        let one = mix(&[(1.0, 1.0)]);
        assert_eq!(prob_success_given_busy(&one).unwrap(), 1.0);
        assert_eq!(prob_collision_given_busy(&one).unwrap(), 0.0);
        assert_eq!(expected_collisions(&one).unwrap(), 0.0);
        assert_eq!(expected_idle(&one, 10.0).unwrap(), 0.0);

        let two = mix(&[(1.0, 2.0)]);
        assert_eq!(prob_success_given_busy(&two).unwrap(), 0.0);
        assert_eq!(prob_collision_given_busy(&two).unwrap(), 1.0);
        assert_eq!(expected_collisions(&two), Err(Error::DivergentExpectation));
    }

    #[test]
    fn empty_mixture_is_degenerate() {
        let m = mix(&[(0.2, 0.0)]);
        assert_eq!(prob_success_given_busy(&m), Err(Error::DegenerateMixture));
        assert_eq!(expected_idle(&m, 10.0), Err(Error::DegenerateMixture));
        assert_eq!(success_shares(&m), Err(Error::DegenerateMixture));
    }

    #[test]
    fn idle_hand_value() {
        let v = expected_idle(&mix(&[(0.5, 1.0)]), 10.0).unwrap();
        assert!((v - 10.0).abs() < 1e-12);
    }

    #[test]
    fn tcop_zero_winners_and_single_device() {
        let tc = TimingConstants::default();
        let e = expected_tcop(0, &mix(&[(1.0, 2.0)]), &tc).unwrap();
        assert_eq!(e.e_tcop, 0.0);
        let e = expected_tcop(0, &mix(&[(0.1, 10.0)]), &tc).unwrap();
        assert_eq!(e.e_tcop, 0.0);
        assert!(e.e_attempt > 0.0);
        let e = expected_tcop(1, &mix(&[(1.0, 1.0)]), &tc).unwrap();
        assert!((e.e_tcop - 39.7).abs() < 1e-12);
        assert!(expected_tcop(3, &mix(&[(1.0, 2.0)]), &tc).is_err());
    }

    #[test]
    fn tcop_components_sum() {
        let tc = TimingConstants::default();
        let e = expected_tcop(7, &mix(&[(0.05, 30.0), (0.1, 4.0)]), &tc).unwrap();
        assert!((e.idle_time + e.collision_time + e.success_time - e.e_attempt).abs() < 1e-9);
        assert!((e.e_tcop - 7.0 * e.e_attempt).abs() < 1e-9);
    }

    #[test]
    fn shares_symmetry_and_single() {
        assert_eq!(success_share(&mix(&[(0.2, 5.0)]), 0).unwrap(), 1.0);
        let s = success_shares(&mix(&[(0.1, 7.0), (0.1, 7.0)])).unwrap();
        assert!((s[0] - 0.5).abs() < 1e-15 && (s[1] - 0.5).abs() < 1e-15);
        assert!(success_share(&mix(&[(0.2, 5.0)]), 1).is_err());
    }

    #[test]
    fn new_arrivals() {
        let t = Nanos::from_ms(1000);
        assert_eq!(expected_new_arrivals(100.0, 0.0, t), 0.0);
        assert_eq!(expected_new_arrivals(0.0, 1.0, t), 0.0);
        let v = expected_new_arrivals(100.0, 1.0, t);
        assert!((v - 100.0 * (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn mixture_validation() {
        assert!(ContentionMixture::single(0.0, 1.0).is_err());
        assert!(ContentionMixture::single(1.1, 1.0).is_err());
        assert!(ContentionMixture::single(0.5, -1.0).is_err());
    }

    #[test]
    fn large_population_does_not_underflow() {
        let m = mix(&[(0.001, 5000.0), (0.002, 1200.0)]);
        let ps = prob_success_given_busy(&m).unwrap();
        assert!(ps > 0.0 && ps < 1.0);
        // far past f64 range for the naive product
        let m = mix(&[(0.1, 20_000.0)]);
        assert!(prob_success_given_busy(&m).unwrap() >= 0.0);
        assert_eq!(expected_collisions(&m), Err(Error::DivergentExpectation));
    }

    #[test]
    fn asymptotic_rejects_out_of_range() {
        let tc = TimingConstants::default();
        assert!(asymptotic_tcop(1.0, 1.0, 0.6, 100.0, &tc).is_err());
        assert!(tcop_hessian(1.0, 1.0, 0.5, 100.0, &tc).is_err());
        assert_eq!(asymptotic_tcop(0.0, 1.0, 0.01, 1e4, &tc).unwrap(), 0.0);
    }

    #[test]
    fn asymptotic_close_to_exact_for_large_population() {
        let tc = TimingConstants::default();
        let approx = asymptotic_tcop(1.0, 1.0, 1e-4, 1e4, &tc).unwrap();
        let exact = expected_tcop(1, &mix(&[(2e-4, 1e4)]), &tc).unwrap().e_tcop;
        assert!(((approx - exact) / exact).abs() < 0.01, "{approx} vs {exact}");
    }

    #[test]
    fn single_probability_form_matches_mixture() {
        let tc = TimingConstants::default();
        let a = single_probability_tcop(3.0, 0.5, 0.004, 300.0, &tc).unwrap();
        let b = expected_tcop(3, &mix(&[(0.006, 300.0)]), &tc).unwrap().e_tcop;
        assert!(((a - b) / b).abs() < 1e-12);
    }

    #[test]
    fn simplification_gap_shrinks_with_population() {
        let tc = TimingConstants::default();
        let gap = |l: f64| {
            let p = 1.0 / (2.0 * l);
            (single_probability_tcop(5.0, 1.0, p, l, &tc).unwrap()
                - asymptotic_tcop(5.0, 1.0, p, l, &tc).unwrap())
            .abs()
        };
        let (g1, g2, g3) = (gap(1e2), gap(1e3), gap(1e4));
        assert!(g1 > g2 && g2 > g3);
    }

    #[test]
    fn hessian_structure() {
        let tc = TimingConstants::default();
        let h = tcop_hessian(100.0, 1.0, 0.001, 1e5, &tc).unwrap();
        assert_eq!(h[(0, 0)], 0.0);
        assert_eq!(h, h.transpose());
        assert!(h[(1, 1)] > 0.0 && h[(2, 2)] > 0.0);
    }
}
