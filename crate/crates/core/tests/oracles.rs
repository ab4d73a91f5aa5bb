//! Analytical results checked against independent computations: direct
//! sampling of the slot process, textbook closed forms and finite
//! differences.

use hybridmac_core::analytics::{self, ContentionMixture};
use hybridmac_core::optimizer::{evolve_population, initial_population};
use hybridmac_core::{ClassConfig, Nanos, PopulationState, TimingConstants};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Number of transmitters in one slot when every `(p, n)` group transmits
/// independently, together with the group of the last transmitter seen.
fn slot(rng: &mut ChaCha8Rng, groups: &[(f64, usize)]) -> (usize, usize) {
    let mut count = 0;
    let mut who = usize::MAX;
    for (g, &(p, n)) in groups.iter().enumerate() {
        for _ in 0..n {
            if rng.random::<f64>() < p {
                count += 1;
                who = g;
            }
        }
    }
    (count, who)
}

fn within(actual: f64, expected: f64, se: f64) {
    assert!((actual - expected).abs() <= 4.0 * se, "{actual} vs {expected} (se {se})");
}

#[test]
fn success_probability_matches_sampled_slots() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let groups = [(0.1, 10)];
    let n = 1_000_000;
    let (mut idle, mut single) = (0u64, 0u64);
    for _ in 0..n {
        match slot(&mut rng, &groups).0 {
            0 => idle += 1,
            1 => single += 1,
            _ => {}
        }
    }
    let mix = ContentionMixture::single(0.1, 10.0).unwrap();
    let p0 = 0.9f64.powi(10);
    let p1 = 10.0 * 0.1 * 0.9f64.powi(9);
    assert!((analytics::prob_no_transmission(&mix) - p0).abs() < 1e-15);
    assert!((analytics::prob_single_transmission(&mix) - p1).abs() < 1e-15);
    let ps = analytics::prob_success_given_busy(&mix).unwrap();
    assert!((ps - p1 / (1.0 - p0)).abs() < 1e-14);
    let busy = (n - idle) as f64;
    within(single as f64 / busy, ps, (ps * (1.0 - ps) / busy).sqrt());
    within(idle as f64 / n as f64, p0, (p0 * (1.0 - p0) / n as f64).sqrt());
}

/// Collisions before a success and idle time before a busy slot, sampled
/// attempt by attempt.
#[test]
fn collision_and_idle_means_match_sampled_attempts() {
    let tc = TimingConstants::default();
    let delta_idle = tc.slot_durations().idle.as_us();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let groups = [(0.1, 10)];
    let attempts = 100_000;
    let (mut collisions, mut col_sq) = (0f64, 0f64);
    let mut idle_per_busy = Vec::new();
    for _ in 0..attempts {
        let mut c = 0f64;
        loop {
            let mut idle = 0f64;
            let k = loop {
                let (k, _) = slot(&mut rng, &groups);
                if k > 0 {
                    break k;
                }
                idle += delta_idle;
            };
            idle_per_busy.push(idle);
            if k == 1 {
                break;
            }
            c += 1.0;
        }
        collisions += c;
        col_sq += c * c;
    }
    let mix = ContentionMixture::single(0.1, 10.0).unwrap();
    let n = attempts as f64;
    let mean = collisions / n;
    let var = col_sq / n - mean * mean;
    within(mean, analytics::expected_collisions(&mix).unwrap(), (var / n).sqrt());

    let m = idle_per_busy.len() as f64;
    let idle_mean = idle_per_busy.iter().sum::<f64>() / m;
    let idle_var = idle_per_busy.iter().map(|x| (x - idle_mean).powi(2)).sum::<f64>() / m;
    within(idle_mean, analytics::expected_idle(&mix, delta_idle).unwrap(), (idle_var / m).sqrt());
}

#[test]
fn success_shares_match_sampled_winners() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let groups = [(0.1, 10), (0.2, 5)];
    let (mut wins, mut first) = (0u64, 0u64);
    for _ in 0..1_000_000 {
        let (k, g) = slot(&mut rng, &groups);
        if k == 1 {
            wins += 1;
            if g == 0 {
                first += 1;
            }
        }
    }
    let mix = ContentionMixture::from_pairs(&[(0.1, 10.0), (0.2, 5.0)]).unwrap();
    let shares = analytics::success_shares(&mix).unwrap();
    // a lone winner from group i has weight n_i p_i / (1 - p_i)
    let w = [10.0 * 0.1 / 0.9, 5.0 * 0.2 / 0.8];
    assert!((shares[0] - w[0] / (w[0] + w[1])).abs() < 1e-14);
    assert!((shares[0] + shares[1] - 1.0).abs() < 1e-14);
    let s = shares[0];
    within(first as f64 / wins as f64, s, (s * (1.0 - s) / wins as f64).sqrt());
}

#[test]
fn two_device_closed_form() {
    // two devices at 1/2: P0 = 1/4, P1 = 1/2, so a busy slot succeeds with
    // probability 2/3 and E[N_c] = 1/2
    let mix = ContentionMixture::single(0.5, 2.0).unwrap();
    assert!((analytics::prob_success_given_busy(&mix).unwrap() - 2.0 / 3.0).abs() < 1e-15);
    assert!((analytics::expected_collisions(&mix).unwrap() - 0.5).abs() < 1e-15);
    assert!((analytics::expected_idle(&mix, 10.0).unwrap() - 10.0 / 3.0).abs() < 1e-14);
}

/// Full contention periods: `n` devices at `p` until `m` distinct devices
/// have succeeded, winners leaving after their success.
#[test]
fn contention_period_length_matches_sampled_periods() {
    let tc = TimingConstants::default();
    let s = tc.slot_durations();
    let (di, dc, ds) = (s.idle.as_us(), s.collision.as_us(), s.success.as_us());
    let (m, n, p) = (50u64, 500usize, 0.01);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let runs = 200;
    let mut lengths = Vec::new();
    for _ in 0..runs {
        let mut remaining = n;
        let mut t = 0.0;
        while (n - remaining) < m as usize {
            match slot(&mut rng, &[(p, remaining)]).0 {
                0 => t += di,
                1 => {
                    t += ds;
                    remaining -= 1;
                }
                _ => t += dc,
            }
        }
        lengths.push(t);
    }
    let mean = lengths.iter().sum::<f64>() / runs as f64;
    let var = lengths.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let se = (var / runs as f64).sqrt();
    // winners leave, so the expectation is summed over the shrinking
    // population rather than taken at its starting size
    let model: f64 = (0..m)
        .map(|i| {
            let mix = ContentionMixture::single(p, (n as u64 - i) as f64).unwrap();
            analytics::expected_tcop(1, &mix, &tc).unwrap().e_tcop
        })
        .sum();
    assert!((mean - model).abs() <= 3.0 * se, "{mean} vs {model} (se {se})");
}

#[test]
fn attempt_time_decomposes() {
    let tc = TimingConstants::default();
    let mix = ContentionMixture::from_pairs(&[(0.002, 900.0), (0.004, 200.0)]).unwrap();
    let e = analytics::expected_tcop(37, &mix, &tc).unwrap();
    assert!((e.idle_time + e.collision_time + e.success_time - e.e_attempt).abs() < 1e-9 * e.e_attempt);
    assert!((e.e_tcop - 37.0 * e.e_attempt).abs() < 1e-9 * e.e_tcop);
    assert!((e.success_time - 39.7).abs() < 1e-12);
    assert!((e.collision_time - e.e_collisions * 29.7).abs() < 1e-9);
}

#[test]
fn newly_active_devices_follow_the_poisson_law() {
    let v = analytics::expected_new_arrivals(100.0, 1.0, Nanos::from_ms(1000));
    assert!((v - 63.212).abs() < 5e-4);
    let cfg = ClassConfig::homogeneous(1200, 0.001, 1.0, 0.25);
    let tc = TimingConstants::default();
    let start = initial_population(&cfg, &tc);
    assert!((start.counts[0][0] - 1200.0 * (1.0 - (-0.25f64).exp())).abs() < 1e-9);
}

/// One step of the population recursion recomputed by hand.
#[test]
fn population_recursion_step() {
    let tc = TimingConstants::default();
    let cfg = ClassConfig::homogeneous(1200, 0.01, 1.0, 1.0);
    let arrivals = 1.0 - (-1.0f64).exp();

    let start = PopulationState { frame_index: 1, counts: vec![vec![100.0]] };
    let next = evolve_population(&start, 40, &cfg, &tc).unwrap();
    assert_eq!(next.frame_index, 2);
    assert_eq!(next.counts[0].len(), 2);
    assert!((next.counts[0][1] - 60.0).abs() < 1e-12);
    assert!((next.counts[0][0] - 1140.0 * arrivals).abs() < 1e-9);

    // two virtual classes: winners split by the lone-winner weights, the
    // larger fractional part rounding up
    let (n0, n1) = (next.counts[0][0], next.counts[0][1]);
    let (p0, p1) = (0.01, 0.02);
    let w0 = n0 * p0 / (1.0 - p0);
    let w1 = n1 * p1 / (1.0 - p1);
    let raw0 = 40.0 * w0 / (w0 + w1);
    let raw1 = 40.0 - raw0;
    let (won0, won1) = if raw0.ceil() - raw0 < raw1.ceil() - raw1 {
        (raw0.ceil(), 40.0 - raw0.ceil())
    } else {
        (40.0 - raw1.ceil(), raw1.ceil())
    };
    let after = evolve_population(&next, 40, &cfg, &tc).unwrap();
    let survivors = (n0 - won0) + (n1 - won1);
    assert!((after.counts[0][1] - (n0 - won0)).abs() < 1e-9);
    assert!((after.counts[0][2] - (n1 - won1)).abs() < 1e-9);
    assert!((after.counts[0][0] - (1200.0 - survivors) * arrivals).abs() < 1e-9);
}

#[test]
fn winners_beyond_the_population_are_rejected() {
    let tc = TimingConstants::default();
    let cfg = ClassConfig::homogeneous(50, 0.01, 1.0, 1.0);
    let start = PopulationState { frame_index: 1, counts: vec![vec![10.0]] };
    assert!(evolve_population(&start, 11, &cfg, &tc).is_err());
    let all = evolve_population(&start, 10, &cfg, &tc).unwrap();
    assert_eq!(all.counts[0].len(), 1);
}

#[test]
fn single_probability_form_is_the_one_entry_mixture() {
    let tc = TimingConstants::default();
    for &(alpha, p, l) in &[(1.0, 0.001, 1200.0), (0.5, 0.01, 300.0), (3.0, 0.0002, 5000.0)] {
        let x: f64 = (1.0 + alpha) * p;
        let mix = ContentionMixture::single(x, l).unwrap();
        let e = analytics::expected_tcop(25, &mix, &tc).unwrap().e_tcop;
        let s = analytics::single_probability_tcop(25.0, alpha, p, l, &tc).unwrap();
        assert!((s / e - 1.0).abs() < 1e-9, "{s} vs {e}");
    }
}

#[test]
fn large_population_form_is_within_one_percent() {
    let tc = TimingConstants::default();
    for &(alpha, p, l) in &[(1.0, 0.0005, 1200.0), (0.5, 0.001, 800.0), (2.0, 0.0001, 5000.0)] {
        let exact = analytics::single_probability_tcop(40.0, alpha, p, l, &tc).unwrap();
        let approx = analytics::asymptotic_tcop(40.0, alpha, p, l, &tc).unwrap();
        assert!((approx / exact - 1.0).abs() < 0.01, "{approx} vs {exact}");
    }
}

/// Central differences of the scaled large-population form, with steps
/// small against the exponential scale `1 / (L dx)`.
fn fd_hessian(m: f64, alpha: f64, p: f64, l: f64, tc: &TimingConstants, scale: f64) -> [[f64; 3]; 3] {
    let f = |v: [f64; 3]| analytics::asymptotic_tcop_scaled(v[0], v[2], v[1], l, tc, scale).unwrap();
    let x = [m, p, alpha];
    let h = [m * 1e-3, (1e-3 / (l * (1.0 + alpha))).min(p * 1e-3), (1e-3 / (l * p)).min(alpha * 1e-3)];
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let at = |si: f64, sj: f64| {
                let mut v = x;
                v[i] += si * h[i];
                v[j] += sj * h[j];
                f(v)
            };
            out[i][j] = if i == j {
                (at(0.5, 0.5) - 2.0 * f(x) + at(-0.5, -0.5)) / (h[i] * h[i])
            } else {
                (at(1.0, 1.0) - at(1.0, -1.0) - at(-1.0, 1.0) + at(-1.0, -1.0)) / (4.0 * h[i] * h[j])
            };
        }
    }
    out
}

#[test]
fn hessian_matches_finite_differences() {
    let tc = TimingConstants::default();
    for &(m, alpha, p, l) in &[(100.0, 1.0, 0.001, 1e5), (40.0, 0.5, 0.002, 1200.0), (200.0, 3.0, 0.0001, 5000.0)] {
        let hs = analytics::tcop_hessian_scaled(m, alpha, p, l, &tc).unwrap();
        let fd = fd_hessian(m, alpha, p, l, &tc, hs.log_scale);
        let norm = hs.matrix.abs().max();
        for i in 0..3 {
            for j in 0..3 {
                let err = (hs.matrix[(i, j)] - fd[i][j]).abs() / norm;
                assert!(err < 1e-4, "({i},{j}) at {m},{alpha},{p},{l}: {} vs {}", hs.matrix[(i, j)], fd[i][j]);
            }
        }
        assert_eq!(hs.matrix[(0, 0)], 0.0);
        assert_eq!(hs.matrix, hs.matrix.transpose());
    }
}
