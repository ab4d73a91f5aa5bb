//! Sources of randomness for the simulators.
//!
//! Every run draws from one [`Randomness`] stream: packet arrivals and
//! contention-slot outcomes. [`SeededRandomness`] is the production source;
//! tests substitute scripted sources to force specific outcomes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Poisson};

use crate::timing::Nanos;

/// Devices currently contending with one probability.
#[derive(Clone, Copy, Debug)]
pub struct ContenderGroup<'a> {
    pub p: f64,
    pub members: &'a [usize],
}

/// Outcome of one contention slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotOutcome {
    Idle,
    /// Exactly one transmitter: `groups[group].members[member]`.
    Success { group: usize, member: usize },
    Collision { transmitters: u64 },
}

pub trait Randomness {
    /// Appends the arrival offsets (from frame start, ascending) of one
    /// device's packets during one frame.
    fn arrivals(&mut self, frame: u64, device: usize, lambda: f64, t_frame: Nanos, out: &mut Vec<Nanos>);

    /// Draws which devices transmit in one contention slot.
    fn draw_slot(&mut self, groups: &[ContenderGroup<'_>]) -> SlotOutcome;
}

/// ChaCha-backed source; identical seeds give identical streams on every
/// platform.
#[derive(Clone, Debug)]
pub struct SeededRandomness {
    rng: ChaCha8Rng,
}

impl SeededRandomness {
    pub fn new(seed: u64) -> Self {
        Self { rng: ChaCha8Rng::seed_from_u64(seed) }
    }
}

impl Randomness for SeededRandomness {
    fn arrivals(&mut self, _frame: u64, _device: usize, lambda: f64, t_frame: Nanos, out: &mut Vec<Nanos>) {
        let mean = lambda * t_frame.as_secs();
        if mean <= 0.0 {
            return;
        }
        let count = Poisson::new(mean).expect("positive mean").sample(&mut self.rng) as usize;
        let start = out.len();
        for _ in 0..count {
            out.push(Nanos(self.rng.random_range(0..t_frame.0)));
        }
        out[start..].sort_unstable();
    }

    fn draw_slot(&mut self, groups: &[ContenderGroup<'_>]) -> SlotOutcome {
        let mut total = 0u64;
        let mut lone = None;
        for (g, group) in groups.iter().enumerate() {
            let n = group.members.len() as u64;
            if n == 0 {
                continue;
            }
            // one binomial per group instead of one Bernoulli per device
            let k = if group.p >= 1.0 {
                n
            } else {
                Binomial::new(n, group.p).expect("valid binomial").sample(&mut self.rng)
            };
            if k == 1 {
                lone = Some(g);
            }
            total += k;
        }
        match total {
            0 => SlotOutcome::Idle,
            1 => {
                let group = lone.expect("single transmitter has a group");
                let member = self.rng.random_range(0..groups[group].members.len());
                SlotOutcome::Success { group, member }
            }
            transmitters => SlotOutcome::Collision { transmitters },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_stream_is_reproducible() {
        let members: Vec<usize> = (0..50).collect();
        let groups = [ContenderGroup { p: 0.03, members: &members }];
        let mut a = SeededRandomness::new(9);
        let mut b = SeededRandomness::new(9);
        for _ in 0..1000 {
            assert_eq!(a.draw_slot(&groups), b.draw_slot(&groups));
        }
        let (mut x, mut y) = (Vec::new(), Vec::new());
        a.arrivals(1, 0, 3.0, Nanos::from_ms(1000), &mut x);
        b.arrivals(1, 0, 3.0, Nanos::from_ms(1000), &mut y);
        assert_eq!(x, y);
    }

    #[test]
    fn arrivals_are_sorted_and_inside_frame() {
        let mut r = SeededRandomness::new(1);
        let mut out = Vec::new();
        let t = Nanos::from_ms(1000);
        for f in 0..100 {
            out.clear();
            r.arrivals(f, 0, 5.0, t, &mut out);
            assert!(out.windows(2).all(|w| w[0] <= w[1]));
            assert!(out.iter().all(|&a| a < t));
        }
        out.clear();
        r.arrivals(0, 0, 0.0, t, &mut out);
        assert!(out.is_empty());
    }

    #[test]
    fn certain_transmitters() {
        let one = [3usize];
        let two = [1usize, 2];
        let mut r = SeededRandomness::new(0);
        let g = [ContenderGroup { p: 1.0, members: &one }];
        assert_eq!(r.draw_slot(&g), SlotOutcome::Success { group: 0, member: 0 });
        let g = [ContenderGroup { p: 1.0, members: &two }];
        assert_eq!(r.draw_slot(&g), SlotOutcome::Collision { transmitters: 2 });
        assert_eq!(r.draw_slot(&[]), SlotOutcome::Idle);
    }
}
