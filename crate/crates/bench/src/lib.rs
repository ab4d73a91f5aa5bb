//! Fixtures shared by the benchmarks.

use hybridmac_core::analytics::ContentionMixture;
use hybridmac_core::{ClassConfig, TimingConstants};

/// A mixture of `classes` virtual classes with `per_class` devices each,
/// probabilities doubling from `p`.
pub fn mixture(classes: usize, per_class: f64, p: f64) -> ContentionMixture {
    let pairs: Vec<(f64, f64)> = (0..classes).map(|i| ((p * 2f64.powi(i as i32)).min(1.0), per_class)).collect();
    ContentionMixture::from_pairs(&pairs).expect("valid mixture")
}

/// Homogeneous network at the given size, unit arrival rate.
pub fn network(k: u64, p_inl: f64) -> (ClassConfig, TimingConstants) {
    (ClassConfig::homogeneous(k, p_inl, 1.0, 1.0), TimingConstants::default())
}
