//! Hierarchical and incremental contending probabilities.
//!
//! A class-`q` device that has failed `d` consecutive frames contends with
//! `min(1, (1 + alpha)^(q + d - 1) * p_inl)`. Devices of different classes
//! that share `q + d - 1` (their virtual class) are indistinguishable to the
//! contention process.

use crate::error::{Error, Result};

/// Class membership and consecutive-failure count of a device.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ContentionIdentity {
    /// Priority class, 1-based.
    pub q: u32,
    /// Consecutive frames failed in contention.
    pub d: u32,
}

impl ContentionIdentity {
    pub fn new(q: u32, d: u32) -> Self {
        debug_assert!(q >= 1, "class index is 1-based");
        Self { q, d }
    }

    /// Zero-based virtual class `q + d - 1`.
    pub fn virtual_class(self) -> u32 {
        self.q + self.d - 1
    }

    pub fn after_failure(self) -> Self {
        Self { d: self.d + 1, ..self }
    }
}

/// Clears the failure count after a successful transmission.
pub fn reset_after_success(id: ContentionIdentity) -> ContentionIdentity {
    ContentionIdentity { d: 0, ..id }
}

fn check(alpha: f64, p_inl: f64) -> Result<()> {
    if !(p_inl > 0.0 && p_inl <= 1.0) {
        return Err(Error::InvalidArgument(format!("p_inl = {p_inl} not in (0, 1]")));
    }
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha = {alpha} must be positive")));
    }
    Ok(())
}

/// Contending probability of virtual class `rho` (zero-based).
pub fn virtual_class_probability(rho: u32, alpha: f64, p_inl: f64) -> Result<f64> {
    check(alpha, p_inl)?;
    Ok(capped_power(1.0 + alpha, rho as f64, p_inl))
}

/// Contending probability of a class-`q` device after `d` failed frames.
pub fn contending_probability(q: u32, d: u32, alpha: f64, p_inl: f64) -> Result<f64> {
    if q == 0 {
        return Err(Error::InvalidArgument("class index is 1-based".into()));
    }
    virtual_class_probability(q + d - 1, alpha, p_inl)
}

/// Probability rule with separate class and escalation indicators.
///
/// With equal indicators this reduces to [`contending_probability`]. An
/// escalation indicator of zero keeps each device at its class level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProbabilityRule {
    pub p_inl: f64,
    pub alpha_class: f64,
    pub alpha_escalation: f64,
}

impl ProbabilityRule {
    pub fn new(p_inl: f64, alpha_class: f64, alpha_escalation: f64) -> Result<Self> {
        check(alpha_class, p_inl)?;
        if !(alpha_escalation.is_finite() && alpha_escalation >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_escalation = {alpha_escalation} must be non-negative"
            )));
        }
        Ok(Self { p_inl, alpha_class, alpha_escalation })
    }

    pub fn probability(&self, id: ContentionIdentity) -> f64 {
        if self.alpha_class == self.alpha_escalation {
            return capped_power(1.0 + self.alpha_class, id.virtual_class() as f64, self.p_inl);
        }
        let class_level = capped_power(1.0 + self.alpha_class, (id.q - 1) as f64, self.p_inl);
        capped_power(1.0 + self.alpha_escalation, id.d as f64, class_level)
    }
}

fn capped_power(base: f64, exp: f64, scale: f64) -> f64 {
    // log form so large failure counts saturate instead of overflowing
    let log = exp * base.ln() + scale.ln();
    if log >= 0.0 {
        1.0
    } else {
        log.exp().min(1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_failures_square_the_factor() {
        let alpha = 0.7;
        let p1 = 0.05;
        let p = contending_probability(1, 2, alpha, p1).unwrap();
        assert!((p - (1.0 + alpha) * (1.0 + alpha) * p1).abs() < 1e-15);
    }

    #[test]
    fn cap_at_one() {
        assert_eq!(contending_probability(1, 0, 3.0, 1.0).unwrap(), 1.0);
        assert_eq!(contending_probability(3, 40, 1.0, 0.1).unwrap(), 1.0);
    }

    #[test]
    fn hand_value() {
        let p = contending_probability(1, 2, 1.0, 0.1).unwrap();
        assert!((p - 0.4).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(contending_probability(1, 0, 1.0, 0.0).is_err());
        assert!(contending_probability(1, 0, 1.0, 1.5).is_err());
        assert!(contending_probability(1, 0, 0.0, 0.5).is_err());
        assert!(contending_probability(1, 0, -1.0, 0.5).is_err());
        assert!(contending_probability(0, 0, 1.0, 0.5).is_err());
    }

    #[test]
    fn reset_clears_failures_only() {
        let id = reset_after_success(ContentionIdentity::new(2, 3));
        assert_eq!(id, ContentionIdentity::new(2, 0));
        let id = reset_after_success(ContentionIdentity::new(1, 0));
        assert_eq!(id, ContentionIdentity::new(1, 0));
    }

    #[test]
    fn reset_returns_to_class_level() {
        let (alpha, p) = (0.5, 0.08);
        let id = reset_after_success(ContentionIdentity::new(3, 4));
        let after = contending_probability(id.q, id.d, alpha, p).unwrap();
        let class_level = (1.0 + alpha).powi(2) * p;
        assert!((after - class_level).abs() < 1e-15);
    }

    #[test]
    fn merging_across_classes() {
        // class 3 fresh, class 2 after one failure, class 1 after two failures
        let (alpha, p) = (1.0, 0.1);
        let a = contending_probability(3, 0, alpha, p).unwrap();
        let b = contending_probability(2, 1, alpha, p).unwrap();
        let c = contending_probability(1, 2, alpha, p).unwrap();
        assert_eq!(a, b);
        assert_eq!(b, c);
    }

    #[test]
    fn single_class_virtual_class_is_failure_count() {
        for d in 0..10 {
            assert_eq!(ContentionIdentity::new(1, d).virtual_class(), d);
        }
    }

    #[test]
    fn rule_matches_shared_indicator() {
        let rule = ProbabilityRule::new(0.1, 1.0, 1.0).unwrap();
        for q in 1..=3 {
            for d in 0..5 {
                let id = ContentionIdentity::new(q, d);
                assert_eq!(rule.probability(id), contending_probability(q, d, 1.0, 0.1).unwrap());
            }
        }
        let frozen = ProbabilityRule::new(0.1, 1.0, 0.0).unwrap();
        assert!((frozen.probability(ContentionIdentity::new(2, 7)) - 0.2).abs() < 1e-15);
    }
}
