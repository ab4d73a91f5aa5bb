//! Shared protocol constants, network description and derived slot lengths.
//!
//! All durations are stored as integer nanoseconds ([`Nanos`]) so that the
//! mixed millisecond/microsecond constants of the frame layout add up
//! exactly. Analytical code works in `f64` microseconds via [`Nanos::as_us`].

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A non-negative duration in integer nanoseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Nanos(pub u64);

impl Nanos {
    pub const ZERO: Nanos = Nanos(0);

    pub const fn from_us(us: u64) -> Self {
        Nanos(us * 1_000)
    }

    pub const fn from_ms(ms: u64) -> Self {
        Nanos(ms * 1_000_000)
    }

    /// Rounds a real number of microseconds to the nearest nanosecond.
    pub fn from_us_f64(us: f64) -> Self {
        Nanos((us * 1_000.0).round().max(0.0) as u64)
    }

    pub fn from_ms_f64(ms: f64) -> Self {
        Nanos((ms * 1_000_000.0).round().max(0.0) as u64)
    }

    pub fn from_secs_f64(s: f64) -> Self {
        Nanos((s * 1e9).round().max(0.0) as u64)
    }

    pub fn as_us(self) -> f64 {
        self.0 as f64 / 1_000.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub fn as_secs(self) -> f64 {
        self.0 as f64 / 1e9
    }

    pub fn saturating_sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0.saturating_sub(rhs.0))
    }
}

impl Add for Nanos {
    type Output = Nanos;
    fn add(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 + rhs.0)
    }
}

impl AddAssign for Nanos {
    fn add_assign(&mut self, rhs: Nanos) {
        self.0 += rhs.0;
    }
}

impl Sub for Nanos {
    type Output = Nanos;
    fn sub(self, rhs: Nanos) -> Nanos {
        Nanos(self.0 - rhs.0)
    }
}

impl Mul<u64> for Nanos {
    type Output = Nanos;
    fn mul(self, rhs: u64) -> Nanos {
        Nanos(self.0 * rhs)
    }
}

impl fmt::Display for Nanos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}us", self.as_us())
    }
}

/// Frame timing and radio power constants.
#[derive(Clone, Debug, PartialEq)]
pub struct TimingConstants {
    pub t_frame: Nanos,
    /// Length of one TDMA transmission slot.
    pub t_r: Nanos,
    /// Length of a transmission request (Tran-REQ).
    pub t_req: Nanos,
    /// Notification message broadcast at the start of the frame.
    pub t_nof: Nanos,
    /// Announcement message closing the contention period.
    pub t_anc: Nanos,
    pub t_ack: Nanos,
    pub sifs: Nanos,
    pub bifs: Nanos,
    /// Length of an idle contention slot.
    pub delta_idle: Nanos,
    /// Transmit power in watts.
    pub p_tx: f64,
    /// Receive power in watts.
    pub p_rx: f64,
    /// Idle-listening power in watts.
    pub p_idle: f64,
}

impl Default for TimingConstants {
    fn default() -> Self {
        Self {
            t_frame: Nanos::from_ms(1000),
            t_r: Nanos::from_ms(2),
            t_req: Nanos(22_200),
            t_nof: Nanos::from_us(10),
            t_anc: Nanos::from_us(10),
            t_ack: Nanos(7_500),
            sifs: Nanos(2_500),
            bifs: Nanos(7_500),
            delta_idle: Nanos::from_us(10),
            p_tx: 1.5,
            p_rx: 1.0,
            p_idle: 0.5,
        }
    }
}

/// Durations of the three kinds of contention slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SlotDurations {
    pub idle: Nanos,
    pub collision: Nanos,
    pub success: Nanos,
}

impl TimingConstants {
    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("t_frame", self.t_frame),
            ("t_r", self.t_r),
            ("t_req", self.t_req),
            ("t_nof", self.t_nof),
            ("t_anc", self.t_anc),
            ("t_ack", self.t_ack),
            ("sifs", self.sifs),
            ("bifs", self.bifs),
            ("delta_idle", self.delta_idle),
        ];
        for (name, d) in durations {
            if d == Nanos::ZERO {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        for (name, w) in [("p_tx", self.p_tx), ("p_rx", self.p_rx), ("p_idle", self.p_idle)] {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be a positive power")));
            }
        }
        if self.t_r >= self.t_frame {
            return Err(Error::InvalidConfig("t_r must be shorter than t_frame".into()));
        }
        if self.t_req + self.sifs + self.t_ack + self.bifs >= self.t_frame {
            return Err(Error::InvalidConfig(
                "a successful contention slot must fit inside one frame".into(),
            ));
        }
        Ok(())
    }

    /// Idle, collision and success slot lengths.
    ///
    /// A collision occupies the request plus the backoff spacing; a success
    /// additionally carries the short spacing and the acknowledgement.
    pub fn slot_durations(&self) -> SlotDurations {
        SlotDurations {
            idle: self.delta_idle,
            collision: self.t_req + self.bifs,
            success: self.t_req + self.sifs + self.t_ack + self.bifs,
        }
    }

    /// Number of TDMA slots that fit in one frame.
    pub fn slots_per_frame(&self) -> u64 {
        self.t_frame.0 / self.t_r.0
    }

    /// Multiplies every duration by `factor`; powers are unchanged.
    pub fn scaled(&self, factor: u64) -> Self {
        Self {
            t_frame: self.t_frame * factor,
            t_r: self.t_r * factor,
            t_req: self.t_req * factor,
            t_nof: self.t_nof * factor,
            t_anc: self.t_anc * factor,
            t_ack: self.t_ack * factor,
            sifs: self.sifs * factor,
            bifs: self.bifs * factor,
            delta_idle: self.delta_idle * factor,
            ..self.clone()
        }
    }
}

/// Free function form of [`TimingConstants::slot_durations`].
pub fn slot_durations(tc: &TimingConstants) -> SlotDurations {
    tc.slot_durations()
}

/// Priority classes, contention parameters and traffic intensity.
///
/// Class 1 is the lowest priority. `class_sizes[q - 1]` is the number of
/// devices in class `q`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassConfig {
    pub class_sizes: Vec<u64>,
    /// Initial contending probability of class 1.
    pub p_inl: f64,
    /// Incremental indicator applied between priority classes.
    pub alpha: f64,
    /// Incremental indicator applied per failed frame. `None` uses `alpha`;
    /// zero disables escalation.
    pub alpha_escalation: Option<f64>,
    /// Poisson packet arrival rate per device, packets per second.
    pub lambda: f64,
    /// Order in which class blocks are laid out over device ids. Defaults to
    /// ascending class index.
    pub block_order: Option<Vec<u32>>,
}

impl Default for ClassConfig {
    fn default() -> Self {
        Self {
            class_sizes: vec![1200],
            p_inl: 0.1,
            alpha: 1.0,
            alpha_escalation: None,
            lambda: 1.0,
            block_order: None,
        }
    }
}

impl ClassConfig {
    pub fn homogeneous(k: u64, p_inl: f64, alpha: f64, lambda: f64) -> Self {
        Self {
            class_sizes: vec![k],
            p_inl,
            alpha,
            lambda,
            ..Self::default()
        }
    }

    pub fn q_count(&self) -> u32 {
        self.class_sizes.len() as u32
    }

    pub fn total_devices(&self) -> u64 {
        self.class_sizes.iter().sum()
    }

    pub fn escalation(&self) -> f64 {
        self.alpha_escalation.unwrap_or(self.alpha)
    }

    pub fn with_params(&self, alpha: f64, p_inl: f64) -> Self {
        Self {
            alpha,
            p_inl,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_sizes.is_empty() {
            return Err(Error::InvalidConfig("at least one class is required".into()));
        }
        if !(self.p_inl > 0.0 && self.p_inl <= 1.0) {
            return Err(Error::InvalidConfig(format!("p_inl = {} not in (0, 1]", self.p_inl)));
        }
        if !(self.alpha.is_finite() && self.alpha > 0.0) {
            return Err(Error::InvalidConfig(format!("alpha = {} must be positive", self.alpha)));
        }
        if let Some(esc) = self.alpha_escalation {
            if !(esc.is_finite() && esc >= 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "alpha_escalation = {esc} must be non-negative"
                )));
            }
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::InvalidConfig(format!("lambda = {} must be >= 0", self.lambda)));
        }
        if let Some(order) = &self.block_order {
            let mut sorted = order.clone();
            sorted.sort_unstable();
            let expected: Vec<u32> = (1..=self.q_count()).collect();
            if sorted != expected {
                return Err(Error::InvalidConfig(format!(
                    "block_order {order:?} must be a permutation of 1..={}",
                    self.q_count()
                )));
            }
        }
        Ok(())
    }

    /// Class index (1-based) of every device, in device-id order.
    pub fn device_classes(&self) -> Vec<u32> {
        let order: Vec<u32> = match &self.block_order {
            Some(o) => o.clone(),
            None => (1..=self.q_count()).collect(),
        };
        let mut out = Vec::with_capacity(self.total_devices() as usize);
        for q in order {
            let n = self.class_sizes[(q - 1) as usize];
            out.extend(std::iter::repeat_n(q, n as usize));
        }
        out
    }

    /// Probability that a device sees at least one arrival within a frame.
    pub fn activation_probability(&self, t_frame: Nanos) -> f64 {
        -(-self.lambda * t_frame.as_secs()).exp_m1()
    }
}

/// Expected number of active devices per (class, failure count) at the start
/// of a frame, as tracked by the base station's estimate.
///
/// `counts[q - 1][d]` is the (real-valued) number of class-`q` devices that
/// have failed `d` consecutive frames. Their virtual class is `q + d - 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PopulationState {
    pub frame_index: u64,
    pub counts: Vec<Vec<f64>>,
}

impl PopulationState {
    pub fn empty(q_count: u32) -> Self {
        Self {
            frame_index: 0,
            counts: vec![Vec::new(); q_count as usize],
        }
    }

    /// Active-device count per virtual class, indexed by `q + d - 1`.
    pub fn virtual_counts(&self) -> Vec<f64> {
        let mut out: Vec<f64> = Vec::new();
        for (qi, row) in self.counts.iter().enumerate() {
            for (d, &n) in row.iter().enumerate() {
                let v = qi + d;
                if out.len() <= v {
                    out.resize(v + 1, 0.0);
                }
                out[v] += n;
            }
        }
        out
    }

    /// Highest occupied virtual class, if any device is active.
    pub fn theta(&self) -> Option<usize> {
        self.virtual_counts().iter().rposition(|&n| n > 0.0)
    }

    pub fn total_active(&self) -> f64 {
        self.counts.iter().flatten().sum()
    }

    pub fn class_active(&self, q: u32) -> f64 {
        self.counts[(q - 1) as usize].iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_defaults_give_expected_slot_lengths() {
        let s = TimingConstants::default().slot_durations();
        assert_eq!(s.collision, Nanos(29_700));
        assert_eq!(s.success, Nanos(39_700));
        assert_eq!(s.idle, Nanos::from_us(10));
    }

    #[test]
    fn zero_overheads_collapse_to_idle() {
        let tc = TimingConstants {
            t_req: Nanos::ZERO,
            sifs: Nanos::ZERO,
            t_ack: Nanos::ZERO,
            bifs: Nanos::ZERO,
            ..TimingConstants::default()
        };
        let s = slot_durations(&tc);
        assert_eq!((s.idle, s.collision, s.success), (tc.delta_idle, Nanos::ZERO, Nanos::ZERO));
    }

    #[test]
    fn hand_evaluated_slot_lengths() {
        let tc = TimingConstants {
            t_req: Nanos(10),
            bifs: Nanos(5),
            sifs: Nanos(1),
            t_ack: Nanos(2),
            ..TimingConstants::default()
        };
        let s = tc.slot_durations();
        assert_eq!(s.collision, Nanos(15));
        assert_eq!(s.success, Nanos(18));
    }

    #[test]
    fn validation_rejects_bad_constants() {
        assert!(TimingConstants::default().validate().is_ok());
        let tc = TimingConstants { t_r: Nanos::from_ms(1000), ..Default::default() };
        assert!(tc.validate().is_err());
        let tc = TimingConstants { p_idle: 0.0, ..Default::default() };
        assert!(tc.validate().is_err());
        let tc = TimingConstants { sifs: Nanos::ZERO, ..Default::default() };
        assert!(tc.validate().is_err());
    }

    #[test]
    fn class_config_validation() {
        assert!(ClassConfig::default().validate().is_ok());
        assert!(ClassConfig { p_inl: 0.0, ..Default::default() }.validate().is_err());
        assert!(ClassConfig { p_inl: 1.01, ..Default::default() }.validate().is_err());
        assert!(ClassConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(ClassConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(ClassConfig { alpha_escalation: Some(0.0), ..Default::default() }.validate().is_ok());
        let bad_order = ClassConfig {
            class_sizes: vec![5, 5],
            block_order: Some(vec![1, 1]),
            ..Default::default()
        };
        assert!(bad_order.validate().is_err());
    }

    #[test]
    fn block_order_lays_out_device_classes() {
        let cfg = ClassConfig {
            class_sizes: vec![3, 2, 1],
            block_order: Some(vec![2, 3, 1]),
            ..Default::default()
        };
        assert_eq!(cfg.device_classes(), vec![2, 2, 3, 1, 1, 1]);
        let cfg = ClassConfig { block_order: None, ..cfg };
        assert_eq!(cfg.device_classes(), vec![1, 1, 1, 2, 2, 3]);
    }

    #[test]
    fn virtual_counts_merge_equal_rho() {
        let pop = PopulationState {
            frame_index: 3,
            // class 1 at d=2, class 2 at d=1, class 3 at d=0 all share rho = 2
            counts: vec![vec![0.0, 0.0, 4.0], vec![0.0, 3.0], vec![2.0]],
        };
        assert_eq!(pop.virtual_counts(), vec![0.0, 0.0, 9.0]);
        assert_eq!(pop.theta(), Some(2));
        assert_eq!(pop.total_active(), 9.0);
        assert_eq!(PopulationState::empty(2).theta(), None);
    }

    #[test]
    fn nanos_unit_conversions_round_trip() {
        assert_eq!(Nanos::from_us_f64(22.2), Nanos(22_200));
        assert_eq!(Nanos::from_ms_f64(1000.0), Nanos::from_ms(1000));
        assert_eq!(Nanos(29_700).as_us(), 29.7);
    }
}
