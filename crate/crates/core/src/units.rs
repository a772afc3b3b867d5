//! Integer units used throughout the simulator.
//!
//! Time is kept in nanoseconds and bandwidth in kbit/s so that resource and
//! delay accounting is exact: every catalog value (0.01 ms processing steps,
//! 0.064 Mbps VoIP streams) is an integer in these units.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};

/// Simulated time instant or duration, in nanoseconds.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_ms(ms: f64) -> Self {
        assert!(ms >= 0.0 && ms.is_finite(), "negative or non-finite time {ms}");
        SimTime((ms * 1e6).round() as u64)
    }

    pub const fn from_nanos(ns: u64) -> Self {
        SimTime(ns)
    }

    pub const fn nanos(self) -> u64 {
        self.0
    }

    pub fn as_ms(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign for SimTime {
    fn add_assign(&mut self, rhs: SimTime) {
        self.0 += rhs.0;
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(
            self.0
                .checked_sub(rhs.0)
                .expect("simulated time went backwards"),
        )
    }
}

impl Sum for SimTime {
    fn sum<I: Iterator<Item = SimTime>>(iter: I) -> SimTime {
        iter.fold(SimTime::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}ms", self.as_ms())
    }
}

/// Link bandwidth in kbit/s.
#[derive(
    Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Kbps(pub u64);

impl Kbps {
    pub const ZERO: Kbps = Kbps(0);

    pub fn from_mbps(mbps: f64) -> Self {
        assert!(mbps >= 0.0 && mbps.is_finite(), "invalid bandwidth {mbps}");
        Kbps((mbps * 1e3).round() as u64)
    }

    pub fn as_mbps(self) -> f64 {
        self.0 as f64 / 1e3
    }
}

impl Add for Kbps {
    type Output = Kbps;
    fn add(self, rhs: Kbps) -> Kbps {
        Kbps(self.0 + rhs.0)
    }
}

impl Sub for Kbps {
    type Output = Kbps;
    fn sub(self, rhs: Kbps) -> Kbps {
        Kbps(self.0.checked_sub(rhs.0).expect("bandwidth underflow"))
    }
}

impl Sum for Kbps {
    fn sum<I: Iterator<Item = Kbps>>(iter: I) -> Kbps {
        iter.fold(Kbps::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Kbps {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Mbps", self.as_mbps())
    }
}

/// Signal speed in fibre expressed as km per millisecond (3e8 m/s).
pub const LIGHT_KM_PER_MS: f64 = 300.0;

/// One-hop propagation delay over `distance_km` of fibre.
pub fn propagation_delay(distance_km: f64) -> SimTime {
    assert!(distance_km >= 0.0, "negative distance {distance_km}");
    SimTime::from_ms(distance_km / LIGHT_KM_PER_MS)
}

/// A bound no larger than the summed delays of any route of at least
/// `distance_km` split into at most `hops` separately rounded transfers.
pub fn propagation_lower_bound(distance_km: f64, hops: u64) -> SimTime {
    let ns = (distance_km / LIGHT_KM_PER_MS * 1e6).floor() as u64;
    SimTime(ns.saturating_sub(hops))
}

/// SplitMix64 finaliser, used to derive independent sub-seeds.
pub fn derive_seed(base: u64, stream: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(stream.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn propagation_examples() {
        assert_eq!(propagation_delay(0.0), SimTime::ZERO);
        assert_eq!(propagation_delay(300.0), SimTime::from_ms(1.0));
        assert_eq!(propagation_delay(150.0), SimTime::from_ms(0.5));
    }

    #[test]
    fn lower_bound_never_exceeds_split_route() {
        // 0.4 ns + 0.4 ns rounds to 0 + 0 while the total rounds to 1.
        let leg = 0.4e-6 * LIGHT_KM_PER_MS;
        let split = propagation_delay(leg) + propagation_delay(leg);
        assert_eq!(split, SimTime::ZERO);
        assert!(propagation_lower_bound(2.0 * leg, 2) <= split);
        assert_eq!(propagation_lower_bound(300.0, 3), SimTime::from_nanos(999_997));
    }

    #[test]
    fn catalog_values_are_integral() {
        assert_eq!(SimTime::from_ms(0.06).nanos(), 60_000);
        assert_eq!(SimTime::from_ms(0.01).nanos(), 10_000);
        assert_eq!(Kbps::from_mbps(0.064).0, 64);
        assert_eq!(Kbps::from_mbps(1000.0) - Kbps(15 * 64), Kbps(999_040));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(1, 0), derive_seed(1, 1));
        assert_ne!(derive_seed(1, 0), derive_seed(2, 0));
        assert_eq!(derive_seed(9, 3), derive_seed(9, 3));
    }
}
