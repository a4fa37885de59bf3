//! Simulated time in whole microseconds. Integer time keeps event ordering
//! and serialized timestamps byte-identical across runs and platforms.

use std::fmt;
use std::ops::{Add, Sub};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(secs: f64) -> SimTime {
        SimTime((secs * 1_000_000.0).round() as u64)
    }

    pub fn from_micros(us: u64) -> SimTime {
        SimTime(us)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1_000_000.0
    }

    pub fn as_micros(self) -> u64 {
        self.0
    }

    /// Six-decimal seconds, the exact form used in JSONL captures.
    pub fn render(self) -> String {
        format!("{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}s", self.render())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_is_six_decimals() {
        assert_eq!(SimTime::from_micros(0).render(), "0.000000");
        assert_eq!(SimTime::from_micros(1_500_000).render(), "1.500000");
        assert_eq!(SimTime::from_micros(123).render(), "0.000123");
    }

    #[test]
    fn secs_round_trip() {
        let t = SimTime::from_secs_f64(2.5);
        assert_eq!(t.as_micros(), 2_500_000);
    }
}
