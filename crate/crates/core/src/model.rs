//! System model: battery, age process and the Poisson energy source.
//!
//! The sensor state is the pair (stored energy, age). Energy arrives one unit
//! at a time; a unit arriving at a full battery is lost. Every update costs
//! exactly one unit and resets the age to zero instantly.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};

/// Physical configuration of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    /// Battery size in energy units.
    pub battery_capacity: u32,
    /// Energy units per unit time.
    #[serde(default = "default_rate")]
    pub arrival_rate: f64,
    /// Simulated time span.
    pub horizon: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_rate() -> f64 {
    1.0
}

impl SystemParams {
    pub fn new(battery_capacity: u32, arrival_rate: f64, horizon: f64, seed: u64) -> Result<Self> {
        let params = Self {
            battery_capacity,
            arrival_rate,
            horizon,
            seed,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.battery_capacity == 0 {
            return Err(AoiError::invalid("battery_capacity must be at least 1"));
        }
        if !(self.arrival_rate.is_finite() && self.arrival_rate > 0.0) {
            return Err(AoiError::invalid(format!(
                "arrival_rate must be positive and finite, got {}",
                self.arrival_rate
            )));
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(AoiError::invalid(format!(
                "horizon must be positive and finite, got {}",
                self.horizon
            )));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

/// Battery level and age at a point in time.
///
/// The age is not stored; it is always `now - last_update_time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorState {
    pub energy: u32,
    pub now: f64,
    pub last_update_time: f64,
}

impl SensorState {
    /// Empty battery, age zero, at t = 0.
    pub fn initial() -> Self {
        Self {
            energy: 0,
            now: 0.0,
            last_update_time: 0.0,
        }
    }

    pub fn with_age(energy: u32, age: f64, now: f64) -> Self {
        Self {
            energy,
            now,
            last_update_time: now - age,
        }
    }

    #[inline]
    pub fn age(&self) -> f64 {
        self.now - self.last_update_time
    }

    /// Moves the clock forward; the age grows with unit slope.
    #[inline]
    pub fn advance_to(&mut self, t: f64) {
        debug_assert!(t >= self.now, "time moved backwards: {} -> {}", self.now, t);
        self.now = t;
    }
}

/// Spends one unit and delivers a fresh update at `state.now`.
pub fn apply_update(state: SensorState) -> Result<SensorState> {
    if state.energy == 0 {
        return Err(AoiError::EnergyCausality { time: state.now });
    }
    Ok(SensorState {
        energy: state.energy - 1,
        now: state.now,
        last_update_time: state.now,
    })
}

/// Stores one harvested unit, clipping at `capacity`. The age is unaffected.
///
/// Returns the new state and whether the unit was stored (`false` on overflow).
pub fn apply_arrival(state: SensorState, capacity: u32) -> (SensorState, bool) {
    if state.energy >= capacity {
        (
            SensorState {
                energy: capacity,
                ..state
            },
            false,
        )
    } else {
        (
            SensorState {
                energy: state.energy + 1,
                ..state
            },
            true,
        )
    }
}

/// Anything that yields successive energy inter-arrival gaps.
pub trait ArrivalSource {
    fn next_interarrival(&mut self) -> f64;
}

impl<S: ArrivalSource + ?Sized> ArrivalSource for &mut S {
    fn next_interarrival(&mut self) -> f64 {
        (**self).next_interarrival()
    }
}

/// Seeded Poisson arrival process.
///
/// Gaps are drawn by inverse CDF from a ChaCha8 stream, so a `(seed, stream)`
/// pair reproduces the same arrival sequence bit for bit on every platform.
#[derive(Debug, Clone)]
pub struct ArrivalStream {
    seed: u64,
    rate: f64,
    rng: ChaCha8Rng,
}

impl ArrivalStream {
    pub fn new(seed: u64, rate: f64) -> Result<Self> {
        Self::with_stream(seed, rate, 0)
    }

    /// Independent sub-stream `stream` of the generator keyed by `seed`.
    pub fn with_stream(seed: u64, rate: f64, stream: u64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(AoiError::invalid(format!(
                "arrival rate must be positive and finite, got {rate}"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self { seed, rate, rng })
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }
}

impl ArrivalSource for ArrivalStream {
    #[inline]
    fn next_interarrival(&mut self) -> f64 {
        let u: f64 = self.rng.sample(Open01);
        -u.ln() / self.rate
    }
}

/// Replays a fixed list of gaps, then never delivers another unit.
#[derive(Debug, Clone)]
pub struct ScriptedArrivals {
    gaps: Vec<f64>,
    next: usize,
}

impl ScriptedArrivals {
    pub fn new(gaps: impl Into<Vec<f64>>) -> Self {
        Self {
            gaps: gaps.into(),
            next: 0,
        }
    }
}

impl ArrivalSource for ScriptedArrivals {
    fn next_interarrival(&mut self) -> f64 {
        match self.gaps.get(self.next) {
            Some(&g) => {
                self.next += 1;
                g
            }
            None => f64::INFINITY,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exponential_moments_at_unit_rate() {
        let mut s = ArrivalStream::new(12345, 1.0).unwrap();
        let n = 1_000_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let g = s.next_interarrival();
            assert!(g > 0.0);
            m1 += g;
            m2 += g * g;
        }
        let (m1, m2) = (m1 / n as f64, m2 / n as f64);
        assert!((0.997..=1.003).contains(&m1), "mean {m1}");
        assert!((m2 - 2.0).abs() <= 0.01, "second moment {m2}");
    }

    #[test]
    fn same_seed_same_gaps() {
        let mut a = ArrivalStream::new(99, 1.0).unwrap();
        let mut b = ArrivalStream::new(99, 1.0).unwrap();
        for _ in 0..1000 {
            assert_eq!(a.next_interarrival().to_bits(), b.next_interarrival().to_bits());
        }
        let mut c = ArrivalStream::with_stream(99, 1.0, 1).unwrap();
        let mut a = ArrivalStream::new(99, 1.0).unwrap();
        assert_ne!(a.next_interarrival(), c.next_interarrival());
    }

    #[test]
    fn rate_scales_gaps() {
        let mut a = ArrivalStream::new(3, 1.0).unwrap();
        let mut b = ArrivalStream::new(3, 2.0).unwrap();
        for _ in 0..100 {
            let (ga, gb) = (a.next_interarrival(), b.next_interarrival());
            assert!((ga - 2.0 * gb).abs() <= 1e-12 * ga);
        }
        assert!(ArrivalStream::new(0, 0.0).is_err());
        assert!(ArrivalStream::new(0, f64::NAN).is_err());
    }

    #[test]
    fn update_resets_age_and_spends_energy() {
        let s = apply_update(SensorState::with_age(2, 1.3, 5.0)).unwrap();
        assert_eq!(s.energy, 1);
        assert_eq!(s.age(), 0.0);
        assert_eq!(s.last_update_time, 5.0);

        let s = apply_update(SensorState::with_age(1, 0.72, 9.1)).unwrap();
        assert_eq!((s.energy, s.age(), s.last_update_time), (0, 0.0, 9.1));

        let err = apply_update(SensorState::with_age(0, 0.5, 3.0)).unwrap_err();
        assert!(matches!(err, AoiError::EnergyCausality { .. }));
    }

    #[test]
    fn arrival_clips_at_capacity() {
        let (s, stored) = apply_arrival(SensorState::with_age(1, 0.2, 1.0), 2);
        assert_eq!((s.energy, stored), (2, true));
        let (s, stored) = apply_arrival(s, 2);
        assert_eq!((s.energy, stored), (2, false));
        let before = SensorState::with_age(0, 0.4, 2.0);
        let (s, _) = apply_arrival(before, 1);
        assert_eq!(s.energy, 1);
        assert_eq!(s.age(), before.age());
    }

    #[test]
    fn params_validation() {
        assert!(SystemParams::new(0, 1.0, 10.0, 0).is_err());
        assert!(SystemParams::new(2, -1.0, 10.0, 0).is_err());
        assert!(SystemParams::new(2, 1.0, 0.0, 0).is_err());
        assert!(SystemParams::new(2, 1.0, 10.0, 0).is_ok());
        let p: SystemParams = serde_json::from_str(r#"{"battery_capacity":2,"horizon":5}"#).unwrap();
        assert_eq!(p.arrival_rate, 1.0);
        assert!(serde_json::from_str::<SystemParams>(r#"{"battery_capacity":2,"horizon":5,"x":1}"#).is_err());
    }

    proptest! {
        #[test]
        fn energy_stays_in_range(cap in 1u32..6, ops in proptest::collection::vec(any::<bool>(), 0..200)) {
            let mut s = SensorState::initial();
            let mut t = 0.0;
            for is_arrival in ops {
                t += 0.1;
                s.advance_to(t);
                if is_arrival {
                    s = apply_arrival(s, cap).0;
                } else if s.energy > 0 {
                    s = apply_update(s).unwrap();
                    prop_assert_eq!(s.age(), 0.0);
                }
                prop_assert!(s.energy <= cap);
                prop_assert!(s.age() >= 0.0);
            }
        }
    }
}
