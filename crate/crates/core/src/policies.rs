//! Update policies.
//!
//! A policy is re-queried after every arrival and every update (or silent
//! slot), and answers with the next instant it wants to transmit. Threshold
//! policies transmit once the age reaches a level that depends on the stored
//! energy; slot policies transmit on a self-clocked grid and stay silent when
//! the battery is empty at a slot.

use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::model::SensorState;

/// Serializable description of a policy.
///
/// JSON form: `{"type":"threshold_b2","lambda":0.72,"x1":1.48}`,
/// `{"type":"single_threshold","threshold":0.9012}`,
/// `{"type":"general_threshold","thresholds":[1.48,0.72]}`,
/// `{"type":"uniform","period":1.0}`, `{"type":"energy_aware","z":1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Two-unit battery: wait for age `x1` with one unit, `lambda` with two.
    ThresholdB2 { lambda: f64, x1: f64 },
    #[serde(rename = "single_threshold")]
    SingleThresholdB1 { threshold: f64 },
    /// `thresholds[k - 1]` applies when `k` units are stored.
    GeneralThreshold { thresholds: Vec<f64> },
    Uniform { period: f64 },
    /// Period `1/(1-β)`, `1` or `1/(1+β)` depending on whether the battery is
    /// below, at, or above half capacity, with `β = z ln(B) / B`.
    #[serde(rename = "energy_aware")]
    EnergyAwareAdaptive {
        z: u32,
        /// Taken from the system when omitted.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        battery_capacity: Option<u32>,
        #[serde(default)]
        clock: EnergyAwareClock,
    },
}

/// How the energy-aware policy anchors its next slot.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EnergyAwareClock {
    /// Each slot, delivered or silent, schedules the next one from the energy
    /// left right after it. Arrivals never move a pending slot.
    #[default]
    SlotGrid,
    /// The period runs from the last delivered update (or silent slot) and is
    /// re-evaluated from the current energy on every arrival.
    RestartOnDelivery,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyDecision {
    /// Transmit at this time; energy is guaranteed to be available.
    UpdateAt(f64),
    /// Nothing to do until energy arrives.
    WaitForEnergy,
    /// Transmit at this time if the battery is non-empty, otherwise stay silent.
    Attempt(f64),
}

impl PolicyDecision {
    pub fn time(&self) -> Option<f64> {
        match *self {
            PolicyDecision::UpdateAt(t) | PolicyDecision::Attempt(t) => Some(t),
            PolicyDecision::WaitForEnergy => None,
        }
    }
}

fn threshold_decision(state: &SensorState, threshold: f64) -> PolicyDecision {
    if state.energy == 0 {
        PolicyDecision::WaitForEnergy
    } else {
        PolicyDecision::UpdateAt(state.now + (threshold - state.age()).max(0.0))
    }
}

fn require_capacity(capacity: u32, expected: u32, what: &str) -> Result<()> {
    if capacity != expected {
        return Err(AoiError::IncompatiblePolicy(format!(
            "{what} needs battery capacity {expected}, system has {capacity}"
        )));
    }
    Ok(())
}

pub fn decide_threshold_b2(state: &SensorState, capacity: u32, lambda: f64, x1: f64) -> Result<PolicyDecision> {
    require_capacity(capacity, 2, "threshold_b2")?;
    Ok(match state.energy {
        0 => PolicyDecision::WaitForEnergy,
        1 => threshold_decision(state, x1),
        _ => threshold_decision(state, lambda),
    })
}

pub fn decide_single_threshold(state: &SensorState, capacity: u32, threshold: f64) -> Result<PolicyDecision> {
    require_capacity(capacity, 1, "single_threshold")?;
    Ok(threshold_decision(state, threshold))
}

pub fn decide_general_threshold(state: &SensorState, capacity: u32, thresholds: &[f64]) -> Result<PolicyDecision> {
    if thresholds.len() != capacity as usize {
        return Err(AoiError::IncompatiblePolicy(format!(
            "general_threshold has {} thresholds for battery capacity {capacity}",
            thresholds.len()
        )));
    }
    if state.energy == 0 {
        return Ok(PolicyDecision::WaitForEnergy);
    }
    let k = (state.energy as usize).min(thresholds.len());
    Ok(threshold_decision(state, thresholds[k - 1]))
}

/// `β = z ln(B) / B`; must stay below one.
pub fn energy_aware_beta(z: u32, capacity: u32) -> Result<f64> {
    if capacity == 0 {
        return Err(AoiError::invalid("battery capacity must be at least 1"));
    }
    let b = capacity as f64;
    let beta = z as f64 * b.ln() / b;
    if beta >= 1.0 {
        return Err(AoiError::IncompatiblePolicy(format!(
            "energy_aware beta = {z}*ln({capacity})/{capacity} = {beta:.6} must be below 1"
        )));
    }
    Ok(beta)
}

/// Slot spacing chosen when `energy` units are stored.
pub fn energy_aware_period(energy: u32, z: u32, capacity: u32) -> Result<f64> {
    let beta = energy_aware_beta(z, capacity)?;
    let twice = 2 * energy as u64;
    Ok(match twice.cmp(&(capacity as u64)) {
        std::cmp::Ordering::Less => 1.0 / (1.0 - beta),
        std::cmp::Ordering::Equal => 1.0,
        std::cmp::Ordering::Greater => 1.0 / (1.0 + beta),
    })
}

/// Next slot measured from `anchor`, the previous slot or delivery instant.
pub fn decide_energy_aware(state: &SensorState, z: u32, capacity: u32, anchor: f64) -> Result<PolicyDecision> {
    let period = energy_aware_period(state.energy, z, capacity)?;
    Ok(PolicyDecision::Attempt((anchor + period).max(state.now)))
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(AoiError::invalid(format!("{name} must be positive, got {v}")))
    }
}

impl PolicySpec {
    pub fn threshold_b2(lambda: f64, x1: f64) -> Self {
        PolicySpec::ThresholdB2 { lambda, x1 }
    }

    pub fn energy_aware(z: u32) -> Self {
        PolicySpec::EnergyAwareAdaptive {
            z,
            battery_capacity: None,
            clock: EnergyAwareClock::SlotGrid,
        }
    }

    /// Checks parameter ranges and compatibility with a battery of `capacity`.
    pub fn validate(&self, capacity: u32) -> Result<()> {
        match self {
            PolicySpec::ThresholdB2 { lambda, x1 } => {
                positive("lambda", *lambda)?;
                positive("x1", *x1)?;
                if x1 < lambda {
                    return Err(AoiError::invalid(format!(
                        "threshold_b2 needs x1 >= lambda, got x1 = {x1}, lambda = {lambda}"
                    )));
                }
                require_capacity(capacity, 2, "threshold_b2")
            }
            PolicySpec::SingleThresholdB1 { threshold } => {
                positive("threshold", *threshold)?;
                require_capacity(capacity, 1, "single_threshold")
            }
            PolicySpec::GeneralThreshold { thresholds } => {
                if let Some(bad) = thresholds.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
                    return Err(AoiError::invalid(format!(
                        "thresholds must be finite and nonnegative, got {bad}"
                    )));
                }
                if thresholds.len() != capacity as usize {
                    return Err(AoiError::IncompatiblePolicy(format!(
                        "general_threshold has {} thresholds for battery capacity {capacity}",
                        thresholds.len()
                    )));
                }
                if thresholds.windows(2).any(|w| w[1] > w[0]) {
                    log::warn!("general_threshold levels {thresholds:?} increase with stored energy");
                }
                Ok(())
            }
            PolicySpec::Uniform { period } => positive("period", *period),
            PolicySpec::EnergyAwareAdaptive {
                z,
                battery_capacity,
                ..
            } => {
                if let Some(b) = battery_capacity {
                    require_capacity(capacity, *b, "energy_aware")?;
                }
                energy_aware_beta(*z, capacity).map(|_| ())
            }
        }
    }

    /// Threshold policies regenerate at every visit to the empty-battery,
    /// just-updated state.
    pub fn is_renewal(&self) -> bool {
        matches!(
            self,
            PolicySpec::ThresholdB2 { .. } | PolicySpec::SingleThresholdB1 { .. } | PolicySpec::GeneralThreshold { .. }
        )
    }

    pub fn label(&self) -> String {
        match self {
            PolicySpec::ThresholdB2 { lambda, x1 } => format!("threshold_b2(lambda={lambda:.6},x1={x1:.6})"),
            PolicySpec::SingleThresholdB1 { threshold } => format!("single_threshold({threshold})"),
            PolicySpec::GeneralThreshold { thresholds } => format!("general_threshold({thresholds:?})"),
            PolicySpec::Uniform { period } => format!("uniform({period})"),
            PolicySpec::EnergyAwareAdaptive { z, clock, .. } => match clock {
                EnergyAwareClock::SlotGrid => format!("energy_aware(z={z})"),
                EnergyAwareClock::RestartOnDelivery => format!("energy_aware(z={z},restart_on_delivery)"),
            },
        }
    }

    pub fn runner(&self, capacity: u32) -> Result<PolicyRunner> {
        self.validate(capacity)?;
        Ok(match self {
            PolicySpec::Uniform { period } => PolicyRunner::Slots(SlotState {
                periods: SlotPeriods::Fixed(*period),
                clock: EnergyAwareClock::SlotGrid,
                anchor: 0.0,
                next_slot: *period,
            }),
            PolicySpec::EnergyAwareAdaptive { z, clock, .. } => PolicyRunner::Slots(SlotState {
                periods: SlotPeriods::EnergyAware { z: *z, capacity },
                clock: *clock,
                anchor: 0.0,
                next_slot: 0.0,
            }),
            other => PolicyRunner::Threshold {
                spec: other.clone(),
                capacity,
            },
        })
    }
}

/// Event that triggers a policy query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyEvent {
    Start,
    Arrival,
    Update,
    SilentSlot,
}

#[derive(Debug, Clone)]
enum SlotPeriods {
    Fixed(f64),
    EnergyAware { z: u32, capacity: u32 },
}

#[derive(Debug, Clone)]
pub struct SlotState {
    periods: SlotPeriods,
    clock: EnergyAwareClock,
    anchor: f64,
    next_slot: f64,
}

/// Per-run policy state driven by the simulator.
#[derive(Debug, Clone)]
pub enum PolicyRunner {
    Threshold { spec: PolicySpec, capacity: u32 },
    Slots(SlotState),
}

impl PolicyRunner {
    pub fn decide(&mut self, state: &SensorState, event: PolicyEvent) -> Result<PolicyDecision> {
        match self {
            PolicyRunner::Threshold { spec, capacity } => match spec {
                PolicySpec::ThresholdB2 { lambda, x1 } => decide_threshold_b2(state, *capacity, *lambda, *x1),
                PolicySpec::SingleThresholdB1 { threshold } => decide_single_threshold(state, *capacity, *threshold),
                PolicySpec::GeneralThreshold { thresholds } => decide_general_threshold(state, *capacity, thresholds),
                _ => unreachable!("slot policies use PolicyRunner::Slots"),
            },
            PolicyRunner::Slots(slots) => slots.decide(state, event),
        }
    }
}

impl SlotState {
    fn attempt_from(&self, state: &SensorState) -> Result<PolicyDecision> {
        match self.periods {
            SlotPeriods::Fixed(period) => Ok(PolicyDecision::Attempt((self.anchor + period).max(state.now))),
            SlotPeriods::EnergyAware { z, capacity } => decide_energy_aware(state, z, capacity, self.anchor),
        }
    }

    fn decide(&mut self, state: &SensorState, event: PolicyEvent) -> Result<PolicyDecision> {
        match (self.clock, event) {
            (EnergyAwareClock::SlotGrid, PolicyEvent::Arrival) => Ok(PolicyDecision::Attempt(self.next_slot)),
            (EnergyAwareClock::SlotGrid, _) => {
                self.anchor = state.now;
                let d = self.attempt_from(state)?;
                self.next_slot = d.time().expect("slot decisions carry a time");
                Ok(d)
            }
            (EnergyAwareClock::RestartOnDelivery, PolicyEvent::Arrival) => self.attempt_from(state),
            (EnergyAwareClock::RestartOnDelivery, _) => {
                self.anchor = state.now;
                self.attempt_from(state)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn at(d: PolicyDecision) -> f64 {
        d.time().expect("scheduled")
    }

    #[test]
    fn threshold_b2_examples() {
        let s = SensorState::with_age(1, 0.0, 3.0);
        assert_abs_diff_eq!(at(decide_threshold_b2(&s, 2, 0.72, 1.48).unwrap()) - 3.0, 1.48, epsilon = 1e-12);
        let s = SensorState::with_age(2, 0.9, 3.0);
        assert_eq!(decide_threshold_b2(&s, 2, 0.72, 1.48).unwrap(), PolicyDecision::UpdateAt(3.0));
        let s = SensorState::with_age(2, 0.3, 3.0);
        assert_abs_diff_eq!(at(decide_threshold_b2(&s, 2, 0.72, 1.48).unwrap()) - 3.0, 0.42, epsilon = 1e-12);
        let s = SensorState::with_age(0, 5.0, 3.0);
        assert_eq!(decide_threshold_b2(&s, 2, 0.72, 1.48).unwrap(), PolicyDecision::WaitForEnergy);
        assert!(matches!(
            decide_threshold_b2(&s, 3, 0.72, 1.48),
            Err(AoiError::IncompatiblePolicy(_))
        ));
    }

    #[test]
    fn single_threshold_examples() {
        let s = SensorState::with_age(1, 1.2, 2.0);
        assert_eq!(decide_single_threshold(&s, 1, 0.9012).unwrap(), PolicyDecision::UpdateAt(2.0));
        let s = SensorState::with_age(1, 0.0, 2.0);
        assert_abs_diff_eq!(at(decide_single_threshold(&s, 1, 0.9012).unwrap()), 2.9012, epsilon = 1e-12);
        let s = SensorState::with_age(0, 0.3, 2.0);
        assert_eq!(decide_single_threshold(&s, 1, 0.9012).unwrap(), PolicyDecision::WaitForEnergy);
        assert!(decide_single_threshold(&s, 2, 0.9012).is_err());
    }

    #[test]
    fn general_threshold_examples() {
        let s = SensorState::with_age(2, 0.0, 1.0);
        assert_abs_diff_eq!(at(decide_general_threshold(&s, 2, &[1.48, 0.72]).unwrap()), 1.72, epsilon = 1e-12);
        let s = SensorState::with_age(2, 2.0, 4.0);
        assert_eq!(decide_general_threshold(&s, 3, &[1.0, 1.0, 1.0]).unwrap(), PolicyDecision::UpdateAt(4.0));
        assert!(decide_general_threshold(&s, 2, &[0.5]).is_err());
        assert!(PolicySpec::GeneralThreshold { thresholds: vec![0.5] }.validate(2).is_err());
        // increasing levels only warn
        assert!(PolicySpec::GeneralThreshold { thresholds: vec![0.5, 0.9] }.validate(2).is_ok());
    }

    #[test]
    fn energy_aware_periods() {
        for b in [1, 2, 5, 100] {
            for e in 0..=b {
                assert_eq!(energy_aware_period(e, 0, b).unwrap(), 1.0);
            }
        }
        let beta = 2f64.ln() / 2.0;
        assert_abs_diff_eq!(energy_aware_beta(1, 2).unwrap(), beta, epsilon = 1e-15);
        assert_abs_diff_eq!(energy_aware_period(0, 1, 2).unwrap(), 1.0 / (1.0 - beta), epsilon = 1e-12);
        assert_abs_diff_eq!(energy_aware_period(0, 1, 2).unwrap(), 1.530394, epsilon = 1e-6);
        assert_abs_diff_eq!(energy_aware_period(2, 2, 2).unwrap(), 0.5906, epsilon = 1e-4);
        assert_eq!(energy_aware_period(1, 2, 2).unwrap(), 1.0);
        assert!(matches!(energy_aware_beta(3, 2), Err(AoiError::IncompatiblePolicy(_))));
        assert!(PolicySpec::energy_aware(3).validate(2).is_err());
    }

    #[test]
    fn energy_aware_anchor() {
        let s = SensorState::with_age(0, 0.0, 10.0);
        let d = decide_energy_aware(&s, 1, 2, 10.0).unwrap();
        assert_abs_diff_eq!(at(d), 10.0 + 1.0 / (1.0 - 2f64.ln() / 2.0), epsilon = 1e-12);
        // an anchor far in the past never schedules before now
        let d = decide_energy_aware(&s, 0, 2, 0.0).unwrap();
        assert_eq!(d, PolicyDecision::Attempt(10.0));
    }

    #[test]
    fn slot_grid_ignores_arrivals() {
        let spec = PolicySpec::energy_aware(1);
        let mut r = spec.runner(2).unwrap();
        let s0 = SensorState::initial();
        let first = at(r.decide(&s0, PolicyEvent::Start).unwrap());
        let s1 = SensorState::with_age(2, 0.2, 0.2);
        assert_eq!(at(r.decide(&s1, PolicyEvent::Arrival).unwrap()), first);

        let spec = PolicySpec::EnergyAwareAdaptive {
            z: 1,
            battery_capacity: None,
            clock: EnergyAwareClock::RestartOnDelivery,
        };
        let mut r = spec.runner(2).unwrap();
        r.decide(&s0, PolicyEvent::Start).unwrap();
        let moved = at(r.decide(&s1, PolicyEvent::Arrival).unwrap());
        assert_abs_diff_eq!(moved, 1.0 / (1.0 + 2f64.ln() / 2.0), epsilon = 1e-12);
    }

    #[test]
    fn json_shapes() {
        let p: PolicySpec = serde_json::from_str(r#"{"type":"threshold_b2","lambda":0.72,"x1":1.48}"#).unwrap();
        assert_eq!(p, PolicySpec::threshold_b2(0.72, 1.48));
        assert_eq!(serde_json::to_string(&p).unwrap(), r#"{"type":"threshold_b2","lambda":0.72,"x1":1.48}"#);
        let p: PolicySpec = serde_json::from_str(r#"{"type":"single_threshold","threshold":0.9012}"#).unwrap();
        assert_eq!(p, PolicySpec::SingleThresholdB1 { threshold: 0.9012 });
        let p: PolicySpec = serde_json::from_str(r#"{"type":"energy_aware","z":3}"#).unwrap();
        assert_eq!(p, PolicySpec::energy_aware(3));
        let p: PolicySpec =
            serde_json::from_str(r#"{"type":"energy_aware","z":1,"clock":"restart_on_delivery","battery_capacity":2}"#)
                .unwrap();
        assert!(p.validate(2).is_ok());
        assert!(p.validate(4).is_err());
        assert!(serde_json::from_str::<PolicySpec>(r#"{"type":"uniform","period":1,"extra":2}"#).is_err());
        assert!(serde_json::from_str::<PolicySpec>(r#"{"type":"nope"}"#).is_err());
    }

    #[test]
    fn b2_validation() {
        assert!(PolicySpec::threshold_b2(0.72, 1.48).validate(2).is_ok());
        assert!(PolicySpec::threshold_b2(1.5, 1.0).validate(2).is_err());
        assert!(PolicySpec::threshold_b2(0.0, 1.0).validate(2).is_err());
        assert!(matches!(
            PolicySpec::threshold_b2(0.72, 1.48).validate(1),
            Err(AoiError::IncompatiblePolicy(_))
        ));
        assert!(PolicySpec::Uniform { period: 0.0 }.validate(3).is_err());
    }
}
