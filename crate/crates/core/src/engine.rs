//! Event-driven simulation of the sensor.
//!
//! Only two events are ever pending: the next energy arrival and the update
//! the policy currently wants. The policy is re-queried after each event, so a
//! new arrival can pull a scheduled update earlier. When an arrival and an
//! update fall on the same instant, the arrival is processed first.
//!
//! The area under the age curve, `r(T)`, is accumulated as the sum of squared
//! inter-update gaps over two plus the open triangle after the last update.
//! For renewal policies the run is also cut into epochs at every return to the
//! state (empty battery, age zero).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{AoiError, Result};
use crate::model::{apply_arrival, apply_update, ArrivalSource, ArrivalStream, SensorState, SystemParams};
use crate::policies::{PolicyDecision, PolicyEvent, PolicyRunner, PolicySpec};
use crate::stats::{self, CiMethod, CompensatedSum, RatioEstimate};

/// One complete renewal epoch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub length: f64,
    pub area: f64,
    pub update_count: u32,
    /// Number of updates needed to return to the renewal state; for the
    /// two-unit threshold policy this is the return-path pattern index.
    pub pattern_index: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimResult {
    /// `r(T) / T`.
    pub average_age: f64,
    pub ci_halfwidth: f64,
    /// Epoch-level estimate for renewal policies with enough epochs, otherwise
    /// batch means over equal slices of the horizon.
    pub estimate: RatioEstimate,
    pub total_area: f64,
    pub total_updates: u64,
    pub total_arrivals: u64,
    pub discarded_arrivals: u64,
    /// Slots at which a slot policy found the battery empty.
    pub silent_slots: u64,
    pub horizon_used: f64,
    /// Area and duration after the last complete epoch.
    pub tail_area: f64,
    pub tail_length: f64,
    pub epoch_count: usize,
    #[serde(skip)]
    pub epochs: Vec<EpochRecord>,
    #[serde(skip)]
    pub update_times: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub ci_method: CiMethod,
    /// Equal time slices used when no epoch estimate is available.
    pub time_batches: usize,
    pub keep_epochs: bool,
    pub record_update_times: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            ci_method: CiMethod::default(),
            time_batches: stats::DEFAULT_BATCHES,
            keep_epochs: true,
            record_update_times: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Step {
    Arrival { stored: bool },
    /// `gap` is the inter-update time that just closed.
    Update { gap: f64 },
    Silent,
}

#[derive(Debug, Clone, Copy)]
enum Pending {
    Update(f64),
    Attempt(f64),
}

struct Simulator<S> {
    capacity: u32,
    state: SensorState,
    runner: PolicyRunner,
    source: S,
    next_arrival: f64,
    pending: Option<Pending>,
}

impl<S: ArrivalSource> Simulator<S> {
    fn new(capacity: u32, policy: &PolicySpec, mut source: S) -> Result<Self> {
        let mut runner = policy.runner(capacity)?;
        let state = SensorState::initial();
        let next_arrival = source.next_interarrival();
        let first = runner.decide(&state, PolicyEvent::Start)?;
        let mut sim = Self {
            capacity,
            state,
            runner,
            source,
            next_arrival,
            pending: None,
        };
        sim.set_pending(first);
        Ok(sim)
    }

    fn set_pending(&mut self, d: PolicyDecision) {
        self.pending = match d {
            PolicyDecision::UpdateAt(t) => Some(Pending::Update(t)),
            PolicyDecision::Attempt(t) => Some(Pending::Attempt(t)),
            PolicyDecision::WaitForEnergy => None,
        };
    }

    fn pending_time(&self) -> f64 {
        match self.pending {
            Some(Pending::Update(t)) | Some(Pending::Attempt(t)) => t,
            None => f64::INFINITY,
        }
    }

    #[inline]
    fn next_event_time(&self) -> f64 {
        self.next_arrival.min(self.pending_time())
    }

    fn step(&mut self) -> Result<Step> {
        let t_update = self.pending_time();
        if self.next_arrival <= t_update {
            if !self.next_arrival.is_finite() {
                return Err(AoiError::invalid("arrival source exhausted with no update pending"));
            }
            self.state.advance_to(self.next_arrival);
            let (state, stored) = apply_arrival(self.state, self.capacity);
            self.state = state;
            self.next_arrival += self.source.next_interarrival();
            let d = self.runner.decide(&self.state, PolicyEvent::Arrival)?;
            self.set_pending(d);
            return Ok(Step::Arrival { stored });
        }

        self.state.advance_to(t_update);
        let silent = matches!(self.pending, Some(Pending::Attempt(_))) && self.state.energy == 0;
        if silent {
            let d = self.runner.decide(&self.state, PolicyEvent::SilentSlot)?;
            self.set_pending(d);
            return Ok(Step::Silent);
        }
        let gap = self.state.age();
        self.state = apply_update(self.state)?;
        let d = self.runner.decide(&self.state, PolicyEvent::Update)?;
        self.set_pending(d);
        Ok(Step::Update { gap })
    }
}

/// Per-slice integral of the age curve over equal slices of `[0, T]`.
struct TimeBatches {
    width: f64,
    sums: Vec<f64>,
}

impl TimeBatches {
    fn new(horizon: f64, count: usize) -> Self {
        let count = count.max(1);
        Self {
            width: horizon / count as f64,
            sums: vec![0.0; count],
        }
    }

    /// Adds `∫_{t0}^{t1} (age0 + s - t0) ds`.
    fn add(&mut self, t0: f64, t1: f64, age0: f64) {
        let last = self.sums.len() - 1;
        let mut a = t0;
        let mut idx = ((t0 / self.width) as usize).min(last);
        while a < t1 {
            let edge = if idx == last { t1 } else { ((idx + 1) as f64 * self.width).min(t1) };
            let (u0, u1) = (age0 + (a - t0), age0 + (edge - t0));
            self.sums[idx] += 0.5 * (u0 + u1) * (edge - a);
            a = edge;
            idx = (idx + 1).min(last);
        }
    }

    fn averages(&self) -> Vec<f64> {
        self.sums.iter().map(|s| s / self.width).collect()
    }
}

pub fn simulate(params: &SystemParams, policy: &PolicySpec) -> Result<SimResult> {
    simulate_with(params, policy, &SimOptions::default())
}

pub fn simulate_with(params: &SystemParams, policy: &PolicySpec, options: &SimOptions) -> Result<SimResult> {
    params.validate()?;
    let stream = ArrivalStream::new(params.seed, params.arrival_rate)?;
    simulate_source(params, policy, stream, options)
}

/// Runs the event loop to `params.horizon` with arrivals drawn from `source`.
pub fn simulate_source<S: ArrivalSource>(
    params: &SystemParams,
    policy: &PolicySpec,
    source: S,
    options: &SimOptions,
) -> Result<SimResult> {
    params.validate()?;
    let horizon = params.horizon;
    let renewal = policy.is_renewal();
    let mut sim = Simulator::new(params.battery_capacity, policy, source)?;

    let mut total_area = CompensatedSum::new();
    let mut batches = TimeBatches::new(horizon, options.time_batches);
    let (mut total_updates, mut total_arrivals, mut discarded, mut silent) = (0u64, 0u64, 0u64, 0u64);

    let mut epochs = Vec::new();
    let mut epoch_start = 0.0;
    let mut epoch_area = CompensatedSum::new();
    let mut epoch_updates = 0u32;
    let mut update_times = Vec::new();

    while sim.next_event_time() <= horizon {
        let (t0, age0) = (sim.state.now, sim.state.age());
        let step = sim.step()?;
        let now = sim.state.now;
        batches.add(t0, now, age0);
        match step {
            Step::Arrival { stored } => {
                total_arrivals += 1;
                if !stored {
                    discarded += 1;
                }
            }
            Step::Silent => silent += 1,
            Step::Update { gap } => {
                total_updates += 1;
                let triangle = 0.5 * gap * gap;
                total_area.add(triangle);
                if options.record_update_times {
                    update_times.push(now);
                }
                if renewal {
                    epoch_area.add(triangle);
                    epoch_updates += 1;
                    if sim.state.energy == 0 {
                        if options.keep_epochs {
                            epochs.push(EpochRecord {
                                length: now - epoch_start,
                                area: epoch_area.value(),
                                update_count: epoch_updates,
                                pattern_index: epoch_updates,
                            });
                        }
                        epoch_start = now;
                        epoch_area = CompensatedSum::new();
                        epoch_updates = 0;
                    }
                }
            }
        }
    }

    let (t0, age0) = (sim.state.now, sim.state.age());
    batches.add(t0, horizon, age0);
    let open = horizon - sim.state.last_update_time;
    let terminal = 0.5 * open * open;
    total_area.add(terminal);
    epoch_area.add(terminal);
    let total_area = total_area.value();
    let average_age = total_area / horizon;

    let estimate = if renewal && epochs.len() >= stats::MIN_EPOCHS_FOR_ESTIMATE {
        stats::long_run_estimate_with(&epochs, options.ci_method)?
    } else {
        let averages = batches.averages();
        let (_, hw) = stats::mean_confidence_interval(&averages);
        RatioEstimate {
            mean_ratio: average_age,
            ci_halfwidth: hw,
            method: "time_batch_means".to_string(),
            n_epochs: epochs.len(),
            batches: averages.len(),
        }
    };

    let (tail_area, tail_length) = if renewal {
        (epoch_area.value(), horizon - epoch_start)
    } else {
        (total_area, horizon)
    };

    Ok(SimResult {
        average_age,
        ci_halfwidth: estimate.ci_halfwidth,
        estimate,
        total_area,
        total_updates,
        total_arrivals,
        discarded_arrivals: discarded,
        silent_slots: silent,
        horizon_used: horizon,
        tail_area,
        tail_length,
        epoch_count: epochs.len(),
        epochs,
        update_times,
    })
}

/// Runs the two-unit threshold policy from the renewal state until it first
/// returns there.
pub fn simulate_single_epoch<S: ArrivalSource>(source: &mut S, lambda: f64, x1: f64) -> Result<EpochRecord> {
    let policy = PolicySpec::threshold_b2(lambda, x1);
    let mut sim = Simulator::new(2, &policy, source)?;
    let mut area = 0.0;
    let mut updates = 0u32;
    loop {
        if let Step::Update { gap } = sim.step()? {
            area += 0.5 * gap * gap;
            updates += 1;
            if sim.state.energy == 0 {
                return Ok(EpochRecord {
                    length: sim.state.now,
                    area,
                    update_count: updates,
                    pattern_index: updates,
                });
            }
        }
    }
}

pub const EPOCH_CSV_HEADER: [&str; 5] = ["epoch_index", "length", "area", "update_count", "pattern_index"];

/// Writes epochs as CSV with a fixed header; floats use shortest round-trip form.
pub fn write_epochs_csv<W: Write>(writer: W, epochs: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EPOCH_CSV_HEADER)?;
    for (i, e) in epochs.iter().enumerate() {
        w.write_record([
            (i + 1).to_string(),
            e.length.to_string(),
            e.area.to_string(),
            e.update_count.to_string(),
            e.pattern_index.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_epochs_csv_file(path: &Path, epochs: &[EpochRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_epochs_csv(std::io::BufWriter::new(file), epochs)
}
