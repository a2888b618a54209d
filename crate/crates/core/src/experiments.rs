//! Multi-run experiments: policy comparison over common random numbers and
//! parameter sweeps.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::analytic::{self, ThresholdSolution};
use crate::engine::SimOptions;
use crate::error::{AoiError, Result};
use crate::model::SystemParams;
use crate::policies::{EnergyAwareClock, PolicySpec};
use crate::replicate::{map_items, replicate, replication_seeds};
use crate::stats::mean_confidence_interval;

/// Solver tolerance used whenever the optimal two-unit policy is resolved.
pub const OPTIMAL_PRESET_TOLERANCE: f64 = 1e-10;

/// The optimal two-unit threshold policy, solved fresh.
pub fn optimal_b2() -> Result<(PolicySpec, ThresholdSolution)> {
    let sol = analytic::solve_lambda_star(OPTIMAL_PRESET_TOLERANCE)?;
    Ok((PolicySpec::threshold_b2(sol.lambda_star, sol.x1_star), sol))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "default_compare_horizon")]
    pub horizon: f64,
    #[serde(default = "default_compare_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default = "default_rate")]
    pub arrival_rate: f64,
    /// Also run the energy-aware baselines with the restart-on-delivery clock.
    #[serde(default = "default_true")]
    pub include_restart_clock: bool,
}

fn default_compare_horizon() -> f64 {
    1e5
}
fn default_compare_seeds() -> usize {
    50
}
fn default_rate() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            horizon: default_compare_horizon(),
            seeds: default_compare_seeds(),
            base_seed: 0,
            arrival_rate: 1.0,
            include_restart_clock: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub policy: String,
    /// `simulation` for simulated rows, `paper` for published constants.
    pub source: String,
    pub average_age: f64,
    pub ci_halfwidth: f64,
    pub n_seeds: usize,
    /// Per-seed averages in seed order; empty for reference rows.
    pub per_seed: Vec<f64>,
}

impl CompareRow {
    pub fn ci_low(&self) -> f64 {
        self.average_age - self.ci_halfwidth
    }

    pub fn ci_high(&self) -> f64 {
        self.average_age + self.ci_halfwidth
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub battery_capacity: u32,
    pub config: CompareConfig,
    pub optimal: ThresholdSolution,
    pub rows: Vec<CompareRow>,
}

impl ComparisonTable {
    pub fn row(&self, policy: &str) -> Option<&CompareRow> {
        self.rows.iter().find(|r| r.policy == policy)
    }

    pub fn simulated(&self) -> impl Iterator<Item = &CompareRow> {
        self.rows.iter().filter(|r| r.source == "simulation")
    }
}

/// Named policies compared at battery capacity 2.
pub fn comparison_policies(include_restart_clock: bool) -> Result<Vec<(String, PolicySpec)>> {
    let (optimal, _) = optimal_b2()?;
    let mut out = vec![
        ("optimal_b2".to_string(), optimal),
        ("uniform_z0".to_string(), PolicySpec::energy_aware(0)),
        ("energy_aware_z1".to_string(), PolicySpec::energy_aware(1)),
        ("energy_aware_z2".to_string(), PolicySpec::energy_aware(2)),
    ];
    if include_restart_clock {
        for z in [1, 2] {
            out.push((
                format!("energy_aware_z{z}_restart"),
                PolicySpec::EnergyAwareAdaptive {
                    z,
                    battery_capacity: None,
                    clock: EnergyAwareClock::RestartOnDelivery,
                },
            ));
        }
    }
    Ok(out)
}

/// Runs every comparison policy over the same seeds, so all policies see
/// identical arrival sequences.
pub fn compare(config: &CompareConfig) -> Result<ComparisonTable> {
    if config.seeds == 0 {
        return Err(AoiError::invalid("compare needs at least one seed"));
    }
    let params = SystemParams::new(2, config.arrival_rate, config.horizon, config.base_seed)?;
    let (_, optimal) = optimal_b2()?;
    let seeds = replication_seeds(config.base_seed, config.seeds);
    let options = SimOptions {
        keep_epochs: false,
        ..SimOptions::default()
    };

    let mut rows = Vec::new();
    for (name, policy) in comparison_policies(config.include_restart_clock)? {
        let runs = replicate(&params, &policy, &seeds, &options)?;
        let per_seed: Vec<f64> = runs.iter().map(|r| r.average_age).collect();
        let (mean, hw) = mean_confidence_interval(&per_seed);
        rows.push(CompareRow {
            policy: name,
            source: "simulation".to_string(),
            average_age: mean,
            ci_halfwidth: hw,
            n_seeds: per_seed.len(),
            per_seed,
        });
    }
    for c in analytic::reference_constants() {
        rows.push(CompareRow {
            policy: c.name.to_string(),
            source: "paper".to_string(),
            average_age: c.value,
            ci_halfwidth: 0.0,
            n_seeds: 0,
            per_seed: Vec::new(),
        });
    }

    Ok(ComparisonTable {
        battery_capacity: 2,
        config: config.clone(),
        optimal,
        rows,
    })
}

pub const COMPARE_CSV_HEADER: [&str; 6] = ["policy", "source", "average_age", "ci_halfwidth", "ci_low", "ci_high"];

pub fn write_comparison_csv<W: Write>(writer: W, table: &ComparisonTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(COMPARE_CSV_HEADER)?;
    for r in &table.rows {
        w.write_record([
            r.policy.clone(),
            r.source.clone(),
            r.average_age.to_string(),
            r.ci_halfwidth.to_string(),
            r.ci_low().to_string(),
            r.ci_high().to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// What a sweep varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SweepSpec {
    /// `x1` follows `lambda` through the optimal pairing.
    LambdaLine { lambdas: Vec<f64> },
    /// Full Cartesian grid of two-unit thresholds.
    ThresholdGrid { lambdas: Vec<f64>, x1s: Vec<f64> },
    /// Energy-aware policy with fixed `z` across battery sizes.
    Battery { capacities: Vec<u32>, z: u32 },
    /// Energy-aware policy across `z` at a fixed battery size.
    EnergyAwareZ { zs: Vec<u32>, battery: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub spec: SweepSpec,
    /// Also simulate threshold cells; battery and z sweeps always simulate.
    #[serde(default)]
    pub simulate: bool,
    #[serde(default = "default_compare_horizon")]
    pub horizon: f64,
    #[serde(default = "default_sweep_seeds")]
    pub seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn default_sweep_seeds() -> usize {
    10
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda: Option<f64>,
    pub x1: Option<f64>,
    pub battery: u32,
    pub z: Option<u32>,
    pub analytic_ratio: Option<f64>,
    pub simulated_age: Option<f64>,
    pub ci_halfwidth: Option<f64>,
}

/// `n` evenly spaced points on `[a, b]`, endpoints included.
pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n).map(|i| a + (b - a) * i as f64 / (n - 1) as f64).collect(),
    }
}

fn simulate_cell(config: &SweepConfig, battery: u32, policy: &PolicySpec) -> Result<(f64, f64)> {
    let params = SystemParams::new(battery, 1.0, config.horizon, config.base_seed)?;
    let seeds = replication_seeds(config.base_seed, config.seeds.max(1));
    let options = SimOptions {
        keep_epochs: false,
        ..SimOptions::default()
    };
    // cells already run in parallel, so replications stay on this thread
    let runs = crate::replicate::replicate_sequential(&params, policy, &seeds, &options)?;
    let ages: Vec<f64> = runs.iter().map(|r| r.average_age).collect();
    Ok(mean_confidence_interval(&ages))
}

fn threshold_cell(config: &SweepConfig, lambda: f64, x1: f64) -> Result<SweepRow> {
    let analytic = analytic::expected_epoch(lambda, x1)?.ratio;
    let mut row = SweepRow {
        lambda: Some(lambda),
        x1: Some(x1),
        battery: 2,
        analytic_ratio: Some(analytic),
        ..SweepRow::default()
    };
    let policy = PolicySpec::threshold_b2(lambda, x1);
    if config.simulate && policy.validate(2).is_ok() {
        let (age, hw) = simulate_cell(config, 2, &policy)?;
        row.simulated_age = Some(age);
        row.ci_halfwidth = Some(hw);
    }
    Ok(row)
}

fn slot_cell(config: &SweepConfig, battery: u32, z: u32) -> Result<SweepRow> {
    let (age, hw) = simulate_cell(config, battery, &PolicySpec::energy_aware(z))?;
    Ok(SweepRow {
        battery,
        z: Some(z),
        simulated_age: Some(age),
        ci_halfwidth: Some(hw),
        ..SweepRow::default()
    })
}

/// One row per grid cell, in grid order.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    enum Cell {
        Threshold(f64, f64),
        Slot(u32, u32),
    }
    let cells: Vec<Cell> = match &config.spec {
        SweepSpec::LambdaLine { lambdas } => lambdas
            .iter()
            .map(|&l| Ok(Cell::Threshold(l, analytic::x1_of_lambda(l)?)))
            .collect::<Result<_>>()?,
        SweepSpec::ThresholdGrid { lambdas, x1s } => lambdas
            .iter()
            .flat_map(|&l| x1s.iter().map(move |&x| Cell::Threshold(l, x)))
            .collect(),
        SweepSpec::Battery { capacities, z } => capacities.iter().map(|&b| Cell::Slot(b, *z)).collect(),
        SweepSpec::EnergyAwareZ { zs, battery } => zs.iter().map(|&z| Cell::Slot(*battery, z)).collect(),
    };
    if cells.is_empty() {
        return Err(AoiError::invalid("sweep grid is empty"));
    }
    map_items(&cells, |c| match *c {
        Cell::Threshold(l, x) => threshold_cell(config, l, x),
        Cell::Slot(b, z) => slot_cell(config, b, z),
    })
    .into_iter()
    .collect()
}

pub const SWEEP_CSV_HEADER: [&str; 7] = [
    "lambda",
    "x1",
    "battery",
    "z",
    "analytic_ratio",
    "simulated_age",
    "ci_halfwidth",
];

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_sweep_csv<W: Write>(writer: W, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SWEEP_CSV_HEADER)?;
    for r in rows {
        w.write_record([
            opt(r.lambda),
            opt(r.x1),
            r.battery.to_string(),
            opt(r.z),
            opt(r.analytic_ratio),
            opt(r.simulated_age),
            opt(r.ci_halfwidth),
        ])?;
    }
    w.flush()?;
    Ok(())
}
