//! Estimators and renewal diagnostics over simulated epochs.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::engine::EpochRecord;
use crate::error::{AoiError, Result};

pub const MIN_EPOCHS_FOR_ESTIMATE: usize = 30;
pub const MIN_EPOCHS_FOR_DIAGNOSTICS: usize = 1000;
pub const DEFAULT_BATCHES: usize = 100;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Confidence-interval construction for the area/length ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum CiMethod {
    /// Nonoverlapping batches of consecutive epochs, Student-t over batch ratios.
    BatchMeans { batches: usize },
    /// First-order linearization of the ratio around the sample means.
    Delta,
}

impl Default for CiMethod {
    fn default() -> Self {
        CiMethod::BatchMeans {
            batches: DEFAULT_BATCHES,
        }
    }
}

impl CiMethod {
    pub fn name(&self) -> &'static str {
        match self {
            CiMethod::BatchMeans { .. } => "batch_means",
            CiMethod::Delta => "delta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub mean_ratio: f64,
    /// 95% half-width.
    pub ci_halfwidth: f64,
    pub method: String,
    pub n_epochs: usize,
    /// Batches used, zero for the delta method.
    pub batches: usize,
}

impl RatioEstimate {
    pub fn covers(&self, value: f64) -> bool {
        (self.mean_ratio - value).abs() <= self.ci_halfwidth
    }
}

fn t_quantile_975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

fn normal_quantile_975() -> f64 {
    Normal::standard().inverse_cdf(0.975)
}

/// Mean and 95% Student-t half-width of independent observations.
pub fn mean_confidence_interval(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, t_quantile_975(n - 1) * (var / n as f64).sqrt())
}

/// Long-run average age `Σ area / Σ length` over complete epochs, with a 95%
/// interval from 100 batch means.
pub fn long_run_estimate(epochs: &[EpochRecord]) -> Result<RatioEstimate> {
    long_run_estimate_with(epochs, CiMethod::default())
}

pub fn long_run_estimate_with(epochs: &[EpochRecord], method: CiMethod) -> Result<RatioEstimate> {
    let n = epochs.len();
    if n < MIN_EPOCHS_FOR_ESTIMATE {
        return Err(AoiError::TooFewEpochs {
            needed: MIN_EPOCHS_FOR_ESTIMATE,
            got: n,
        });
    }
    let area: CompensatedSum = epochs.iter().map(|e| e.area).collect();
    let length: CompensatedSum = epochs.iter().map(|e| e.length).collect();
    let ratio = area.value() / length.value();

    let (ci_halfwidth, batches) = match method {
        CiMethod::BatchMeans { batches } => {
            if batches < 2 {
                return Err(AoiError::invalid("batch means needs at least 2 batches"));
            }
            let k = batches.min(n);
            let size = n / k;
            let ratios: Vec<f64> = (0..k)
                .map(|b| {
                    // the last batch absorbs the remainder
                    let end = if b + 1 == k { n } else { (b + 1) * size };
                    let chunk = &epochs[b * size..end];
                    let a: f64 = chunk.iter().map(|e| e.area).sum();
                    let l: f64 = chunk.iter().map(|e| e.length).sum();
                    a / l
                })
                .collect();
            let (_, hw) = mean_confidence_interval(&ratios);
            (hw, k)
        }
        CiMethod::Delta => {
            let mean_length = length.value() / n as f64;
            let ss: f64 = epochs.iter().map(|e| (e.area - ratio * e.length).powi(2)).sum();
            let s = (ss / (n - 1) as f64).sqrt();
            (normal_quantile_975() * s / (mean_length * (n as f64).sqrt()), 0)
        }
    };

    Ok(RatioEstimate {
        mean_ratio: ratio,
        ci_halfwidth,
        method: method.name().to_string(),
        n_epochs: n,
        batches,
    })
}

/// Pearson correlation between `x[..n-1]` and `x[1..]`; zero for a constant series.
pub fn lag1_autocorrelation(xs: &[f64]) -> f64 {
    if xs.len() < 3 {
        return 0.0;
    }
    let (a, b) = (&xs[..xs.len() - 1], &xs[1..]);
    let m = a.len() as f64;
    let ma = a.iter().sum::<f64>() / m;
    let mb = b.iter().sum::<f64>() / m;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        0.0
    } else {
        (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
    }
}

/// Two-sample Kolmogorov–Smirnov statistic `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of [`ks_two_sample`] at significance `alpha`.
pub fn ks_critical_value(n: usize, m: usize, alpha: f64) -> f64 {
    let c = (-(alpha / 2.0).ln() / 2.0).sqrt();
    let (n, m) = (n as f64, m as f64);
    c * ((n + m) / (n * m)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenewalDiagnostics {
    pub lag1_autocorr_length: f64,
    pub lag1_autocorr_area: f64,
    /// KS distance between the first and second halves of the length series.
    pub split_half_ks_statistic: f64,
    pub ks_critical_value_1pct: f64,
    pub n_epochs: usize,
}

impl RenewalDiagnostics {
    /// White-noise band `4/sqrt(N)` for the lag-1 autocorrelations.
    pub fn autocorr_bound(&self) -> f64 {
        4.0 / (self.n_epochs as f64).sqrt()
    }

    pub fn looks_renewal(&self) -> bool {
        let bound = self.autocorr_bound();
        self.lag1_autocorr_length.abs() <= bound
            && self.lag1_autocorr_area.abs() <= bound
            && self.split_half_ks_statistic < self.ks_critical_value_1pct
    }
}

pub fn renewal_diagnostics(epochs: &[EpochRecord]) -> Result<RenewalDiagnostics> {
    let n = epochs.len();
    if n < MIN_EPOCHS_FOR_DIAGNOSTICS {
        return Err(AoiError::TooFewEpochs {
            needed: MIN_EPOCHS_FOR_DIAGNOSTICS,
            got: n,
        });
    }
    let lengths: Vec<f64> = epochs.iter().map(|e| e.length).collect();
    let areas: Vec<f64> = epochs.iter().map(|e| e.area).collect();
    Ok(diagnostics_from_series(&lengths, &areas))
}

/// Resolution at which epoch lengths enter the KS comparison. Lengths are
/// differences of absolute event times and carry rounding noise of order
/// `ulp(t)`; without snapping, an atom such as "no arrival before the
/// threshold" splinters into values whose order drifts with `t`, and the
/// split-half statistic picks that drift up.
pub const KS_LENGTH_RESOLUTION: f64 = 1e-7;

fn snap(x: f64) -> f64 {
    (x / KS_LENGTH_RESOLUTION).round() * KS_LENGTH_RESOLUTION
}

pub(crate) fn diagnostics_from_series(lengths: &[f64], areas: &[f64]) -> RenewalDiagnostics {
    let snapped: Vec<f64> = lengths.iter().map(|&x| snap(x)).collect();
    let half = lengths.len() / 2;
    let (first, second) = snapped.split_at(half);
    RenewalDiagnostics {
        lag1_autocorr_length: lag1_autocorrelation(lengths),
        lag1_autocorr_area: lag1_autocorrelation(areas),
        split_half_ks_statistic: ks_two_sample(first, second),
        ks_critical_value_1pct: ks_critical_value(first.len(), second.len(), 0.01),
        n_epochs: lengths.len(),
    }
}
