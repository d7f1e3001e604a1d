//! Clock-time returns built by compounding discretized Gaussian trade-time
//! returns with a duration model: tick discretization, millisecond rounding,
//! window aggregation, counting distributions, and support clamping.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::durations::{DurationModelParams, DurationSeries, DurationSimulator, SeriesOrigin};
use crate::error::{Error, Result};
use crate::inference::GaussianParams;
use crate::seed::{rng_from, sub_seed};
use crate::special::ln_gamma;
use crate::stats::DiscretePmf;

pub const DEFAULT_TICK_SIZE: f64 = 0.25;

/// Sorted distinct discrete return values admissible for a given window size.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SupportSet {
    pub values: Vec<f64>,
    pub tick_size: f64,
}

impl SupportSet {
    pub fn new(mut values: Vec<f64>, tick_size: f64) -> Result<Self> {
        if !(tick_size > 0.0) {
            return Err(Error::ParamDomain("tick_size must be positive".into()));
        }
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        values.dedup();
        for &v in &values {
            let k = v / tick_size;
            if (k - k.round()).abs() > 1e-9 {
                return Err(Error::Data(format!(
                    "support value {v} is not a multiple of tick size {tick_size}"
                )));
            }
        }
        if !values.iter().any(|&v| v == 0.0) {
            return Err(Error::Data("support must contain 0".into()));
        }
        Ok(Self { values, tick_size })
    }

    /// Support observed in a return sample (plus 0).
    pub fn from_returns(returns: &[f64], tick_size: f64) -> Result<Self> {
        let mut values: Vec<f64> = returns.to_vec();
        values.push(0.0);
        Self::new(values, tick_size)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.values
            .binary_search_by(|v| v.partial_cmp(&x).unwrap())
            .is_ok()
    }
}

/// Count and fraction of window returns clamped to zero.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdjustmentReport {
    pub adjusted: usize,
    pub total: usize,
    pub fraction: f64,
}

/// Paired durations and tick returns plus the derived clock-time window
/// returns for a given window length `tau`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompoundSimulation {
    pub tau: f64,
    pub durations: DurationSeries,
    pub tick_returns: Vec<f64>,
    pub window_returns: Vec<f64>,
    pub counts: Vec<u32>,
    pub adjustments: AdjustmentReport,
}

/// Rounds to the nearest multiple of `tick_size`, half away from zero.
pub fn round_to_tick(x: f64, tick_size: f64) -> f64 {
    (x / tick_size).round() * tick_size
}

/// Draws `n` i.i.d. Gaussian trade-time returns and discretizes each to the
/// nearest tick increment.
pub fn simulate_tick_returns(
    g: &GaussianParams,
    n: usize,
    seed: u64,
    tick_size: f64,
) -> Result<Vec<f64>> {
    if !(tick_size > 0.0) {
        return Err(Error::ParamDomain("tick_size must be positive".into()));
    }
    let mut rng = rng_from(seed);
    Ok((0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            round_to_tick(g.mu + g.sigma * z, tick_size)
        })
        .collect())
}

fn discretize_one(d: f64) -> f64 {
    let r = d.round();
    if r < 1.0 {
        1.0
    } else {
        r
    }
}

/// Rounds durations to the nearest millisecond; sub-millisecond values round
/// upward to 1 ms so zero durations never occur.
pub fn discretize_durations(durations: &DurationSeries) -> DurationSeries {
    DurationSeries {
        values: durations.values.iter().map(|&d| discretize_one(d)).collect(),
        origin: durations.origin.clone(),
    }
}

/// Aggregates tick returns into consecutive non-overlapping windows of length
/// `tau` anchored at time 0. A trade arriving exactly at a window boundary
/// belongs to the later window. Only complete windows are emitted.
pub fn compound_returns(
    durations: &DurationSeries,
    tick_returns: &[f64],
    tau: f64,
) -> Result<CompoundSimulation> {
    if durations.len() != tick_returns.len() {
        return Err(Error::Data(format!(
            "durations ({}) and tick returns ({}) length mismatch",
            durations.len(),
            tick_returns.len()
        )));
    }
    if !(tau >= 1.0) {
        return Err(Error::ParamDomain("tau must be >= 1 ms".into()));
    }
    let total: f64 = durations.values.iter().sum();
    let n_windows = (total / tau).floor() as usize;
    if n_windows == 0 {
        return Err(Error::Data("no complete window fits the series".into()));
    }
    let mut window_returns = vec![0.0; n_windows];
    let mut counts = vec![0u32; n_windows];
    let mut t = 0.0;
    for (&d, &r) in durations.values.iter().zip(tick_returns) {
        t += d;
        let j = (t / tau).floor() as usize;
        if j < n_windows {
            window_returns[j] += r;
            counts[j] += 1;
        }
    }
    Ok(CompoundSimulation {
        tau,
        durations: durations.clone(),
        tick_returns: tick_returns.to_vec(),
        window_returns,
        counts,
        adjustments: AdjustmentReport::default(),
    })
}

/// Empirical pmf of trades per window over consecutive complete windows.
pub fn counting_distribution(durations: &DurationSeries, tau: f64) -> Result<DiscretePmf> {
    let zeros = vec![0.0; durations.len()];
    let sim = compound_returns(durations, &zeros, tau)?;
    let counts: Vec<f64> = sim.counts.iter().map(|&c| c as f64).collect();
    DiscretePmf::from_sample(&counts)
}

/// Poisson pmf (gamma*tau)^k exp(-gamma*tau)/k!, computed in log space.
pub fn poisson_count_pmf(gamma: f64, tau: f64, k: i64) -> Result<f64> {
    if k < 0 {
        return Err(Error::ParamDomain("k must be nonnegative".into()));
    }
    if !(gamma > 0.0) || !(tau > 0.0) {
        return Err(Error::ParamDomain("gamma and tau must be positive".into()));
    }
    let rate = gamma * tau;
    let kf = k as f64;
    Ok((kf * rate.ln() - rate - ln_gamma(kf + 1.0)).exp())
}

/// Replaces window returns outside the support with zero; reports counts.
pub fn clamp_to_support(window_returns: &[f64], support: &SupportSet) -> (Vec<f64>, AdjustmentReport) {
    let mut adjusted = 0usize;
    let clamped: Vec<f64> = window_returns
        .iter()
        .map(|&r| {
            if support.contains(r) {
                r
            } else {
                adjusted += 1;
                0.0
            }
        })
        .collect();
    let total = window_returns.len();
    let fraction = if total == 0 {
        0.0
    } else {
        adjusted as f64 / total as f64
    };
    (
        clamped,
        AdjustmentReport {
            adjusted,
            total,
            fraction,
        },
    )
}

/// End-to-end clock-time return simulation: simulate durations until
/// `n_windows` complete windows exist, discretize them to milliseconds, pair
/// each trade with a discretized Gaussian tick return, aggregate per window,
/// and optionally clamp to a support set.
pub fn simulate_clock_returns(
    model: &DurationModelParams,
    g: &GaussianParams,
    tau: f64,
    n_windows: usize,
    seed: u64,
    support: Option<&SupportSet>,
    tick_size: f64,
) -> Result<CompoundSimulation> {
    if n_windows == 0 {
        return Err(Error::EmptyRequest("n_windows must be >= 1".into()));
    }
    if !(tau >= 1.0) {
        return Err(Error::ParamDomain("tau must be >= 1 ms".into()));
    }
    if !(tick_size > 0.0) {
        return Err(Error::ParamDomain("tick_size must be positive".into()));
    }
    let mut dur_sim = DurationSimulator::new(model, sub_seed(seed, 0));
    let mut tick_rng = rng_from(sub_seed(seed, 1));
    let horizon = n_windows as f64 * tau;

    let mut durations = Vec::new();
    let mut tick_returns = Vec::new();
    let mut window_returns = vec![0.0; n_windows];
    let mut counts = vec![0u32; n_windows];
    let mut t = 0.0;
    while t < horizon {
        let d = discretize_one(dur_sim.next_duration());
        let z: f64 = tick_rng.sample(StandardNormal);
        let r = round_to_tick(g.mu + g.sigma * z, tick_size);
        t += d;
        durations.push(d);
        tick_returns.push(r);
        let j = (t / tau).floor() as usize;
        if j < n_windows {
            window_returns[j] += r;
            counts[j] += 1;
        }
    }

    let mut adjustments = AdjustmentReport {
        adjusted: 0,
        total: n_windows,
        fraction: 0.0,
    };
    if let Some(s) = support {
        let (clamped, report) = clamp_to_support(&window_returns, s);
        window_returns = clamped;
        adjustments = report;
    }
    Ok(CompoundSimulation {
        tau,
        durations: DurationSeries {
            values: durations,
            origin: SeriesOrigin::Simulated {
                model: model.tag().to_string(),
                seed,
            },
        },
        tick_returns,
        window_returns,
        counts,
        adjustments,
    })
}
