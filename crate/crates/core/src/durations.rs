//! Inter-trade duration models: the constant-intensity Exponential, the
//! Markov-switching multifractal duration (MSMD) model, and the MSMD
//! truncated by an independent Exponential (TMSMD). Also houses the
//! extreme-value calibration of the truncating mean.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::golden_section;
use crate::seed::{rng_from, sub_seed};

pub const EULER_MASCHERONI: f64 = 0.577_215_664_901_532_9;

/// Exponential duration model with mean duration `nu` milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpParams {
    pub nu: f64,
}

impl ExpParams {
    pub fn new(nu: f64) -> Result<Self> {
        if !(nu > 0.0) || !nu.is_finite() {
            return Err(Error::ParamDomain(format!("nu must be positive, got {nu}")));
        }
        Ok(Self { nu })
    }

    /// Arrival intensity per millisecond, gamma = 1/nu.
    pub fn gamma(&self) -> f64 {
        1.0 / self.nu
    }
}

/// MSMD parameters: `kbar` latent frequencies, baseline intensity `lambda`,
/// highest-frequency switching probability `gamma_kbar`, frequency-spacing
/// base `b`, and low multiplier value `m0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MsmdParams {
    pub kbar: usize,
    pub lambda: f64,
    pub gamma_kbar: f64,
    pub b: f64,
    pub m0: f64,
}

impl MsmdParams {
    pub fn new(kbar: usize, lambda: f64, gamma_kbar: f64, b: f64, m0: f64) -> Result<Self> {
        if kbar < 1 {
            return Err(Error::ParamDomain("kbar must be >= 1".into()));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::ParamDomain(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        if !(gamma_kbar > 0.0 && gamma_kbar < 1.0) {
            return Err(Error::ParamDomain(format!(
                "gamma_kbar must lie in (0,1), got {gamma_kbar}"
            )));
        }
        if !(b > 1.0) || !b.is_finite() {
            return Err(Error::ParamDomain(format!("b must exceed 1, got {b}")));
        }
        if !(m0 > 0.0 && m0 <= 2.0) {
            return Err(Error::ParamDomain(format!(
                "m0 must lie in (0,2], got {m0}"
            )));
        }
        Ok(Self {
            kbar,
            lambda,
            gamma_kbar,
            b,
            m0,
        })
    }

    /// The high multiplier value paired with `m0`; E[M] = 1 by construction.
    pub fn m_high(&self) -> f64 {
        2.0 - self.m0
    }
}

/// MSMD truncated by an independent Exponential with mean `nu_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TmsmdParams {
    pub msmd: MsmdParams,
    pub nu_max: f64,
}

impl TmsmdParams {
    pub fn new(msmd: MsmdParams, nu_max: f64) -> Result<Self> {
        if !(nu_max > 0.0) || !nu_max.is_finite() {
            return Err(Error::ParamDomain(format!(
                "nu_max must be positive, got {nu_max}"
            )));
        }
        Ok(Self { msmd, nu_max })
    }
}

/// Tagged union over the three duration models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", content = "params", rename_all = "lowercase")]
pub enum DurationModelParams {
    #[serde(rename = "exp")]
    Exponential(ExpParams),
    Msmd(MsmdParams),
    Tmsmd(TmsmdParams),
}

impl DurationModelParams {
    pub fn tag(&self) -> &'static str {
        match self {
            DurationModelParams::Exponential(_) => "exp",
            DurationModelParams::Msmd(_) => "msmd",
            DurationModelParams::Tmsmd(_) => "tmsmd",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SeriesOrigin {
    Observed,
    Simulated { model: String, seed: u64 },
}

/// Positive inter-trade durations in milliseconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DurationSeries {
    pub values: Vec<f64>,
    pub origin: SeriesOrigin,
}

impl DurationSeries {
    pub fn observed(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::Data("durations must all be positive".into()));
        }
        Ok(Self {
            values,
            origin: SeriesOrigin::Observed,
        })
    }

    pub fn simulated(values: Vec<f64>, model: &str, seed: u64) -> Self {
        Self {
            values,
            origin: SeriesOrigin::Simulated {
                model: model.to_string(),
                seed,
            },
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-step latent multipliers and composite intensities of an MSMD path.
/// `states[i]` holds the kbar multipliers in force for duration i, each in
/// {m0, 2 - m0}; `intensities[i] = lambda * prod(states[i])`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPath {
    pub kbar: usize,
    pub states: Vec<Vec<f64>>,
    pub intensities: Vec<f64>,
}

/// Switching-probability ladder gamma_k = 1 - (1 - gamma_kbar)^(b^(k - kbar)),
/// k = 1..=kbar. Strictly increasing; exactly gamma_kbar at k = kbar.
pub fn gamma_ladder(params: &MsmdParams) -> Vec<f64> {
    (1..=params.kbar)
        .map(|k| {
            let expo = params.b.powi(k as i32 - params.kbar as i32);
            1.0 - (1.0 - params.gamma_kbar).powf(expo)
        })
        .collect()
}

/// Unit-mean exponential deviate via -ln(U) with U uniform on (0,1].
fn unit_exponential(rng: &mut ChaCha8Rng) -> f64 {
    let u: f64 = 1.0 - rng.gen::<f64>();
    -u.ln()
}

/// Stateful MSMD simulator; carries the latent multiplier chain so a path can
/// be extended indefinitely.
pub struct MsmdSimulator {
    params: MsmdParams,
    gammas: Vec<f64>,
    multipliers: Vec<f64>,
    rng: ChaCha8Rng,
}

impl MsmdSimulator {
    pub fn new(params: MsmdParams, seed: u64) -> Self {
        let mut rng = rng_from(seed);
        let gammas = gamma_ladder(&params);
        // Initial states from the stationary two-point distribution.
        let multipliers = (0..params.kbar)
            .map(|_| {
                if rng.gen::<bool>() {
                    params.m0
                } else {
                    params.m_high()
                }
            })
            .collect();
        Self {
            params,
            gammas,
            multipliers,
            rng,
        }
    }

    /// Advances the latent chain one step and draws the next duration.
    /// A switch redraws from {m0, 2 - m0}, possibly repeating the value.
    pub fn next_step(&mut self) -> (f64, f64) {
        for (k, m) in self.multipliers.iter_mut().enumerate() {
            if self.rng.gen::<f64>() < self.gammas[k] {
                *m = if self.rng.gen::<bool>() {
                    self.params.m0
                } else {
                    self.params.m_high()
                };
            }
        }
        let intensity = self.params.lambda * self.multipliers.iter().product::<f64>();
        let duration = unit_exponential(&mut self.rng) / intensity;
        (duration, intensity)
    }

    pub fn multipliers(&self) -> &[f64] {
        &self.multipliers
    }
}

/// TMSMD simulator: min of an MSMD stream and an independent Exponential
/// stream, each fed by its own sub-seed.
pub struct TmsmdSimulator {
    msmd: MsmdSimulator,
    nu_max: f64,
    exp_rng: ChaCha8Rng,
}

impl TmsmdSimulator {
    pub fn new(params: TmsmdParams, seed: u64) -> Self {
        Self {
            msmd: MsmdSimulator::new(params.msmd, sub_seed(seed, 0)),
            nu_max: params.nu_max,
            exp_rng: rng_from(sub_seed(seed, 1)),
        }
    }

    pub fn next_duration(&mut self) -> f64 {
        let (d_msmd, _) = self.msmd.next_step();
        let d_exp = self.nu_max * unit_exponential(&mut self.exp_rng);
        d_msmd.min(d_exp)
    }
}

/// Model-agnostic duration stream for a fixed seed.
pub enum DurationSimulator {
    Exponential { nu: f64, rng: ChaCha8Rng },
    Msmd(MsmdSimulator),
    Tmsmd(TmsmdSimulator),
}

impl DurationSimulator {
    pub fn new(model: &DurationModelParams, seed: u64) -> Self {
        match model {
            DurationModelParams::Exponential(p) => DurationSimulator::Exponential {
                nu: p.nu,
                rng: rng_from(seed),
            },
            DurationModelParams::Msmd(p) => DurationSimulator::Msmd(MsmdSimulator::new(*p, seed)),
            DurationModelParams::Tmsmd(p) => {
                DurationSimulator::Tmsmd(TmsmdSimulator::new(*p, seed))
            }
        }
    }

    pub fn next_duration(&mut self) -> f64 {
        match self {
            DurationSimulator::Exponential { nu, rng } => *nu * unit_exponential(rng),
            DurationSimulator::Msmd(sim) => sim.next_step().0,
            DurationSimulator::Tmsmd(sim) => sim.next_duration(),
        }
    }
}

/// Simulates `n` MSMD durations together with the latent path that generated
/// them. Deterministic under a fixed seed.
pub fn simulate_msmd(
    params: &MsmdParams,
    n: usize,
    seed: u64,
) -> Result<(DurationSeries, LatentPath)> {
    if n == 0 {
        return Err(Error::EmptyRequest("n must be >= 1".into()));
    }
    let mut sim = MsmdSimulator::new(*params, seed);
    let mut values = Vec::with_capacity(n);
    let mut states = Vec::with_capacity(n);
    let mut intensities = Vec::with_capacity(n);
    for _ in 0..n {
        let (d, intensity) = sim.next_step();
        values.push(d);
        states.push(sim.multipliers().to_vec());
        intensities.push(intensity);
    }
    Ok((
        DurationSeries::simulated(values, "msmd", seed),
        LatentPath {
            kbar: params.kbar,
            states,
            intensities,
        },
    ))
}

/// Exposes the latent path of `simulate_msmd` (same seed gives the same path).
pub fn intensity_path(params: &MsmdParams, n: usize, seed: u64) -> Result<LatentPath> {
    simulate_msmd(params, n, seed).map(|(_, path)| path)
}

/// Simulates `n` i.i.d. Exponential durations with mean `nu`.
pub fn simulate_exponential(params: &ExpParams, n: usize, seed: u64) -> Result<DurationSeries> {
    if n == 0 {
        return Err(Error::EmptyRequest("n must be >= 1".into()));
    }
    let mut rng = rng_from(seed);
    let values = (0..n)
        .map(|_| params.nu * unit_exponential(&mut rng))
        .collect();
    Ok(DurationSeries::simulated(values, "exp", seed))
}

/// Simulates `n` TMSMD durations: min of independent MSMD and Exponential
/// streams drawn from sub-streams of `seed`.
pub fn simulate_tmsmd(params: &TmsmdParams, n: usize, seed: u64) -> Result<DurationSeries> {
    if n == 0 {
        return Err(Error::EmptyRequest("n must be >= 1".into()));
    }
    let mut sim = TmsmdSimulator::new(*params, seed);
    let values = (0..n).map(|_| sim.next_duration()).collect();
    Ok(DurationSeries::simulated(values, "tmsmd", seed))
}

/// Harmonic number H_n; exact partial sum for n <= 10^7, asymptotic beyond.
pub fn harmonic(n: u64) -> f64 {
    if n <= 10_000_000 {
        // Summed smallest-first to limit rounding error.
        (1..=n).rev().map(|i| 1.0 / i as f64).sum()
    } else {
        let nf = n as f64;
        nf.ln() + EULER_MASCHERONI + 1.0 / (2.0 * nf)
    }
}

/// Expectation of the maximum of `n` i.i.d. Exponential(nu) draws: nu * H_n.
pub fn expected_max_exponential(nu: f64, n: u64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::ParamDomain(format!("nu must be positive, got {nu}")));
    }
    if n == 0 {
        return Err(Error::ParamDomain("n must be >= 1".into()));
    }
    Ok(nu * harmonic(n))
}

fn calibration_objective(nu: f64, d_max: f64, total_time_ms: f64) -> f64 {
    // [x]: round half away from zero.
    let n = (total_time_ms / nu).round().max(1.0) as u64;
    let diff = nu * harmonic(n) - d_max;
    diff * diff
}

/// Calibrates the truncating Exponential mean: the value of nu minimizing
/// (nu * H_[total_time/nu] - d_max)^2. Coarse log-spaced grid followed by
/// golden-section refinement.
pub fn calibrate_nu_max(d_max: f64, total_time_ms: f64) -> Result<f64> {
    if !(d_max > 0.0) {
        return Err(Error::ParamDomain(format!(
            "d_max must be positive, got {d_max}"
        )));
    }
    if !(total_time_ms > d_max) {
        return Err(Error::ParamDomain(
            "total_time_ms must exceed d_max".into(),
        ));
    }
    let lo = 1.0f64;
    let hi = total_time_ms / 10.0;
    let n_grid = 200usize;
    let log_lo = lo.ln();
    let log_hi = hi.ln();
    let grid: Vec<f64> = (0..n_grid)
        .map(|i| (log_lo + (log_hi - log_lo) * i as f64 / (n_grid - 1) as f64).exp())
        .collect();
    let mut best_idx = 0usize;
    let mut best_val = f64::INFINITY;
    for (i, &nu) in grid.iter().enumerate() {
        let v = calibration_objective(nu, d_max, total_time_ms);
        if v < best_val {
            best_val = v;
            best_idx = i;
        }
    }
    let a = grid[best_idx.saturating_sub(1)];
    let b = grid[(best_idx + 1).min(n_grid - 1)];
    let (nu, _) = golden_section(
        |nu| calibration_objective(nu, d_max, total_time_ms),
        a,
        b,
        1e-10,
        400,
    );
    Ok(nu)
}
