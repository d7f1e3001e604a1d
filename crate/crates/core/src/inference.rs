//! Likelihood evaluation of the MSMD model via a discrete-state forward
//! filter, maximum-likelihood fitting with a multi-start simplex search in
//! transformed coordinates, k-bar selection, profiles, parametric bootstrap,
//! and the closed-form Exponential and Gaussian MLEs.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::durations::{
    calibrate_nu_max, gamma_ladder, simulate_exponential, simulate_msmd, DurationModelParams,
    DurationSeries, ExpParams, MsmdParams, TmsmdParams,
};
use crate::error::{Error, Result};
use crate::optim::NelderMead;
use crate::seed::sub_seed;

/// Hard cap on latent frequencies: 2^12 = 4096 enumerated states.
pub const KBAR_CAP: usize = 12;

/// Gaussian trade-time return parameters (index points).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

impl GaussianParams {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::ParamDomain(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }
}

/// Full enumeration of the 2^kbar latent multiplier states together with the
/// per-frequency 2x2 transition probabilities. Bit k of a state index selects
/// the multiplier of frequency k (0 -> m0, 1 -> 2 - m0).
#[derive(Debug, Clone)]
pub struct StateSpace {
    pub kbar: usize,
    pub intensities: Vec<f64>,
    pub log_intensities: Vec<f64>,
    /// Per-frequency probability of keeping the current value:
    /// (1 - gamma_k) + gamma_k / 2, since a switch redraws equiprobably.
    pub stay: Vec<f64>,
    /// Per-frequency probability of crossing to the other value: gamma_k / 2.
    pub cross: Vec<f64>,
}

impl StateSpace {
    pub fn n_states(&self) -> usize {
        1 << self.kbar
    }
}

pub fn build_state_space(params: &MsmdParams) -> Result<StateSpace> {
    if params.kbar > KBAR_CAP {
        return Err(Error::Resource(format!(
            "kbar {} exceeds the cap of {KBAR_CAP}",
            params.kbar
        )));
    }
    let gammas = gamma_ladder(params);
    let n = 1usize << params.kbar;
    let mut intensities = Vec::with_capacity(n);
    for s in 0..n {
        let mut prod = 1.0;
        for k in 0..params.kbar {
            prod *= if (s >> k) & 1 == 0 {
                params.m0
            } else {
                params.m_high()
            };
        }
        intensities.push(params.lambda * prod);
    }
    let log_intensities = intensities.iter().map(|l| l.ln()).collect();
    let stay = gammas.iter().map(|g| 1.0 - g / 2.0).collect();
    let cross = gammas.iter().map(|g| g / 2.0).collect();
    Ok(StateSpace {
        kbar: params.kbar,
        intensities,
        log_intensities,
        stay,
        cross,
    })
}

/// One step of the tensor-product Markov transition, applied as kbar
/// independent 2x2 butterflies (O(kbar * 2^kbar)).
fn apply_transition(space: &StateSpace, probs: &mut [f64]) {
    let n = probs.len();
    for k in 0..space.kbar {
        let bit = 1usize << k;
        let (stay, cross) = (space.stay[k], space.cross[k]);
        for s in 0..n {
            if s & bit == 0 {
                let a = probs[s];
                let b = probs[s | bit];
                probs[s] = stay * a + cross * b;
                probs[s | bit] = cross * a + stay * b;
            }
        }
    }
}

/// Log likelihood of the MSMD model via the forward filter over the
/// enumerated latent chain: uniform prior, exponential emission density
/// f(d | state) = lambda_state * exp(-lambda_state * d), per-step
/// normalization accumulated in log space.
pub fn msmd_loglik(params: &MsmdParams, durations: &DurationSeries) -> Result<f64> {
    if durations.is_empty() {
        return Err(Error::Data("empty duration series".into()));
    }
    if durations.values.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
        return Err(Error::Data("durations must all be positive".into()));
    }
    let space = build_state_space(params)?;
    let n = space.n_states();
    let mut prior = vec![1.0 / n as f64; n];
    let mut scratch = vec![0.0f64; n];
    let mut loglik = 0.0;
    for &d in &durations.values {
        let mut max_le = f64::NEG_INFINITY;
        for s in 0..n {
            let le = space.log_intensities[s] - space.intensities[s] * d;
            scratch[s] = le;
            if le > max_le {
                max_le = le;
            }
        }
        let mut norm = 0.0;
        for s in 0..n {
            let w = prior[s] * (scratch[s] - max_le).exp();
            scratch[s] = w;
            norm += w;
        }
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Data(format!(
                "filter underflow at duration {d}; non-finite emission"
            )));
        }
        loglik += norm.ln() + max_le;
        debug_assert!(
            {
                let total: f64 = scratch.iter().map(|w| w / norm).sum();
                (total - 1.0).abs() < 1e-10
            },
            "posterior does not sum to 1"
        );
        for s in 0..n {
            prior[s] = scratch[s] / norm;
        }
        apply_transition(&space, &mut prior);
    }
    Ok(loglik)
}

/// Exponential log likelihood at the MLE form: sum(ln gamma - gamma * d).
pub fn exponential_loglik(nu: f64, durations: &DurationSeries) -> f64 {
    let gamma = 1.0 / nu;
    durations
        .values
        .iter()
        .map(|&d| gamma.ln() - gamma * d)
        .sum()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceEntry {
    pub start_index: usize,
    pub objective: f64,
    pub point: Vec<f64>,
    pub evals: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitResult {
    #[serde(flatten)]
    pub model: DurationModelParams,
    pub loglik: f64,
    pub se: Option<BTreeMap<String, f64>>,
    pub converged: bool,
    pub n_obs: usize,
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub trace: Vec<TraceEntry>,
}

#[derive(Debug, Clone)]
pub struct FitOptions {
    /// Objective-spread convergence tolerance.
    pub ftol: f64,
    /// Maximum objective evaluations per start; 0 means 500 * dim.
    pub max_evals_per_start: usize,
    /// Run multi-starts in parallel.
    pub parallel: bool,
    /// Override the fixed multi-start design with explicit natural-parameter
    /// starts (lambda, gamma_kbar, b, m0).
    pub starts: Option<Vec<[f64; 4]>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            ftol: 1e-6,
            max_evals_per_start: 0,
            parallel: true,
            starts: None,
        }
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Domain-enforcing transform: (ln lambda, logit gamma_kbar, ln(b-1),
/// logit(m0/2)).
fn to_internal(lambda: f64, gamma_kbar: f64, b: f64, m0: f64) -> [f64; 4] {
    [lambda.ln(), logit(gamma_kbar), (b - 1.0).ln(), logit(m0 / 2.0)]
}

fn from_internal(x: &[f64]) -> (f64, f64, f64, f64) {
    (
        x[0].exp(),
        sigmoid(x[1]),
        1.0 + x[2].exp(),
        2.0 * sigmoid(x[3]),
    )
}

/// Fixed multi-start design in natural parameters; lambda is set per start so
/// that the implied mean duration matches the sample mean under that start's
/// m0 (E[1/M] = (1/m0 + 1/(2-m0)) / 2).
fn default_starts(kbar: usize, mean_duration: f64) -> Vec<[f64; 4]> {
    let design: [(f64, f64, f64); 8] = [
        (0.5, 2.0, 0.5),
        (0.5, 2.0, 0.1),
        (0.5, 2.0, 0.8),
        (0.6, 4.0, 0.15),
        (0.6, 4.0, 0.5),
        (0.3, 1.5, 0.3),
        (0.7, 5.0, 0.2),
        (0.4, 3.0, 0.9),
    ];
    design
        .iter()
        .map(|&(gamma, b, m0)| {
            let inv_mean = (1.0 / m0 + 1.0 / (2.0 - m0)) / 2.0;
            let lambda = inv_mean.powi(kbar as i32) / mean_duration;
            [lambda, gamma, b, m0]
        })
        .collect()
}

/// Maximum-likelihood fit of the four free MSMD parameters at a fixed kbar.
/// Multi-start Nelder-Mead in transformed coordinates; m0 is canonicalized
/// into (0, 1] afterward.
pub fn fit_msmd(durations: &DurationSeries, kbar: usize, options: &FitOptions) -> Result<FitResult> {
    if durations.is_empty() {
        return Err(Error::Data("empty duration series".into()));
    }
    if kbar < 1 || kbar > KBAR_CAP {
        return Err(Error::ParamDomain(format!(
            "kbar must lie in 1..={KBAR_CAP}"
        )));
    }
    let n_obs = durations.len();
    let mean_duration = durations.values.iter().sum::<f64>() / n_obs as f64;

    let starts = options
        .starts
        .clone()
        .unwrap_or_else(|| default_starts(kbar, mean_duration));

    let objective = |x: &[f64]| -> f64 {
        let (lambda, gamma_kbar, b, m0) = from_internal(x);
        match MsmdParams::new(kbar, lambda, gamma_kbar, b, m0) {
            Ok(p) => match msmd_loglik(&p, durations) {
                Ok(ll) => -ll,
                Err(_) => f64::INFINITY,
            },
            Err(_) => f64::INFINITY,
        }
    };

    let nm = NelderMead {
        ftol: options.ftol,
        max_evals: options.max_evals_per_start,
        initial_step: 0.5,
    };
    let run_start = |(i, start): (usize, &[f64; 4])| {
        let x0 = to_internal(start[0], start[1], start[2], start[3]);
        let r = nm.minimize(objective, &x0);
        TraceEntry {
            start_index: i,
            objective: r.fx,
            point: r.x,
            evals: r.evals,
            converged: r.converged,
        }
    };
    let trace: Vec<TraceEntry> = if options.parallel {
        starts.par_iter().enumerate().map(run_start).collect()
    } else {
        starts.iter().enumerate().map(run_start).collect()
    };

    let best = trace
        .iter()
        .min_by(|a, b| a.objective.partial_cmp(&b.objective).unwrap())
        .expect("at least one start");
    if !best.objective.is_finite() {
        return Err(Error::Optimizer {
            message: "all starts failed to produce a finite likelihood".into(),
            best_objective: best.objective,
        });
    }
    let (lambda, gamma_kbar, b, mut m0) = from_internal(&best.point);
    if m0 > 1.0 {
        m0 = 2.0 - m0; // canonical branch of the m0 <-> 2 - m0 symmetry
    }
    let params = MsmdParams::new(kbar, lambda, gamma_kbar, b, m0)?;
    let converged = trace.iter().any(|t| t.converged);
    Ok(FitResult {
        model: DurationModelParams::Msmd(params),
        loglik: -best.objective,
        se: None,
        converged,
        n_obs,
        seed: None,
        trace,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct KbarRow {
    pub kbar: usize,
    pub fit: Option<FitResult>,
    pub error: Option<String>,
}

/// Independent MSMD fit per candidate kbar; failed rows carry their error
/// without aborting the rest.
pub fn select_kbar(
    durations: &DurationSeries,
    kbar_range: &[usize],
    options: &FitOptions,
) -> Vec<KbarRow> {
    kbar_range
        .iter()
        .map(|&kbar| match fit_msmd(durations, kbar, options) {
            Ok(mut fit) => {
                fit.trace.clear();
                KbarRow {
                    kbar,
                    fit: Some(fit),
                    error: None,
                }
            }
            Err(e) => KbarRow {
                kbar,
                fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect()
}

/// Exponential MLE: nu = sample mean.
pub fn fit_exponential(durations: &DurationSeries) -> Result<FitResult> {
    if durations.is_empty() {
        return Err(Error::Data("empty duration series".into()));
    }
    let n = durations.len();
    let nu = durations.values.iter().sum::<f64>() / n as f64;
    let params = ExpParams::new(nu)?;
    Ok(FitResult {
        model: DurationModelParams::Exponential(params),
        loglik: exponential_loglik(nu, durations),
        se: None,
        converged: true,
        n_obs: n,
        seed: None,
        trace: Vec::new(),
    })
}

/// TMSMD fit: stand-alone MSMD fit plus truncation calibration from the
/// maximal observed duration and the total observed time.
pub fn fit_tmsmd(
    durations: &DurationSeries,
    kbar: usize,
    options: &FitOptions,
) -> Result<FitResult> {
    let msmd_fit = fit_msmd(durations, kbar, options)?;
    let d_max = durations.values.iter().cloned().fold(f64::MIN, f64::max);
    let total: f64 = durations.values.iter().sum();
    let nu_max = calibrate_nu_max(d_max, total)?;
    let msmd = match msmd_fit.model {
        DurationModelParams::Msmd(p) => p,
        _ => unreachable!(),
    };
    Ok(FitResult {
        model: DurationModelParams::Tmsmd(TmsmdParams::new(msmd, nu_max)?),
        ..msmd_fit
    })
}

/// Gaussian MLE: sample mean and standard deviation (divisor n).
pub fn fit_gaussian(tick_returns: &[f64]) -> Result<GaussianParams> {
    if tick_returns.len() < 2 {
        return Err(Error::Data("need at least 2 observations".into()));
    }
    let n = tick_returns.len() as f64;
    let mu = tick_returns.iter().sum::<f64>() / n;
    let var = tick_returns.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(Error::Data("constant series has zero variance".into()));
    }
    GaussianParams::new(mu, var.sqrt())
}

fn canonical_m0(m0: f64) -> f64 {
    if m0 > 1.0 {
        2.0 - m0
    } else {
        m0
    }
}

impl FitResult {
    /// Named estimates keyed by parameter, with the TMSMD nu_max omitted
    /// (it is calibrated, not estimated) and m0 in canonical (0, 1] form.
    pub fn param_map(&self) -> BTreeMap<String, f64> {
        param_map(&self.model)
    }
}

fn param_map(model: &DurationModelParams) -> BTreeMap<String, f64> {
    let mut map = BTreeMap::new();
    match model {
        DurationModelParams::Exponential(p) => {
            map.insert("nu".into(), p.nu);
        }
        DurationModelParams::Msmd(p) | DurationModelParams::Tmsmd(TmsmdParams { msmd: p, .. }) => {
            map.insert("lambda".into(), p.lambda);
            map.insert("gamma_kbar".into(), p.gamma_kbar);
            map.insert("b".into(), p.b);
            map.insert("m0".into(), canonical_m0(p.m0));
        }
    }
    map
}

/// Parametric bootstrap standard errors: simulate at the MLE, refit, and take
/// per-parameter standard deviations (m0 canonicalized before aggregation).
/// MSMD refits start from the MLE. Errors if fewer than half the refits
/// succeed or n_boot < 2.
pub fn bootstrap_se(
    fit: &FitResult,
    durations_len: usize,
    n_boot: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>> {
    if !fit.converged {
        return Err(Error::Data("fit has not converged".into()));
    }
    if n_boot < 2 {
        return Err(Error::BootstrapDegenerate(format!(
            "n_boot {n_boot} yields zero standard errors"
        )));
    }
    if durations_len == 0 {
        return Err(Error::EmptyRequest("durations_len must be >= 1".into()));
    }
    let replicate = |i: usize| -> Option<BTreeMap<String, f64>> {
        let rep_seed = sub_seed(seed, i as u64);
        match &fit.model {
            DurationModelParams::Exponential(p) => {
                let sim = simulate_exponential(p, durations_len, rep_seed).ok()?;
                let refit = fit_exponential(&sim).ok()?;
                Some(param_map(&refit.model))
            }
            DurationModelParams::Msmd(p)
            | DurationModelParams::Tmsmd(TmsmdParams { msmd: p, .. }) => {
                let (sim, _) = simulate_msmd(p, durations_len, rep_seed).ok()?;
                let options = FitOptions {
                    starts: Some(vec![[p.lambda, p.gamma_kbar, p.b, p.m0]]),
                    parallel: false,
                    ..FitOptions::default()
                };
                let refit = fit_msmd(&sim, p.kbar, &options).ok()?;
                Some(param_map(&refit.model))
            }
        }
    };
    let estimates: Vec<BTreeMap<String, f64>> = (0..n_boot)
        .into_par_iter()
        .filter_map(replicate)
        .collect();
    if estimates.len() * 2 < n_boot {
        return Err(Error::BootstrapDegenerate(format!(
            "only {}/{} refits succeeded",
            estimates.len(),
            n_boot
        )));
    }
    let keys: Vec<String> = estimates[0].keys().cloned().collect();
    let mut se = BTreeMap::new();
    let m = estimates.len() as f64;
    for key in keys {
        let vals: Vec<f64> = estimates.iter().map(|e| e[&key]).collect();
        let mean = vals.iter().sum::<f64>() / m;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
        se.insert(key, var.sqrt());
    }
    Ok(se)
}

#[derive(Debug, Clone, Serialize)]
pub struct ProfilePoint {
    pub value: f64,
    /// None marks a grid point outside the parameter domain.
    pub loglik: Option<f64>,
}

/// Log-likelihood profile: one parameter varies over `grid`, the others stay
/// at the fitted values.
pub fn profile_loglik(
    fit: &FitResult,
    param_name: &str,
    grid: &[f64],
    durations: &DurationSeries,
) -> Result<Vec<ProfilePoint>> {
    let eval = |value: f64| -> Option<f64> {
        match &fit.model {
            DurationModelParams::Exponential(_) => {
                if param_name != "nu" {
                    return None;
                }
                if value > 0.0 {
                    Some(exponential_loglik(value, durations))
                } else {
                    None
                }
            }
            DurationModelParams::Msmd(p)
            | DurationModelParams::Tmsmd(TmsmdParams { msmd: p, .. }) => {
                let mut q = *p;
                match param_name {
                    "lambda" => q.lambda = value,
                    "gamma_kbar" => q.gamma_kbar = value,
                    "b" => q.b = value,
                    "m0" => q.m0 = value,
                    _ => return None,
                }
                let q = MsmdParams::new(q.kbar, q.lambda, q.gamma_kbar, q.b, q.m0).ok()?;
                msmd_loglik(&q, durations).ok()
            }
        }
    };
    let known = match &fit.model {
        DurationModelParams::Exponential(_) => param_name == "nu",
        _ => matches!(param_name, "lambda" | "gamma_kbar" | "b" | "m0"),
    };
    if !known {
        return Err(Error::ParamDomain(format!(
            "unknown parameter name {param_name}"
        )));
    }
    Ok(grid
        .iter()
        .map(|&v| ProfilePoint {
            value: v,
            loglik: eval(v),
        })
        .collect())
}
