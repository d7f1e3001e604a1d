//! Diagnostic statistics: autocorrelation, Ljung-Box, two-sample chi-squared,
//! Kullback-Leibler divergence, Q-Q points, dispersion ratio, chi-squared
//! critical values, annualized volatility, and cubic least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{chi2_cdf, normal_quantile};

/// Sample autocorrelations at lags 1..=max_lag.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub rho: Vec<f64>,
    pub n: usize,
}

/// Discrete probability mass function over sorted distinct outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscretePmf {
    pub values: Vec<f64>,
    pub probs: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.len() != probs.len() {
            return Err(Error::Data("values/probs length mismatch".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Data("values must be sorted and distinct".into()));
        }
        if probs.iter().any(|&p| p < 0.0 || !p.is_finite()) {
            return Err(Error::Data("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Data(format!("probabilities sum to {total}, not 1")));
        }
        Ok(Self { values, probs })
    }

    /// Empirical pmf of a sample, binned on exact values.
    pub fn from_sample(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Data("empty sample".into()));
        }
        let mut sorted = sample.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut values = Vec::new();
        let mut counts: Vec<usize> = Vec::new();
        for &x in &sorted {
            match values.last() {
                Some(&last) if last == x => *counts.last_mut().unwrap() += 1,
                _ => {
                    values.push(x);
                    counts.push(1);
                }
            }
        }
        let n = sample.len() as f64;
        let probs = counts.iter().map(|&c| c as f64 / n).collect();
        Self::new(values, probs)
    }

    pub fn same_support(&self, other: &DiscretePmf) -> bool {
        self.values == other.values
    }
}

/// Sample autocorrelation function with mean-centered lag-0 denominator.
pub fn acf(series: &[f64], max_lag: usize) -> Result<AcfResult> {
    let n = series.len();
    if n <= max_lag {
        return Err(Error::Data(format!(
            "series length {n} must exceed max_lag {max_lag}"
        )));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let denom: f64 = series.iter().map(|x| (x - mean) * (x - mean)).sum();
    if denom == 0.0 {
        return Err(Error::Data("zero variance".into()));
    }
    let mut rho = Vec::with_capacity(max_lag);
    for lag in 1..=max_lag {
        let num: f64 = (0..n - lag)
            .map(|t| (series[t] - mean) * (series[t + lag] - mean))
            .sum();
        rho.push(num / denom);
    }
    Ok(AcfResult {
        lags: (1..=max_lag).collect(),
        rho,
        n,
    })
}

/// Ljung-Box statistic Q = n(n+2) sum_{i=1..l} rho_i^2 / (n-i), df = l.
pub fn ljung_box(series: &[f64], l: usize) -> Result<(f64, usize)> {
    let n = series.len();
    if n <= l {
        return Err(Error::Data(format!("series length {n} must exceed l {l}")));
    }
    let res = acf(series, l)?;
    let nf = n as f64;
    let q = nf
        * (nf + 2.0)
        * res
            .rho
            .iter()
            .enumerate()
            .map(|(i, &r)| r * r / (nf - (i + 1) as f64))
            .sum::<f64>();
    Ok((q, l))
}

/// Two-sample chi-squared over a shared discrete support, pooled-expectation
/// weighting; df = bins - 1.
pub fn chi_squared_gof(
    observed: &DiscretePmf,
    n_obs: usize,
    model: &DiscretePmf,
    n_sim: usize,
) -> Result<(f64, usize)> {
    if !observed.same_support(model) {
        return Err(Error::Data(
            "support mismatch: clamp the simulated returns to the observed support first".into(),
        ));
    }
    let n1 = n_obs as f64;
    let n2 = n_sim as f64;
    let mut stat = 0.0;
    for (&p1, &p2) in observed.probs.iter().zip(&model.probs) {
        let r = p1 * n1;
        let s = p2 * n2;
        if r + s == 0.0 {
            continue;
        }
        let pooled = (r + s) / (n1 + n2);
        let (e1, e2) = (n1 * pooled, n2 * pooled);
        if e1 > 0.0 {
            stat += (r - e1) * (r - e1) / e1;
        }
        if e2 > 0.0 {
            stat += (s - e2) * (s - e2) / e2;
        }
    }
    Ok((stat, observed.values.len().saturating_sub(1)))
}

/// Kullback-Leibler divergence D(F || G) = sum F ln(F/G), natural log.
/// Errors when G has zero mass at a point where F has mass.
pub fn kl_divergence(f: &DiscretePmf, g: &DiscretePmf) -> Result<f64> {
    if !f.same_support(g) {
        return Err(Error::Data("support mismatch".into()));
    }
    let mut d = 0.0;
    for (&pf, &pg) in f.probs.iter().zip(&g.probs) {
        if pf == 0.0 {
            continue;
        }
        if pg == 0.0 {
            return Err(Error::ParamDomain(
                "G has zero mass at a point with F mass; use kl_divergence_floored".into(),
            ));
        }
        d += pf * (pf / pg).ln();
    }
    Ok(d)
}

/// KL divergence with a floor eps = 1/(10 * n_sim) applied to zero G mass at
/// F-mass points; G is renormalized. Returns (divergence, floored mass).
pub fn kl_divergence_floored(f: &DiscretePmf, g: &DiscretePmf, n_sim: usize) -> Result<(f64, f64)> {
    if !f.same_support(g) {
        return Err(Error::Data("support mismatch".into()));
    }
    let eps = 1.0 / (10.0 * n_sim.max(1) as f64);
    let mut floored = 0.0;
    let mut g_adj: Vec<f64> = g.probs.clone();
    for (i, &pf) in f.probs.iter().enumerate() {
        if pf > 0.0 && g_adj[i] == 0.0 {
            g_adj[i] = eps;
            floored += eps;
        }
    }
    let total: f64 = g_adj.iter().sum();
    let mut d = 0.0;
    for (&pf, pg) in f.probs.iter().zip(&g_adj) {
        if pf > 0.0 {
            d += pf * (pf / (pg / total)).ln();
        }
    }
    Ok((d, floored))
}

/// Matched quantile pairs (theoretical, empirical) at plotting positions
/// (i - 0.5) / n_points.
pub fn qq_points<Q: Fn(f64) -> f64>(
    sample: &[f64],
    quantile_fn: Q,
    n_points: usize,
) -> Result<Vec<(f64, f64)>> {
    if sample.is_empty() {
        return Err(Error::Data("empty sample".into()));
    }
    if n_points == 0 {
        return Err(Error::EmptyRequest("n_points must be >= 1".into()));
    }
    let mut sorted = sample.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    let mut out = Vec::with_capacity(n_points);
    for i in 0..n_points {
        let p = (i as f64 + 0.5) / n_points as f64;
        let idx = ((p * n as f64).ceil() as usize).clamp(1, n) - 1;
        out.push((quantile_fn(p), sorted[idx]));
    }
    Ok(out)
}

/// Quantile function of N(mu, sigma).
pub fn gaussian_quantile(mu: f64, sigma: f64) -> impl Fn(f64) -> f64 {
    move |p| mu + sigma * normal_quantile(p)
}

/// Quantile function of Exponential(nu).
pub fn exponential_quantile(nu: f64) -> impl Fn(f64) -> f64 {
    move |p| -nu * (1.0 - p).ln()
}

/// Sample variance over sample mean (population variance, divisor n).
pub fn dispersion_ratio(durations: &[f64]) -> Result<f64> {
    if durations.is_empty() {
        return Err(Error::Data("empty series".into()));
    }
    let n = durations.len() as f64;
    let mean = durations.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::Data("zero mean".into()));
    }
    let var = durations.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(var / mean)
}

/// Chi-squared quantile: Wilson-Hilferty start refined by bisection on the
/// regularized incomplete gamma.
pub fn chi2_critical(p: f64, df: usize) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::ParamDomain(format!("p must lie in (0,1), got {p}")));
    }
    if df < 1 {
        return Err(Error::ParamDomain("df must be >= 1".into()));
    }
    let k = df as f64;
    let z = normal_quantile(p);
    let wh = k * (1.0 - 2.0 / (9.0 * k) + z * (2.0 / (9.0 * k)).sqrt()).powi(3);
    let mut lo = (wh * 0.25).max(1e-12);
    let mut hi = (wh * 4.0).max(1.0);
    while chi2_cdf(lo, k) > p {
        lo *= 0.5;
    }
    while chi2_cdf(hi, k) < p {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if chi2_cdf(mid, k) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Annualized volatility in percent:
/// std(returns)/price_ref * sqrt(annual_ms/tau) * 100.
pub fn annualized_vol(
    window_returns: &[f64],
    tau: f64,
    price_ref: f64,
    annual_ms: f64,
) -> Result<f64> {
    if !(price_ref > 0.0) {
        return Err(Error::ParamDomain("price_ref must be positive".into()));
    }
    if !(tau > 0.0) || !(annual_ms > 0.0) {
        return Err(Error::ParamDomain("tau and annual_ms must be positive".into()));
    }
    if window_returns.is_empty() {
        return Err(Error::Data("empty returns".into()));
    }
    let n = window_returns.len() as f64;
    let mean = window_returns.iter().sum::<f64>() / n;
    let var = window_returns.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    Ok(var.sqrt() / price_ref * (annual_ms / tau).sqrt() * 100.0)
}

/// Ordinary least squares fit of a cubic polynomial, coefficients in
/// ascending powers. Solved by Householder QR on the Vandermonde matrix.
pub fn fit_cubic(x: &[f64], y: &[f64]) -> Result<[f64; 4]> {
    if x.len() != y.len() {
        return Err(Error::Data("x/y length mismatch".into()));
    }
    let mut distinct = x.to_vec();
    distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(Error::Data(
            "need at least 4 distinct x values for a cubic fit".into(),
        ));
    }
    let n = x.len();
    let p = 4usize;
    // Column-major Vandermonde.
    let mut a = vec![0.0f64; n * p];
    for (i, &xi) in x.iter().enumerate() {
        let mut pow = 1.0;
        for j in 0..p {
            a[j * n + i] = pow;
            pow *= xi;
        }
    }
    let mut rhs = y.to_vec();
    // Householder QR.
    let mut r = [[0.0f64; 4]; 4];
    for j in 0..p {
        let col = &a[j * n + j..(j + 1) * n];
        let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Data("rank-deficient design matrix".into()));
        }
        let alpha = if a[j * n + j] >= 0.0 { -norm } else { norm };
        let mut v: Vec<f64> = col.to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|w| w * w).sum();
        if vnorm2 > 0.0 {
            // Apply the reflector to remaining columns and the rhs.
            for jj in j..p {
                let dot: f64 = (j..n).map(|i| v[i - j] * a[jj * n + i]).sum();
                let scale = 2.0 * dot / vnorm2;
                for i in j..n {
                    a[jj * n + i] -= scale * v[i - j];
                }
            }
            let dot: f64 = (j..n).map(|i| v[i - j] * rhs[i]).sum();
            let scale = 2.0 * dot / vnorm2;
            for i in j..n {
                rhs[i] -= scale * v[i - j];
            }
        }
        for jj in 0..p {
            if jj >= j {
                r[j][jj] = a[jj * n + j];
            }
        }
    }
    // Back substitution.
    let mut coeffs = [0.0f64; 4];
    for j in (0..p).rev() {
        let mut s = rhs[j];
        for jj in j + 1..p {
            s -= r[j][jj] * coeffs[jj];
        }
        if r[j][j] == 0.0 {
            return Err(Error::Data("rank-deficient design matrix".into()));
        }
        coeffs[j] = s / r[j][j];
    }
    Ok(coeffs)
}

/// Evaluates a cubic in ascending-power coefficients.
pub fn eval_cubic(coeffs: &[f64; 4], x: f64) -> f64 {
    coeffs[0] + x * (coeffs[1] + x * (coeffs[2] + x * coeffs[3]))
}

/// Coefficient of determination of the cubic fit.
pub fn r_squared(coeffs: &[f64; 4], x: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let sst: f64 = y.iter().map(|v| (v - mean) * (v - mean)).sum();
    let ssr: f64 = x
        .iter()
        .zip(y)
        .map(|(&xi, &yi)| {
            let e = yi - eval_cubic(coeffs, xi);
            e * e
        })
        .sum();
    if sst == 0.0 {
        return 1.0;
    }
    1.0 - ssr / sst
}

/// Sample excess kurtosis (population moments).
pub fn excess_kurtosis(series: &[f64]) -> Result<f64> {
    if series.len() < 2 {
        return Err(Error::Data("need at least 2 observations".into()));
    }
    let n = series.len() as f64;
    let mean = series.iter().sum::<f64>() / n;
    let m2 = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = series.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(Error::Data("zero variance".into()));
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn acf_alternating_series() {
        let series: Vec<f64> = (0..200).map(|t| if t % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let res = acf(&series, 2).unwrap();
        assert!((res.rho[0] + 1.0).abs() < 0.02, "rho1 {}", res.rho[0]);
    }

    #[test]
    fn acf_iid_noise_within_band() {
        let mut rng = rng_from(33);
        let series: Vec<f64> = (0..10_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let res = acf(&series, 40).unwrap();
        let band = 3.0 / (series.len() as f64).sqrt();
        let inside = res.rho.iter().filter(|r| r.abs() < band).count();
        assert!(inside as f64 >= 0.95 * 40.0, "inside {inside}");
    }

    #[test]
    fn acf_errors() {
        assert!(acf(&[1.0, 1.0, 1.0], 1).is_err()); // zero variance
        assert!(acf(&[1.0, 2.0], 5).is_err()); // too short
    }

    #[test]
    fn ljung_box_zero_for_constant_rho() {
        // An i.i.d.-looking tiny series just checks Q >= 0 and df passthrough.
        let series: Vec<f64> = (0..100).map(|t| ((t * 7919) % 101) as f64).collect();
        let (q, df) = ljung_box(&series, 20).unwrap();
        assert!(q >= 0.0);
        assert_eq!(df, 20);
    }

    #[test]
    fn ljung_box_monotone_in_l() {
        let series: Vec<f64> = (0..500).map(|t| ((t * 31) % 17) as f64).collect();
        let (q5, _) = ljung_box(&series, 5).unwrap();
        let (q10, _) = ljung_box(&series, 10).unwrap();
        let (q20, _) = ljung_box(&series, 20).unwrap();
        assert!(q5 <= q10 && q10 <= q20);
    }

    #[test]
    fn chi_squared_identical_histograms_zero() {
        let f = DiscretePmf::new(vec![-0.25, 0.0, 0.25], vec![0.25, 0.5, 0.25]).unwrap();
        let (stat, df) = chi_squared_gof(&f, 1000, &f.clone(), 1000).unwrap();
        assert!(stat.abs() < 1e-12);
        assert_eq!(df, 2);
    }

    #[test]
    fn chi_squared_support_mismatch_errors() {
        let f = DiscretePmf::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let g = DiscretePmf::new(vec![0.0, 2.0], vec![0.5, 0.5]).unwrap();
        assert!(chi_squared_gof(&f, 10, &g, 10).is_err());
    }

    #[test]
    fn kl_hand_value() {
        let f = DiscretePmf::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let g = DiscretePmf::new(vec![0.0, 1.0], vec![0.25, 0.75]).unwrap();
        let d = kl_divergence(&f, &g).unwrap();
        let expected = 0.5 * 2.0f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((d - expected).abs() < 1e-12);
        assert!((d - 0.1438).abs() < 1e-4);
    }

    #[test]
    fn kl_zero_mass_handling() {
        let f = DiscretePmf::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
        let g = DiscretePmf::new(vec![0.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert!(kl_divergence(&f, &g).is_err());
        let (d, floored) = kl_divergence_floored(&f, &g, 100).unwrap();
        assert!(d > 0.0);
        assert!(floored > 0.0);
    }

    #[test]
    fn qq_constant_sample() {
        let pts = qq_points(&[2.0; 50], |p| p, 10).unwrap();
        for (_, emp) in pts {
            assert_eq!(emp, 2.0);
        }
    }

    #[test]
    fn qq_self_consistent() {
        let mut rng = rng_from(5);
        let sample: Vec<f64> = (0..100_000).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let pts = qq_points(&sample, gaussian_quantile(0.0, 1.0), 99).unwrap();
        let max_dev = pts
            .iter()
            .map(|(t, e)| (t - e).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev < 0.1, "max_dev {max_dev}");
        // Sorted in both coordinates.
        for w in pts.windows(2) {
            assert!(w[0].0 <= w[1].0);
            assert!(w[0].1 <= w[1].1);
        }
    }

    #[test]
    fn dispersion_constant_is_zero() {
        assert_eq!(dispersion_ratio(&[5.0; 10]).unwrap(), 0.0);
        assert!(dispersion_ratio(&[]).is_err());
    }

    #[test]
    fn chi2_critical_table_values() {
        assert!((chi2_critical(0.95, 20).unwrap() - 31.41).abs() < 0.01);
        assert!((chi2_critical(0.95, 6).unwrap() - 12.592).abs() < 0.01);
        assert!((chi2_critical(0.95, 10).unwrap() - 18.307).abs() < 0.01);
    }

    #[test]
    fn chi2_critical_inverts_cdf() {
        for &(p, df) in &[(0.5, 3usize), (0.95, 20), (0.99, 7), (0.05, 12)] {
            let x = chi2_critical(p, df).unwrap();
            assert!((chi2_cdf(x, df as f64) - p).abs() < 1e-6);
        }
    }

    #[test]
    fn annualized_vol_arithmetic() {
        // std = 0.5 around zero mean
        let returns = vec![0.5, -0.5, 0.5, -0.5];
        let annual_ms = 252.0 * 6.5 * 3.6e6;
        let v = annualized_vol(&returns, 1e4, 1640.0, annual_ms).unwrap();
        assert!((v - 0.5 / 1640.0 * (annual_ms / 1e4f64).sqrt() * 100.0).abs() < 1e-9);
        assert!((v - 23.4).abs() < 0.1, "v {v}");
        // Linear in std.
        let doubled: Vec<f64> = returns.iter().map(|r| 2.0 * r).collect();
        let v2 = annualized_vol(&doubled, 1e4, 1640.0, annual_ms).unwrap();
        assert!((v2 - 2.0 * v).abs() < 1e-9);
    }

    #[test]
    fn fit_cubic_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.7 - 2.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| 2.0 * v * v * v - v + 5.0).collect();
        let c = fit_cubic(&x, &y).unwrap();
        assert!((c[0] - 5.0).abs() < 1e-8, "{c:?}");
        assert!((c[1] + 1.0).abs() < 1e-8, "{c:?}");
        assert!(c[2].abs() < 1e-8, "{c:?}");
        assert!((c[3] - 2.0).abs() < 1e-8, "{c:?}");
    }

    #[test]
    fn fit_cubic_constant_and_rank() {
        let x: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let y = vec![3.5; 8];
        let c = fit_cubic(&x, &y).unwrap();
        assert!((c[0] - 3.5).abs() < 1e-9);
        for &v in &c[1..] {
            assert!(v.abs() < 1e-9);
        }
        assert!(fit_cubic(&[1.0, 1.0, 2.0, 3.0], &[1.0, 1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn fit_cubic_residual_orthogonality() {
        let mut rng = rng_from(8);
        let x: Vec<f64> = (0..30).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 1.0 + 0.5 * v - 0.1 * v * v + rng.sample::<f64, _>(StandardNormal))
            .collect();
        let c = fit_cubic(&x, &y).unwrap();
        for power in 0..4 {
            let dot: f64 = x
                .iter()
                .zip(&y)
                .map(|(&xi, &yi)| (yi - eval_cubic(&c, xi)) * xi.powi(power))
                .sum();
            assert!(dot.abs() < 1e-6, "power {power} dot {dot}");
        }
    }
}
