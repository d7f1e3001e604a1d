//! Market-structure applications: the baseline-intensity sweep mapping trade
//! rate to annualized volatility, and the millisecond lead-lag response
//! estimator with its cumulative response ratio.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::durations::{DurationModelParams, TmsmdParams};
use crate::error::{Error, Result};
use crate::inference::GaussianParams;
use crate::seed::sub_seed;
use crate::stats::{annualized_vol, eval_cubic, fit_cubic, r_squared};
use crate::subordination::simulate_clock_returns;
use crate::ticks::TickSeries;

pub const DEFAULT_PRICE_REF: f64 = 1640.0;
pub const DEFAULT_ANNUAL_MS: f64 = 252.0 * 6.5 * 3_600_000.0;
pub const DEFAULT_MAX_LAG: i64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolCurvePoint {
    pub lambda: f64,
    /// Median inter-trade duration, ms (lower median for even counts).
    pub tau_med: f64,
    /// Annualized volatility, percent.
    pub vol_annualized: f64,
}

/// Swept curve plus a cubic fit of vol against ln(tau_med). The log
/// coordinate is what makes a single cubic track the 1/sqrt(tau_med) shape
/// across two decades of median duration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VolCurve {
    pub points: Vec<VolCurvePoint>,
    /// Cubic coefficients c0..c3 in x = ln(tau_med).
    pub coeffs: [f64; 4],
    pub r_squared: f64,
    pub price_ref: f64,
    pub annual_ms: f64,
}

fn lower_median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[(v.len() - 1) / 2]
}

/// Sweeps the baseline intensity over `lambda_grid`, simulating truncated
/// multifractal clock-time returns at each point and recording the median
/// duration / annualized volatility pair. Grid points run in parallel with
/// seeds derived from `seed`; a failed point is skipped, others continue.
#[allow(clippy::too_many_arguments)]
pub fn vol_curve(
    base: &TmsmdParams,
    g: &GaussianParams,
    lambda_grid: &[f64],
    tau: f64,
    n_windows: usize,
    seed: u64,
    price_ref: f64,
    annual_ms: f64,
    tick_size: f64,
) -> Result<VolCurve> {
    if lambda_grid.is_empty() {
        return Err(Error::EmptyRequest("lambda_grid is empty".into()));
    }
    if lambda_grid.iter().any(|&l| !(0.01..=6.0).contains(&l)) {
        return Err(Error::ParamDomain(
            "lambda_grid must lie within [0.01, 6]".into(),
        ));
    }
    if n_windows < 500 {
        return Err(Error::ParamDomain("n_windows must be >= 500".into()));
    }
    let mut points: Vec<VolCurvePoint> = lambda_grid
        .par_iter()
        .enumerate()
        .filter_map(|(i, &lambda)| {
            let mut msmd = base.msmd.clone();
            msmd.lambda = lambda;
            let params = TmsmdParams {
                msmd,
                nu_max: base.nu_max,
            };
            let sim = simulate_clock_returns(
                &DurationModelParams::Tmsmd(params),
                g,
                tau,
                n_windows,
                sub_seed(seed, i as u64),
                None,
                tick_size,
            )
            .ok()?;
            let vol =
                annualized_vol(&sim.window_returns, tau, price_ref, annual_ms).ok()?;
            Some(VolCurvePoint {
                lambda,
                tau_med: lower_median(&sim.durations.values),
                vol_annualized: vol,
            })
        })
        .collect();
    points.sort_by(|a, b| a.lambda.partial_cmp(&b.lambda).unwrap());
    if points.len() < 4 {
        return Err(Error::Data(format!(
            "only {} grid points succeeded; need at least 4 for the cubic fit",
            points.len()
        )));
    }
    let x: Vec<f64> = points.iter().map(|p| p.tau_med.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.vol_annualized).collect();
    let coeffs = fit_cubic(&x, &y)?;
    let r2 = r_squared(&coeffs, &x, &y);
    Ok(VolCurve {
        points,
        coeffs,
        r_squared: r2,
        price_ref,
        annual_ms,
    })
}

/// Evaluates the fitted curve at a queried median duration. The flag is true
/// when the query lies outside the simulated tau_med range (extrapolation).
pub fn extrapolate_vol(curve: &VolCurve, tau_med_query: f64) -> (f64, bool) {
    let lo = curve
        .points
        .iter()
        .map(|p| p.tau_med)
        .fold(f64::INFINITY, f64::min);
    let hi = curve
        .points
        .iter()
        .map(|p| p.tau_med)
        .fold(f64::NEG_INFINITY, f64::max);
    let vol = eval_cubic(&curve.coeffs, tau_med_query.ln());
    (vol, tau_med_query < lo || tau_med_query > hi)
}

/// Per-millisecond in-force price over [t0, t1); None before the first trade.
pub fn inforce_series(ticks: &TickSeries, t0: i64, t1: i64) -> Result<Vec<Option<f64>>> {
    if t1 <= t0 {
        return Err(Error::ParamDomain("t1 must exceed t0".into()));
    }
    let first = ticks
        .first_ms()
        .ok_or_else(|| Error::Data("empty tick series".into()))?;
    if first >= t1 {
        return Err(Error::Data("no ticks at or before the requested range".into()));
    }
    let mut out = Vec::with_capacity((t1 - t0) as usize);
    let mut idx = ticks.records.partition_point(|r| r.timestamp_ms <= t0);
    let mut price = if idx == 0 {
        None
    } else {
        Some(ticks.records[idx - 1].price)
    };
    for t in t0..t1 {
        while idx < ticks.records.len() && ticks.records[idx].timestamp_ms <= t {
            price = Some(ticks.records[idx].price);
            idx += 1;
        }
        out.push(price);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceEvent {
    /// Offset in ms into the in-force array.
    pub time: usize,
    /// +1 for an up-move, -1 for a down-move.
    pub direction: i8,
}

/// Milliseconds at which the in-force price changes relative to the most
/// recent prior defined price.
pub fn price_changing_events(inforce: &[Option<f64>]) -> Vec<PriceEvent> {
    let mut events = Vec::new();
    let mut prev: Option<f64> = None;
    for (t, p) in inforce.iter().enumerate() {
        if let Some(p) = *p {
            if let Some(q) = prev {
                if p != q {
                    events.push(PriceEvent {
                        time: t,
                        direction: if p > q { 1 } else { -1 },
                    });
                }
            }
            prev = Some(p);
        }
    }
    events
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LagResponse {
    /// Lags -max_lag..=+max_lag in ms.
    pub lags: Vec<i64>,
    /// Signed follower price change per lag, per leader event.
    pub response: Vec<f64>,
    /// Leader events that contributed (edge events are skipped).
    pub n_events: usize,
    /// Leader events dropped because the follower window was too short.
    pub n_skipped: usize,
}

/// Accumulates the follower's signed price changes around each leader
/// price-changing event. An event with direction s at time t contributes
/// s * (follower change at t+l) to lag l; the total is normalized per event.
pub fn lagged_response(
    leader_events: &[PriceEvent],
    follower_inforce: &[Option<f64>],
    max_lag: i64,
) -> Result<LagResponse> {
    if max_lag < 1 {
        return Err(Error::ParamDomain("max_lag must be >= 1".into()));
    }
    let n_lags = (2 * max_lag + 1) as usize;
    let lags: Vec<i64> = (-max_lag..=max_lag).collect();
    // Follower increment at t: change of in-force price from t-1 to t.
    let delta: Vec<f64> = follower_inforce
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        })
        .collect();
    let horizon = follower_inforce.len() as i64;
    let events: Vec<&PriceEvent> = leader_events
        .iter()
        .filter(|e| {
            let t = e.time as i64;
            t - max_lag >= 1 && t + max_lag < horizon
        })
        .collect();
    let n_skipped = leader_events.len() - events.len();
    let acc = events
        .par_iter()
        .fold(
            || vec![0.0f64; n_lags],
            |mut acc, e| {
                let s = e.direction as f64;
                for (j, &l) in lags.iter().enumerate() {
                    let t = e.time as i64 + l;
                    acc[j] += s * delta[(t - 1) as usize];
                }
                acc
            },
        )
        .reduce(
            || vec![0.0f64; n_lags],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let n_events = events.len();
    let norm = if n_events == 0 { 1.0 } else { n_events as f64 };
    Ok(LagResponse {
        lags,
        response: acc.into_iter().map(|v| v / norm).collect(),
        n_events,
        n_skipped,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CumulativeResponse {
    /// Horizons t_f = 1..=max_lag.
    pub horizons: Vec<i64>,
    /// Running sum of response over lags 1..=t_f.
    pub positive: Vec<f64>,
    /// Running sum of response over lags -t_f..=-1, sign-flipped so that
    /// leader-led dynamics yield a positive value.
    pub negative: Vec<f64>,
    /// Ratio at t_f = max_lag; None marks an infinite ratio (zero negative
    /// cumulative).
    pub ratio: Option<f64>,
}

/// Cumulative response on each side of lag 0 (lag 0 belongs to neither side)
/// and their ratio at the full horizon.
pub fn cumulative_response(resp: &LagResponse) -> CumulativeResponse {
    let max_lag = *resp.lags.last().expect("nonempty lags");
    let at = |l: i64| -> f64 {
        let j = (l + max_lag) as usize;
        resp.response[j]
    };
    let mut horizons = Vec::with_capacity(max_lag as usize);
    let mut positive = Vec::with_capacity(max_lag as usize);
    let mut negative = Vec::with_capacity(max_lag as usize);
    let (mut plus, mut minus) = (0.0, 0.0);
    for tf in 1..=max_lag {
        plus += at(tf);
        minus += at(-tf);
        horizons.push(tf);
        positive.push(plus);
        negative.push(minus);
    }
    let ratio = if minus == 0.0 { None } else { Some(plus / minus) };
    CumulativeResponse {
        horizons,
        positive,
        negative,
        ratio,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::durations::MsmdParams;
    use crate::seed::rng_from;
    use crate::ticks::TickRecord;
    use rand::Rng;

    fn series(ticks: &[(i64, f64)]) -> TickSeries {
        TickSeries {
            records: ticks
                .iter()
                .map(|&(timestamp_ms, price)| TickRecord {
                    timestamp_ms,
                    price,
                })
                .collect(),
        }
    }

    fn inforce_from_deltas(len: usize, deltas: &[(usize, f64)]) -> Vec<Option<f64>> {
        let mut p = 100.0;
        let mut out = Vec::with_capacity(len);
        for t in 0..len {
            if let Some(&(_, d)) = deltas.iter().find(|&&(tt, _)| tt == t) {
                p += d;
            }
            out.push(Some(p));
        }
        out
    }

    #[test]
    fn inforce_basics() {
        let ticks = series(&[(0, 10.0), (3, 11.0)]);
        let arr = inforce_series(&ticks, 0, 5).unwrap();
        assert_eq!(
            arr,
            vec![Some(10.0), Some(10.0), Some(10.0), Some(11.0), Some(11.0)]
        );
        // Leading ms before the first trade are undefined.
        let arr = inforce_series(&ticks, -2, 2).unwrap();
        assert_eq!(arr, vec![None, None, Some(10.0), Some(10.0)]);
        assert_eq!(arr.len(), 4);
        assert!(inforce_series(&series(&[(100, 1.0)]), 0, 50).is_err());
    }

    #[test]
    fn event_detection() {
        let flat = vec![Some(10.0); 20];
        assert!(price_changing_events(&flat).is_empty());

        let mut up = vec![Some(10.0); 10];
        for v in up.iter_mut().skip(7) {
            *v = Some(10.25);
        }
        let ev = price_changing_events(&up);
        assert_eq!(ev, vec![PriceEvent { time: 7, direction: 1 }]);

        let mut down = vec![Some(10.0); 10];
        for v in down.iter_mut().skip(4) {
            *v = Some(9.75);
        }
        assert_eq!(price_changing_events(&down)[0].direction, -1);

        // A change across a leading undefined stretch only counts once
        // defined prices exist on both sides.
        let arr = vec![None, None, Some(5.0), Some(5.0), Some(5.5)];
        let ev = price_changing_events(&arr);
        assert_eq!(ev, vec![PriceEvent { time: 4, direction: 1 }]);
    }

    #[test]
    fn shifted_follower_concentrates_at_lag() {
        // Follower replays the leader's changes 5 ms later.
        let len = 400;
        let leader_deltas: Vec<(usize, f64)> =
            vec![(50, 0.25), (120, -0.25), (200, 0.25), (300, 0.25)];
        let follower_deltas: Vec<(usize, f64)> =
            leader_deltas.iter().map(|&(t, d)| (t + 5, d)).collect();
        let leader = inforce_from_deltas(len, &leader_deltas);
        let follower = inforce_from_deltas(len, &follower_deltas);
        let events = price_changing_events(&leader);
        assert_eq!(events.len(), 4);
        let resp = lagged_response(&events, &follower, 30).unwrap();
        assert_eq!(resp.n_events, 4);
        let at5 = resp.response[(5 + 30) as usize];
        // Sign symmetrization: down-moves contribute positively too.
        assert!((at5 - 0.25).abs() < 1e-12, "got {at5}");
        for (j, &l) in resp.lags.iter().enumerate() {
            if l != 5 {
                assert!(resp.response[j].abs() < 1e-12, "lag {l} nonzero");
            }
        }
        let cum = cumulative_response(&resp);
        assert!(cum.ratio.is_none(), "all-positive response → infinite ratio");
        assert!((cum.positive.last().unwrap() - 0.25).abs() < 1e-12);
    }

    #[test]
    fn known_lag_argmax_random_instances() {
        let mut rng = rng_from(77);
        for _ in 0..100 {
            let true_lag = rng.gen_range(1..=20usize);
            let len = 600;
            let mut leader_deltas = Vec::new();
            let mut t = 60;
            while t < len - 60 {
                let d = if rng.gen_bool(0.5) { 0.25 } else { -0.25 };
                leader_deltas.push((t, d));
                t += rng.gen_range(45..90);
            }
            let follower_deltas: Vec<(usize, f64)> = leader_deltas
                .iter()
                .map(|&(tt, d)| (tt + true_lag, d))
                .collect();
            let leader = inforce_from_deltas(len, &leader_deltas);
            let follower = inforce_from_deltas(len, &follower_deltas);
            let events = price_changing_events(&leader);
            let resp = lagged_response(&events, &follower, 30).unwrap();
            let argmax = resp
                .lags
                .iter()
                .zip(&resp.response)
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(*argmax, true_lag as i64);
        }
    }

    #[test]
    fn null_follower_stays_flat() {
        let mut rng = rng_from(3);
        let len = 5000;
        let mut leader_deltas = Vec::new();
        let mut t = 40;
        while t < len - 40 {
            leader_deltas.push((t, if rng.gen_bool(0.5) { 0.25 } else { -0.25 }));
            t += rng.gen_range(20..40);
        }
        // Independent follower noise.
        let mut follower_deltas = Vec::new();
        let mut t = 35;
        while t < len - 35 {
            follower_deltas.push((t, if rng.gen_bool(0.5) { 0.25 } else { -0.25 }));
            t += rng.gen_range(20..40);
        }
        let leader = inforce_from_deltas(len, &leader_deltas);
        let follower = inforce_from_deltas(len, &follower_deltas);
        let events = price_changing_events(&leader);
        let resp = lagged_response(&events, &follower, 30).unwrap();
        // Per-lag response is a mean of ~n_events iid +-0.25-or-0 terms.
        let sigma = 0.25 / (resp.n_events as f64).sqrt();
        for &r in &resp.response {
            assert!(r.abs() < 4.0 * sigma, "null response {r} outside band");
        }
    }

    #[test]
    fn linearity_in_follower_increments() {
        let len = 300;
        let leader = inforce_from_deltas(len, &[(60, 0.25), (150, -0.25)]);
        let follower1 = inforce_from_deltas(len, &[(63, 0.25), (153, -0.25)]);
        let follower2 = inforce_from_deltas(len, &[(63, 0.50), (153, -0.50)]);
        let events = price_changing_events(&leader);
        let r1 = lagged_response(&events, &follower1, 30).unwrap();
        let r2 = lagged_response(&events, &follower2, 30).unwrap();
        for (a, b) in r1.response.iter().zip(&r2.response) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_response_gives_unit_ratio() {
        let max_lag = 30;
        let mut resp = LagResponse {
            lags: (-max_lag..=max_lag).collect(),
            response: vec![0.0; (2 * max_lag + 1) as usize],
            n_events: 10,
            n_skipped: 0,
        };
        resp.response[(3 + max_lag) as usize] = 0.1;
        resp.response[(-3 + max_lag) as usize] = 0.1;
        resp.response[(max_lag) as usize] = 0.7; // lag 0 excluded from both sides
        let cum = cumulative_response(&resp);
        assert_eq!(cum.ratio, Some(1.0));
        assert_eq!(*cum.positive.last().unwrap(), 0.1);
        assert_eq!(*cum.negative.last().unwrap(), 0.1);
        // Monotone partial sums for nonnegative responses.
        assert!(cum.positive.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn edge_events_skipped_with_count() {
        let len = 100;
        let leader = inforce_from_deltas(len, &[(10, 0.25), (50, 0.25), (95, 0.25)]);
        let follower = inforce_from_deltas(len, &[]);
        let events = price_changing_events(&leader);
        let resp = lagged_response(&events, &follower, 30).unwrap();
        assert_eq!(resp.n_events, 1);
        assert_eq!(resp.n_skipped, 2);
    }

    #[test]
    fn vol_curve_shape_and_scaling() {
        let base = TmsmdParams {
            msmd: MsmdParams::new(3, 0.09155, 0.4656, 2.063, 0.1502).unwrap(),
            nu_max: 5866.0,
        };
        let g = GaussianParams::new(0.0, 0.5).unwrap();
        let grid = [0.05, 0.2, 0.8, 3.0];
        let curve = vol_curve(
            &base,
            &g,
            &grid,
            1000.0,
            600,
            11,
            DEFAULT_PRICE_REF,
            DEFAULT_ANNUAL_MS,
            0.25,
        )
        .unwrap();
        assert_eq!(curve.points.len(), 4);
        // Larger lambda → smaller median duration, larger vol.
        for w in curve.points.windows(2) {
            assert!(w[1].tau_med < w[0].tau_med);
            assert!(w[1].vol_annualized > w[0].vol_annualized);
        }
        for p in &curve.points {
            assert!(p.tau_med > 0.0 && p.vol_annualized >= 0.0);
        }

        // Doubling sigma doubles vol at every point; the tick grid scales with
        // the return scale so the discretized draws double exactly.
        let g2 = GaussianParams::new(0.0, 1.0).unwrap();
        let curve2 = vol_curve(
            &base,
            &g2,
            &grid,
            1000.0,
            600,
            11,
            DEFAULT_PRICE_REF,
            DEFAULT_ANNUAL_MS,
            0.50,
        )
        .unwrap();
        for (a, b) in curve.points.iter().zip(&curve2.points) {
            assert!((b.vol_annualized / a.vol_annualized - 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn extrapolation_flag_and_interpolation() {
        let curve = VolCurve {
            points: vec![
                VolCurvePoint { lambda: 0.1, tau_med: 100.0, vol_annualized: 10.0 },
                VolCurvePoint { lambda: 1.0, tau_med: 1000.0, vol_annualized: 3.0 },
            ],
            coeffs: [5.0, 0.0, 0.0, 0.0],
            r_squared: 1.0,
            price_ref: DEFAULT_PRICE_REF,
            annual_ms: DEFAULT_ANNUAL_MS,
        };
        let (v, flag) = extrapolate_vol(&curve, 500.0);
        assert_eq!(v, 5.0);
        assert!(!flag);
        let (v, flag) = extrapolate_vol(&curve, 8.0);
        assert!(v.is_finite());
        assert!(flag);

        // Zero high-order terms in the log coordinate → linear in ln(tau).
        let lin = VolCurve {
            coeffs: [1.0, 2.0, 0.0, 0.0],
            ..curve
        };
        let (v, _) = extrapolate_vol(&lin, std::f64::consts::E);
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn vol_curve_rejects_bad_grid() {
        let base = TmsmdParams {
            msmd: MsmdParams::new(2, 0.1, 0.5, 2.0, 0.5).unwrap(),
            nu_max: 5866.0,
        };
        let g = GaussianParams::new(0.0, 1.0).unwrap();
        assert!(vol_curve(&base, &g, &[], 1000.0, 600, 1, 1640.0, 1.0, 0.25).is_err());
        assert!(vol_curve(&base, &g, &[7.0], 1000.0, 600, 1, 1640.0, 1.0, 0.25).is_err());
        assert!(
            vol_curve(&base, &g, &[0.1, 0.2, 0.3, 0.4], 1000.0, 100, 1, 1640.0, 1.0, 0.25)
                .is_err()
        );
    }
}
