//! Property-based invariants across the library: filter correctness against
//! exhaustive path enumeration, divergence and test-statistic laws, model
//! orderings, and discretization contracts.

use proptest::prelude::*;

use subclock_core::durations::{
    gamma_ladder, simulate_msmd, simulate_tmsmd, DurationSeries, MsmdParams, TmsmdParams,
};
use subclock_core::inference::msmd_loglik;
use subclock_core::seed::sub_seed;
use subclock_core::stats::{chi_squared_gof, kl_divergence, ljung_box, DiscretePmf};
use subclock_core::subordination::{compound_returns, round_to_tick};

/// Likelihood by explicit summation over every latent state path: uniform
/// prior, tensor-product transition, exponential emission. Only viable for
/// tiny kbar and n.
fn brute_force_loglik(params: &MsmdParams, durations: &[f64]) -> f64 {
    let kbar = params.kbar;
    let n_states = 1usize << kbar;
    let gammas = gamma_ladder(params);
    let intensity = |s: usize| -> f64 {
        let mut prod = 1.0;
        for k in 0..kbar {
            prod *= if (s >> k) & 1 == 0 {
                params.m0
            } else {
                2.0 - params.m0
            };
        }
        params.lambda * prod
    };
    let trans = |from: usize, to: usize| -> f64 {
        let mut p = 1.0;
        for (k, &g) in gammas.iter().enumerate() {
            let same = ((from >> k) & 1) == ((to >> k) & 1);
            p *= if same { 1.0 - g / 2.0 } else { g / 2.0 };
        }
        p
    };
    let emit = |s: usize, d: f64| -> f64 {
        let lam = intensity(s);
        lam * (-lam * d).exp()
    };
    let n = durations.len();
    let mut total = 0.0;
    let n_paths = n_states.pow(n as u32);
    for code in 0..n_paths {
        let mut c = code;
        let mut path = Vec::with_capacity(n);
        for _ in 0..n {
            path.push(c % n_states);
            c /= n_states;
        }
        let mut p = 1.0 / n_states as f64;
        for i in 0..n {
            if i > 0 {
                p *= trans(path[i - 1], path[i]);
            }
            p *= emit(path[i], durations[i]);
        }
        total += p;
    }
    total.ln()
}

fn msmd_strategy() -> impl Strategy<Value = MsmdParams> {
    (
        1usize..=2,
        0.05f64..2.0,
        0.05f64..0.95,
        1.2f64..8.0,
        0.05f64..1.95,
    )
        .prop_map(|(kbar, lambda, gamma_kbar, b, m0)| {
            MsmdParams::new(kbar, lambda, gamma_kbar, b, m0).unwrap()
        })
}

fn pmf_pair() -> impl Strategy<Value = (DiscretePmf, DiscretePmf)> {
    (2usize..8).prop_flat_map(|k| {
        let weights = prop::collection::vec(0.05f64..1.0, k);
        (weights.clone(), weights).prop_map(move |(wf, wg)| {
            let values: Vec<f64> = (0..k).map(|i| i as f64 * 0.25).collect();
            let norm = |w: Vec<f64>| {
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect::<Vec<_>>()
            };
            (
                DiscretePmf::new(values.clone(), norm(wf)).unwrap(),
                DiscretePmf::new(values, norm(wg)).unwrap(),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn filter_matches_path_enumeration(
        params in msmd_strategy(),
        durations in prop::collection::vec(0.05f64..20.0, 1..=6),
    ) {
        let series = DurationSeries::observed(durations.clone()).unwrap();
        let fast = msmd_loglik(&params, &series).unwrap();
        let brute = brute_force_loglik(&params, &durations);
        let scale = fast.abs().max(1.0);
        prop_assert!((fast - brute).abs() / scale < 1e-10,
            "fast {fast} brute {brute}");
    }

    #[test]
    fn loglik_symmetric_in_m0(
        params in msmd_strategy(),
        durations in prop::collection::vec(0.05f64..20.0, 1..=10),
    ) {
        let series = DurationSeries::observed(durations).unwrap();
        let mirrored = MsmdParams::new(
            params.kbar, params.lambda, params.gamma_kbar, params.b, 2.0 - params.m0,
        ).unwrap();
        let a = msmd_loglik(&params, &series).unwrap();
        let b = msmd_loglik(&mirrored, &series).unwrap();
        prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(1.0));
    }

    #[test]
    fn gamma_ladder_monotone_in_unit_interval(params in msmd_strategy()) {
        let g = gamma_ladder(&params);
        prop_assert_eq!(g.len(), params.kbar);
        for w in g.windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for &gk in &g {
            prop_assert!(gk > 0.0 && gk <= 1.0);
        }
        prop_assert!((g[params.kbar - 1] - params.gamma_kbar).abs() < 1e-12);
    }

    #[test]
    fn kl_nonnegative_zero_iff_equal((f, g) in pmf_pair()) {
        let d = kl_divergence(&f, &g).unwrap();
        prop_assert!(d >= -1e-12, "KL {d} negative");
        let self_d = kl_divergence(&f, &f).unwrap();
        prop_assert!(self_d.abs() < 1e-12);
    }

    #[test]
    fn chi_squared_self_is_zero_and_symmetric((f, g) in pmf_pair()) {
        let (self_stat, df) = chi_squared_gof(&f, 1000, &f, 1000).unwrap();
        prop_assert!(self_stat.abs() < 1e-9);
        prop_assert_eq!(df, f.values.len() - 1);
        let (ab, _) = chi_squared_gof(&f, 500, &g, 500).unwrap();
        let (ba, _) = chi_squared_gof(&g, 500, &f, 500).unwrap();
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab >= 0.0);
    }

    #[test]
    fn ljung_box_monotone_in_lag_count(
        series in prop::collection::vec(-1.0f64..1.0, 40..80),
    ) {
        // Skip degenerate constant series.
        let mean = series.iter().sum::<f64>() / series.len() as f64;
        prop_assume!(series.iter().any(|v| (v - mean).abs() > 1e-9));
        let mut prev = 0.0;
        for l in 1..=10 {
            let (q, _) = ljung_box(&series, l).unwrap();
            prop_assert!(q + 1e-12 >= prev, "Q dropped at lag {l}");
            prev = q;
        }
    }

    #[test]
    fn truncation_is_pointwise_min(
        params in msmd_strategy(),
        nu_max in 10.0f64..5000.0,
        seed in any::<u64>(),
    ) {
        let t = TmsmdParams::new(params, nu_max).unwrap();
        let truncated = simulate_tmsmd(&t, 50, seed).unwrap();
        let (untruncated, _) = simulate_msmd(&params, 50, sub_seed(seed, 0)).unwrap();
        for (a, b) in truncated.values.iter().zip(&untruncated.values) {
            prop_assert!(a <= b);
            prop_assert!(*a > 0.0);
        }
    }

    #[test]
    fn tick_rounding_contract(x in -50.0f64..50.0) {
        let tick = 0.25;
        let r = round_to_tick(x, tick);
        prop_assert!((r / tick - (r / tick).round()).abs() < 1e-9);
        prop_assert!((r - x).abs() <= tick / 2.0 + 1e-12);
        // Idempotent on the grid.
        prop_assert_eq!(round_to_tick(r, tick), r);
    }

    #[test]
    fn compound_preserves_covered_mass(
        durations in prop::collection::vec(1.0f64..40.0, 10..60),
        returns_seed in any::<u32>(),
    ) {
        let ticks: Vec<f64> = durations
            .iter()
            .enumerate()
            .map(|(i, _)| {
                let h = (i as u32).wrapping_mul(2654435761).wrapping_add(returns_seed);
                ((h >> 16) % 5) as f64 * 0.25 - 0.5
            })
            .collect();
        let series = DurationSeries::observed(durations.clone()).unwrap();
        let tau = 50.0;
        if let Ok(sim) = compound_returns(&series, &ticks, tau) {
            let horizon = sim.window_returns.len() as f64 * tau;
            let mut t = 0.0;
            let mut expected = 0.0;
            for (&d, &r) in durations.iter().zip(&ticks) {
                t += d;
                if t < horizon {
                    expected += r;
                }
            }
            let got: f64 = sim.window_returns.iter().sum();
            prop_assert!((got - expected).abs() < 1e-9);
        }
    }

    #[test]
    fn sub_seed_injective_on_small_indices(master in any::<u64>()) {
        let mut seen = std::collections::HashSet::new();
        for i in 0..64u64 {
            prop_assert!(seen.insert(sub_seed(master, i)), "collision at index {i}");
        }
    }
}
