use proptest::prelude::*;
use tod_core::flowdata::FlowSeries;
use tod_core::segmentation::{fit_value, optimal_segmentation, segment_cost, FitConfig};

fn series_strategy(max_t: usize, max_m: usize, hi: f64) -> impl Strategy<Value = FlowSeries> {
    (1..=max_t, 1..=max_m).prop_flat_map(move |(t, m)| {
        prop::collection::vec(0.0..hi, t * m).prop_map(move |v| FlowSeries::new(1, m, v).unwrap())
    })
}

/// Small integer flows make tied segmentations common.
fn integer_series(max_t: usize, max_m: usize) -> impl Strategy<Value = FlowSeries> {
    (1..=max_t, 1..=max_m).prop_flat_map(|(t, m)| {
        prop::collection::vec(0u8..4, t * m).prop_map(move |v| {
            FlowSeries::new(1, m, v.into_iter().map(f64::from).collect()).unwrap()
        })
    })
}

fn combinations(lo: usize, hi: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for first in lo..=hi {
        for mut rest in combinations(first + 1, hi, k - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive search over all switch vectors, lexicographic order, earliest
/// near-tie wins.
fn brute_force(x: &FlowSeries, s: usize, cfg: &FitConfig) -> (Vec<usize>, f64) {
    let (first, last) = (x.first(), x.last());
    let scored: Vec<(Vec<usize>, f64)> = combinations(first, last - 1, s - 1)
        .into_iter()
        .map(|taus| {
            let mut bounds = vec![first - 1];
            bounds.extend(&taus);
            bounds.push(last);
            let cost = bounds
                .windows(2)
                .map(|w| segment_cost(w[0] + 1, w[1], x, cfg).0)
                .sum();
            (taus, cost)
        })
        .collect();
    let best = scored.iter().map(|c| c.1).fold(f64::INFINITY, f64::min);
    let eps = 1e-12 * best.max(1.0);
    scored.into_iter().find(|c| c.1 <= best + eps).unwrap()
}

fn grid_minimum(values: &[f64], c: f64) -> (f64, f64) {
    let cfg = FitConfig::new(c).unwrap();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let steps = ((hi - lo) / 1e-4).ceil() as usize;
    let series = FlowSeries::new(1, 1, values.to_vec()).unwrap();
    (0..=steps)
        .map(|k| {
            let mu = (lo + k as f64 * 1e-4).min(hi);
            (mu, fit_value(1, values.len(), &series, &[mu], &cfg))
        })
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dp_matches_enumeration(x in integer_series(12, 2), s in 1usize..=3, c in prop::sample::select(vec![1.0, 2.0, 5.0])) {
        prop_assume!(s <= x.len());
        let cfg = FitConfig::new(c).unwrap();
        let plan = optimal_segmentation(&x, s, &cfg).unwrap();
        let (taus, cost) = brute_force(&x, s, &cfg);
        prop_assert!((plan.total_cost - cost).abs() <= 1e-9 * cost.max(1.0));
        prop_assert_eq!(plan.switch_times, taus);
    }

    #[test]
    fn dp_matches_enumeration_on_real_flows(x in series_strategy(12, 2, 100.0), s in 1usize..=3) {
        prop_assume!(s <= x.len());
        let cfg = FitConfig::default();
        let plan = optimal_segmentation(&x, s, &cfg).unwrap();
        let (taus, cost) = brute_force(&x, s, &cfg);
        prop_assert!((plan.total_cost - cost).abs() <= 1e-9 * cost.max(1.0));
        prop_assert_eq!(plan.switch_times, taus);
    }

    #[test]
    fn minimizer_matches_grid(values in prop::collection::vec(0.0..10.0f64, 1..8), c in prop::sample::select(vec![1.0, 2.0, 5.0])) {
        let cfg = FitConfig::new(c).unwrap();
        let series = FlowSeries::new(1, 1, values.clone()).unwrap();
        let (cost, mu) = segment_cost(1, values.len(), &series, &cfg);
        let (grid_mu, grid_cost) = grid_minimum(&values, c);
        prop_assert!((mu[0] - grid_mu).abs() <= 1e-3, "mu {} grid {}", mu[0], grid_mu);
        prop_assert!(cost <= grid_cost + 1e-12);
        prop_assert!(grid_cost - cost <= 1e-6 * cost.max(1.0));
    }

    #[test]
    fn fit_value_is_additive(
        x in series_strategy(30, 3, 500.0),
        cuts in prop::collection::vec(0.0..1.0f64, 3),
        mu_raw in prop::collection::vec(0.0..500.0f64, 3),
        c in 1.0..6.0f64,
    ) {
        let cfg = FitConfig::new(c).unwrap();
        let mu = &mu_raw[..x.n_movements()];
        let mut pts: Vec<usize> = cuts.iter().map(|u| 1 + (u * (x.len() - 1) as f64).round() as usize).collect();
        pts.sort_unstable();
        let (t1, t3, t2) = (pts[0], pts[1], pts[2]);
        let whole = fit_value(t1, t2, &x, mu, &cfg);
        let parts = fit_value(t1, t3, &x, mu, &cfg) + fit_value(t3 + 1, t2, &x, mu, &cfg);
        prop_assert!((whole - parts).abs() <= 1e-9 * whole.max(1.0));
    }

    #[test]
    fn cost_non_increasing_in_periods(x in series_strategy(20, 2, 300.0)) {
        let cfg = FitConfig::default();
        let mut previous = f64::INFINITY;
        for s in 1..=x.len().min(6) {
            let cost = optimal_segmentation(&x, s, &cfg).unwrap().total_cost;
            prop_assert!(cost <= previous + 1e-9 * previous.max(1.0).min(1e300));
            previous = cost;
        }
    }

    #[test]
    fn scaling_is_homogeneous(x in series_strategy(16, 2, 100.0), k in 0.1..20.0f64, s in 1usize..=4) {
        prop_assume!(s <= x.len());
        let cfg = FitConfig::default();
        let plan = optimal_segmentation(&x, s, &cfg).unwrap();
        let scaled = optimal_segmentation(&x.scaled(k), s, &cfg).unwrap();
        prop_assert_eq!(&scaled.switch_times, &plan.switch_times);
        prop_assert!((scaled.total_cost - k * k * plan.total_cost).abs() <= 1e-8 * (k * k * plan.total_cost).max(1.0));
        for (a, b) in scaled.params.iter().flatten().zip(plan.params.iter().flatten()) {
            prop_assert!((a - k * b).abs() <= 1e-9 * (k * b).abs().max(1.0));
        }
    }

    #[test]
    fn single_interval_segment_is_exact(x in series_strategy(10, 3, 100.0), pick in 0.0..1.0f64, c in 1.0..5.0f64) {
        let cfg = FitConfig::new(c).unwrap();
        let t = 1 + (pick * (x.len() - 1) as f64) as usize;
        let (cost, mu) = segment_cost(t, t, &x, &cfg);
        prop_assert_eq!(cost, 0.0);
        prop_assert_eq!(mu.as_slice(), x.at(t));
    }
}
