//! Fit and cost of a constant parameter vector over a run of intervals, and
//! exact dynamic-programming segmentation of a day into contiguous periods.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::FlowSeries;
use crate::{clock_label, FORMAT_VERSION};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Weight on flow exceeding the parameter (`C ≥ 1`).
    pub overflow_penalty: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            overflow_penalty: 2.0,
        }
    }
}

impl FitConfig {
    pub fn new(overflow_penalty: f64) -> Result<Self> {
        let cfg = FitConfig { overflow_penalty };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.overflow_penalty >= 1.0 && self.overflow_penalty.is_finite()) {
            return Err(Error::Config(format!(
                "overflow penalty {} must be a finite value >= 1",
                self.overflow_penalty
            )));
        }
        Ok(())
    }
}

/// Pointwise loss of flow `a` against parameter `b`.
#[inline]
pub fn phi(a: f64, b: f64, cfg: &FitConfig) -> f64 {
    let d = a - b;
    if a > b {
        cfg.overflow_penalty * d * d
    } else {
        d * d
    }
}

/// `Σ_{t=t_a}^{t_b} Σ_m φ(x_m(t), μ_m)`; zero for an empty range.
///
/// # Panics
/// If `x` does not cover a non-empty `t_a..=t_b` or `mu` has the wrong length.
pub fn fit_value(t_a: usize, t_b: usize, x: &FlowSeries, mu: &[f64], cfg: &FitConfig) -> f64 {
    if t_b < t_a {
        return 0.0;
    }
    assert!(
        x.covers(t_a, t_b),
        "fit range {t_a}..={t_b} outside the series"
    );
    assert_eq!(mu.len(), x.n_movements(), "parameter length");
    let mut total = 0.0;
    for t in t_a..=t_b {
        for (a, b) in x.at(t).iter().zip(mu) {
            total += phi(*a, *b, cfg);
        }
    }
    total
}

/// Minimiser of `Σ_j φ(a_j, μ)` over `μ` for ascending `sorted` values.
///
/// The objective is a convex piecewise quadratic; on the stretch with `k`
/// values at or below `μ` its stationary point is
/// `(S_low + C·S_high) / (k + C·(n − k))`.
fn minimize_sorted(sorted: &[f64], c: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return 0.0;
    }
    if sorted[0] == sorted[n - 1] {
        return sorted[0];
    }
    let total: f64 = sorted.iter().sum();
    if c == 1.0 {
        return total / n as f64;
    }
    let mut low = 0.0;
    for k in 0..n {
        let high = total - low;
        let mu = (low + c * high) / (k as f64 + c * (n - k) as f64);
        if mu <= sorted[k] {
            return if k == 0 { mu } else { mu.max(sorted[k - 1]) };
        }
        low += sorted[k];
    }
    (total / n as f64).max(sorted[n - 1])
}

fn minimize_movements(sorted: &[Vec<f64>], c: f64) -> Vec<f64> {
    sorted.iter().map(|v| minimize_sorted(v, c)).collect()
}

/// `min_μ F(t_a, t_b, x, μ)` and its minimiser, solved per movement.
pub fn segment_cost(t_a: usize, t_b: usize, x: &FlowSeries, cfg: &FitConfig) -> (f64, Vec<f64>) {
    let m = x.n_movements();
    if t_b < t_a {
        return (0.0, vec![0.0; m]);
    }
    let mut sorted = vec![Vec::with_capacity(t_b + 1 - t_a); m];
    for t in t_a..=t_b {
        for (k, v) in x.at(t).iter().enumerate() {
            sorted[k].push(*v);
        }
    }
    for s in &mut sorted {
        s.sort_by(f64::total_cmp);
    }
    let mu = minimize_movements(&sorted, cfg.overflow_penalty);
    (fit_value(t_a, t_b, x, &mu, cfg), mu)
}

/// Segment costs and minimisers for every `first ≤ a ≤ b ≤ last` of a series.
#[derive(Clone, Debug)]
pub struct CostTable {
    first: usize,
    len: usize,
    cfg: FitConfig,
    // row-major upper triangle indexed by (a - first, b - a)
    cost: Vec<f64>,
    mu: Vec<Vec<f64>>,
}

impl CostTable {
    pub fn new(x: &FlowSeries, cfg: &FitConfig) -> Result<Self> {
        cfg.validate()?;
        if x.is_empty() {
            return Err(Error::validation("cannot segment an empty series"));
        }
        let (first, len, m) = (x.first(), x.len(), x.n_movements());
        let mut cost = Vec::with_capacity(len * (len + 1) / 2);
        let mut mu = Vec::with_capacity(len * (len + 1) / 2);
        for a in first..first + len {
            let mut sorted: Vec<Vec<f64>> = vec![Vec::new(); m];
            for b in a..first + len {
                for (k, v) in x.at(b).iter().enumerate() {
                    let col = &mut sorted[k];
                    let pos = col.partition_point(|y| y.total_cmp(v).is_le());
                    col.insert(pos, *v);
                }
                let params = minimize_movements(&sorted, cfg.overflow_penalty);
                cost.push(fit_value(a, b, x, &params, cfg));
                mu.push(params);
            }
        }
        Ok(CostTable {
            first,
            len,
            cfg: *cfg,
            cost,
            mu,
        })
    }

    fn offset(&self, a: usize, b: usize) -> usize {
        let i = a - self.first;
        // sum_{r<i} (len - r) = i*len - i(i-1)/2
        i * self.len - i * i.saturating_sub(1) / 2 + (b - a)
    }

    pub fn first(&self) -> usize {
        self.first
    }

    pub fn last(&self) -> usize {
        self.first + self.len - 1
    }

    pub fn config(&self) -> &FitConfig {
        &self.cfg
    }

    /// Cost of the segment `a..=b`.
    pub fn cost(&self, a: usize, b: usize) -> f64 {
        debug_assert!(self.first <= a && a <= b && b <= self.last());
        self.cost[self.offset(a, b)]
    }

    /// Minimising parameter vector of the segment `a..=b`.
    pub fn mu(&self, a: usize, b: usize) -> &[f64] {
        &self.mu[self.offset(a, b)]
    }
}

/// Nominal switch times and per-period parameter vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationPlan {
    /// First and last interval covered.
    pub first: usize,
    pub last: usize,
    /// `τ_i` is the last interval of period `i`.
    pub switch_times: Vec<usize>,
    pub params: Vec<Vec<f64>>,
    pub total_cost: f64,
}

impl SegmentationPlan {
    pub fn n_periods(&self) -> usize {
        self.params.len()
    }

    /// Inclusive interval ranges of the periods.
    pub fn periods(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(self.n_periods());
        let mut start = self.first;
        for &tau in &self.switch_times {
            out.push((start, tau));
            start = tau + 1;
        }
        out.push((start, self.last));
        out
    }

    /// Index (0-based) of the period containing interval `t`.
    pub fn period_of(&self, t: usize) -> usize {
        self.switch_times.partition_point(|&tau| tau < t)
    }

    /// Checks ordering, ranges and parameter shapes.
    pub fn validate(&self, n_movements: usize) -> Result<()> {
        if self.params.len() != self.switch_times.len() + 1 {
            return Err(Error::validation(format!(
                "plan has {} switch times but {} parameter vectors",
                self.switch_times.len(),
                self.params.len()
            )));
        }
        if self.first == 0 || self.last < self.first {
            return Err(Error::validation(format!(
                "plan range {}..{}",
                self.first, self.last
            )));
        }
        let mut prev = self.first - 1;
        for &tau in &self.switch_times {
            if tau <= prev || tau >= self.last {
                return Err(Error::validation(format!(
                    "switch times {:?} must increase strictly within {}..{}",
                    self.switch_times, self.first, self.last
                )));
            }
            prev = tau;
        }
        for p in &self.params {
            if p.len() != n_movements {
                return Err(Error::Dimension {
                    what: "plan parameter vector",
                    expected: n_movements,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::validation("plan parameters must be non-negative"));
            }
        }
        Ok(())
    }

    pub fn to_document(&self, interval_minutes: u32, movements: &[String]) -> PlanDocument {
        PlanDocument {
            version: FORMAT_VERSION,
            n_periods: self.n_periods(),
            first: self.first,
            last: self.last,
            interval_minutes,
            switch_times: self.switch_times.clone(),
            switch_clock: self
                .switch_times
                .iter()
                .map(|&t| clock_label(t, interval_minutes))
                .collect(),
            movements: movements.to_vec(),
            params: self.params.clone(),
            total_cost: self.total_cost,
        }
    }
}

/// JSON form of a plan. `switch_clock[i]` is the wall-clock end of period `i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanDocument {
    pub version: u32,
    pub n_periods: usize,
    pub first: usize,
    pub last: usize,
    pub interval_minutes: u32,
    pub switch_times: Vec<usize>,
    pub switch_clock: Vec<String>,
    pub movements: Vec<String>,
    pub params: Vec<Vec<f64>>,
    pub total_cost: f64,
}

impl PlanDocument {
    pub fn into_plan(self) -> Result<SegmentationPlan> {
        if self.version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: self.version,
            });
        }
        let plan = SegmentationPlan {
            first: self.first,
            last: self.last,
            switch_times: self.switch_times,
            params: self.params,
            total_cost: self.total_cost,
        };
        plan.validate(self.movements.len())?;
        Ok(plan)
    }
}

/// Globally optimal segmentation of `x` into `n_periods` contiguous periods.
pub fn optimal_segmentation(
    x: &FlowSeries,
    n_periods: usize,
    cfg: &FitConfig,
) -> Result<SegmentationPlan> {
    let table = CostTable::new(x, cfg)?;
    segment_with_table(&table, n_periods)
}

/// Segmentation from a precomputed table. Among plans whose cost is within
/// round-off of the optimum, the lexicographically smallest switch times win.
pub fn segment_with_table(table: &CostTable, n_periods: usize) -> Result<SegmentationPlan> {
    let (first, last) = (table.first(), table.last());
    let len = last + 1 - first;
    if n_periods == 0 || n_periods > len {
        return Err(Error::Range(format!(
            "period count {n_periods} (must lie in 1..={len})"
        )));
    }
    // g[s][i]: best cost of covering first+i..=last with s+1 periods
    let mut g = vec![vec![f64::INFINITY; len + 1]; n_periods];
    for i in 0..len {
        g[0][i] = table.cost(first + i, last);
    }
    for s in 1..n_periods {
        for i in 0..len {
            // the first period ends at u, leaving s periods for the rest
            let mut best = f64::INFINITY;
            for u in i..len.saturating_sub(s) {
                let c = table.cost(first + i, first + u) + g[s - 1][u + 1];
                if c < best {
                    best = c;
                }
            }
            g[s][i] = best;
        }
    }
    let optimum = g[n_periods - 1][0];
    let eps = 1e-12 * optimum.abs().max(1.0);

    let mut switch_times = Vec::with_capacity(n_periods - 1);
    let mut params = Vec::with_capacity(n_periods);
    let mut total_cost = 0.0;
    let mut start = 0;
    let mut spent = 0.0;
    for s in (1..n_periods).rev() {
        let end = (start..len - s)
            .find(|&u| {
                spent + table.cost(first + start, first + u) + g[s - 1][u + 1] <= optimum + eps
            })
            .expect("an optimal continuation exists");
        let c = table.cost(first + start, first + end);
        spent += c;
        total_cost += c;
        switch_times.push(first + end);
        params.push(table.mu(first + start, first + end).to_vec());
        start = end + 1;
    }
    total_cost += table.cost(first + start, last);
    params.push(table.mu(first + start, last).to_vec());

    Ok(SegmentationPlan {
        first,
        last,
        switch_times,
        params,
        total_cost,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: &[f64]) -> FlowSeries {
        FlowSeries::new(1, 1, values.to_vec()).unwrap()
    }

    #[test]
    fn fit_value_examples() {
        let cfg = FitConfig::new(2.0).unwrap();
        let x = series(&[0.0, 10.0]);
        assert_eq!(fit_value(1, 2, &x, &[4.0], &cfg), 88.0);
        assert_eq!(fit_value(2, 1, &x, &[4.0], &cfg), 0.0);
        let flat = series(&[3.0, 3.0, 3.0]);
        assert_eq!(fit_value(1, 3, &flat, &[3.0], &cfg), 0.0);
    }

    #[test]
    fn segment_cost_examples() {
        let sym = FitConfig::new(1.0).unwrap();
        let (cost, mu) = segment_cost(1, 2, &series(&[3.0, 5.0]), &sym);
        assert_eq!((cost, mu[0]), (2.0, 4.0));

        let asym = FitConfig::new(2.0).unwrap();
        let (cost, mu) = segment_cost(1, 2, &series(&[0.0, 10.0]), &asym);
        assert!((mu[0] - 20.0 / 3.0).abs() < 1e-12);
        assert!((cost - 200.0 / 3.0).abs() < 1e-9);

        for c in [1.0, 2.0, 5.0] {
            let cfg = FitConfig::new(c).unwrap();
            let (cost, mu) = segment_cost(1, 4, &series(&[7.5; 4]), &cfg);
            assert_eq!((cost, mu[0]), (0.0, 7.5));
        }
    }

    #[test]
    fn penalty_below_one_is_rejected() {
        assert!(FitConfig::new(0.5).is_err());
        assert!(FitConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn exact_breakpoints() {
        let x = series(&[0.0, 0.0, 0.0, 9.0, 9.0, 9.0]);
        let plan = optimal_segmentation(&x, 2, &FitConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(plan.switch_times, vec![3]);
        assert_eq!(plan.params, vec![vec![0.0], vec![9.0]]);
        assert_eq!(plan.total_cost, 0.0);
        assert_eq!(plan.periods(), vec![(1, 3), (4, 6)]);
        assert_eq!(plan.period_of(3), 0);
        assert_eq!(plan.period_of(4), 1);
    }

    #[test]
    fn single_period_is_whole_day() {
        let x = series(&[1.0, 4.0, 2.0, 8.0]);
        let cfg = FitConfig::default();
        let plan = optimal_segmentation(&x, 1, &cfg).unwrap();
        let (cost, mu) = segment_cost(1, 4, &x, &cfg);
        assert!(plan.switch_times.is_empty());
        assert_eq!(plan.params, vec![mu]);
        assert_eq!(plan.total_cost, cost);
        assert!(optimal_segmentation(&x, 5, &cfg).is_err());
        assert!(optimal_segmentation(&x, 0, &cfg).is_err());
    }

    #[test]
    fn ties_prefer_earliest_switches() {
        // any split of a constant series costs zero
        let x = series(&[2.0; 5]);
        let plan = optimal_segmentation(&x, 3, &FitConfig::default()).unwrap();
        assert_eq!(plan.switch_times, vec![1, 2]);
    }

    #[test]
    fn table_matches_direct_costs() {
        let x = FlowSeries::new(
            3,
            2,
            (0..16)
                .map(|i| ((i * 7) % 5) as f64 + 0.25 * i as f64)
                .collect(),
        )
        .unwrap();
        let cfg = FitConfig::new(3.0).unwrap();
        let table = CostTable::new(&x, &cfg).unwrap();
        for a in 3..=10 {
            for b in a..=10 {
                let (c, mu) = segment_cost(a, b, &x, &cfg);
                assert_eq!(table.cost(a, b), c);
                assert_eq!(table.mu(a, b), mu.as_slice());
            }
        }
        let plan = segment_with_table(&table, 3).unwrap();
        assert_eq!((plan.first, plan.last), (3, 10));
    }

    #[test]
    fn document_renders_clock_times() {
        let x = series(&[0.0, 0.0, 5.0, 5.0]);
        let plan = optimal_segmentation(&x, 2, &FitConfig::default()).unwrap();
        let doc = plan.to_document(15, &["NBT".to_string()]);
        assert_eq!(doc.switch_clock, vec!["00:30".to_string()]);
        assert_eq!(doc.into_plan().unwrap(), plan);
    }
}
