//! Online predictive time-of-day controller.
//!
//! Near each nominal switch time the controller predicts the rest of the
//! current and next period from the flows measured so far and decides whether
//! switching now beats every later switch time still inside the window.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::{FlowDataset, FlowSeries, SplitSpec};
use crate::pls::{fit_split, PlsDocument, PlsModel};
use crate::segmentation::{fit_value, segment_cost, FitConfig, SegmentationPlan};
use crate::FORMAT_VERSION;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlMode {
    /// Switch times move; parameter vectors stay nominal.
    SegmentationOnly,
    /// Switch times move and the next period's parameters are re-estimated
    /// from the prediction.
    SegmentationAndParams,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    pub window_halfwidth: usize,
    pub mode: ControlMode,
    pub clamp_predictions: bool,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        ControllerConfig {
            window_halfwidth: 3,
            mode: ControlMode::SegmentationAndParams,
            clamp_predictions: true,
        }
    }
}

impl ControllerConfig {
    /// Windows around consecutive switch times may not overlap.
    pub fn validate(&self, plan: &SegmentationPlan) -> Result<()> {
        let h = self.window_halfwidth;
        for pair in plan.switch_times.windows(2) {
            if pair[1] - pair[0] <= 2 * h {
                return Err(Error::Config(format!(
                    "switch windows overlap: switch times {} and {} are not more than {} apart",
                    pair[0],
                    pair[1],
                    2 * h
                )));
            }
        }
        Ok(())
    }
}

/// `{τ−h, …, τ+h} ∩ [1, T−1]`.
pub fn segment_window(tau: usize, halfwidth: usize, horizon: usize) -> Vec<usize> {
    let lo = tau.saturating_sub(halfwidth).max(1);
    let hi = (tau + halfwidth).min(horizon.saturating_sub(1));
    (lo..=hi).collect()
}

/// Best switch time `u ≥ t` within `window` given predicted flows `y_hat` over
/// `t+1..=τ_{i+1}`.
///
/// With `mu_next` the next period keeps that parameter vector; without it the
/// next period's cost is minimised over all parameters. Near-ties go to the
/// earliest `u`. Returns `t` when no window time is `≥ t`.
pub fn t_opt(
    t: usize,
    window: &[usize],
    y_hat: &FlowSeries,
    mu_i: &[f64],
    mu_next: Option<&[f64]>,
    cfg: &FitConfig,
) -> usize {
    let end = y_hat.last();
    let costs: Vec<(usize, f64)> = window
        .iter()
        .copied()
        .filter(|&u| u >= t)
        .map(|u| {
            let current = fit_value(t + 1, u, y_hat, mu_i, cfg);
            let next = match mu_next {
                Some(mu) => fit_value(u + 1, end, y_hat, mu, cfg),
                None => segment_cost(u + 1, end, y_hat, cfg).0,
            };
            (u, current + next)
        })
        .collect();
    let Some(best) = costs.iter().map(|c| c.1).min_by(f64::total_cmp) else {
        return t;
    };
    let eps = 1e-12 * best.abs().max(1.0);
    costs.iter().find(|c| c.1 <= best + eps).map_or(t, |c| c.0)
}

/// Source of predicted flows for the controller.
pub trait FlowPredictor {
    /// Flows over `t+1..=to` for decision `switch` (1-based), given the flows
    /// measured over `1..=t`.
    fn predict(
        &self,
        switch: usize,
        t: usize,
        to: usize,
        measured: &FlowSeries,
    ) -> Result<FlowSeries>;
}

/// Predicts a fixed series, e.g. the true day or the historical mean.
#[derive(Clone, Debug)]
pub struct PerfectForesight {
    series: FlowSeries,
}

impl PerfectForesight {
    pub fn new(series: FlowSeries) -> Self {
        PerfectForesight { series }
    }
}

impl FlowPredictor for PerfectForesight {
    fn predict(
        &self,
        _switch: usize,
        t: usize,
        to: usize,
        _measured: &FlowSeries,
    ) -> Result<FlowSeries> {
        if !self.series.covers(t + 1, to) {
            return Err(Error::Range(format!(
                "foresight series does not cover {}..={to}",
                t + 1
            )));
        }
        Ok(self.series.window(t + 1, to))
    }
}

/// One PLS model per (switch, decision time).
#[derive(Clone, Debug, PartialEq)]
pub struct PlsModelBank {
    n_movements: usize,
    models: BTreeMap<(usize, usize), PlsModel>,
}

impl PlsModelBank {
    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, switch: usize, t: usize) -> Option<&PlsModel> {
        self.models.get(&(switch, t))
    }

    pub fn keys(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.models.keys().copied()
    }

    pub fn to_document(&self) -> BankDocument {
        BankDocument {
            version: FORMAT_VERSION,
            n_movements: self.n_movements,
            entries: self
                .models
                .iter()
                .map(|(&(switch, time), m)| BankEntry {
                    switch,
                    time,
                    model: m.to_document(),
                })
                .collect(),
        }
    }

    pub fn from_document(doc: &BankDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: doc.version,
            });
        }
        let mut models = BTreeMap::new();
        for e in &doc.entries {
            models.insert((e.switch, e.time), PlsModel::from_document(&e.model)?);
        }
        Ok(PlsModelBank {
            n_movements: doc.n_movements,
            models,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankDocument {
    pub version: u32,
    pub n_movements: usize,
    pub entries: Vec<BankEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BankEntry {
    pub switch: usize,
    pub time: usize,
    pub model: PlsDocument,
}

impl FlowPredictor for PlsModelBank {
    fn predict(
        &self,
        switch: usize,
        t: usize,
        to: usize,
        measured: &FlowSeries,
    ) -> Result<FlowSeries> {
        let model = self
            .get(switch, t)
            .ok_or(Error::BankMiss { switch, time: t })?;
        if let Some(split) = model.split() {
            if split.cutoff != t || split.predict_to != to {
                return Err(Error::validation(format!(
                    "bank model ({switch}, {t}) predicts {}..={} from 1..={}, asked for {}..={to}",
                    split.predict_from,
                    split.predict_to,
                    split.cutoff,
                    t + 1
                )));
            }
        }
        if measured.first() != 1 || measured.last() < t {
            return Err(Error::Range(format!("measurements must cover 1..={t}")));
        }
        let z = measured.window(1, t).to_blocks();
        let y = model.predict(&z.into())?;
        Ok(FlowSeries::from_blocks(
            y.as_slice(),
            t + 1,
            to - t,
            self.n_movements,
        ))
    }
}

/// Decision times of every switch paired with the end of the following period.
fn decision_points(plan: &SegmentationPlan, cfg: &ControllerConfig) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for (i, &tau) in plan.switch_times.iter().enumerate() {
        let end = plan.switch_times.get(i + 1).copied().unwrap_or(plan.last);
        for t in segment_window(tau, cfg.window_halfwidth, plan.last) {
            out.push((i + 1, t, end));
        }
    }
    out
}

/// Fits the model for every (switch, decision time) reachable under `cfg`.
pub fn build_model_bank(
    ds: &FlowDataset,
    nominal: &SegmentationPlan,
    cfg: &ControllerConfig,
    n_components: usize,
) -> Result<PlsModelBank> {
    cfg.validate(nominal)?;
    nominal.validate(ds.n_movements())?;
    if nominal.first != 1 || nominal.last != ds.intervals_per_day() {
        return Err(Error::validation(format!(
            "plan covers {}..={} but days have {} intervals",
            nominal.first,
            nominal.last,
            ds.intervals_per_day()
        )));
    }
    let fitted: Result<Vec<_>> = decision_points(nominal, cfg)
        .into_par_iter()
        .map(|(switch, time, end)| {
            fit_split(ds, &SplitSpec::contiguous(time, end), n_components)
                .map(|m| ((switch, time), m))
                .map_err(|e| Error::BankFit {
                    switch,
                    time,
                    source: Box::new(e),
                })
        })
        .collect();
    Ok(PlsModelBank {
        n_movements: ds.n_movements(),
        models: fitted?.into_iter().collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub t: usize,
    pub switch: usize,
    pub t_opt: usize,
    pub committed: bool,
    /// The window ended, leaving `t` as the only choice.
    pub forced: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictivePlan {
    pub first: usize,
    pub last: usize,
    pub switch_times: Vec<usize>,
    pub params: Vec<Vec<f64>>,
    pub decisions: Vec<Decision>,
}

impl PredictivePlan {
    /// The plan as a segmentation, with its cost on `day`.
    pub fn as_segmentation(&self, day: &FlowSeries, cfg: &FitConfig) -> SegmentationPlan {
        let mut plan = SegmentationPlan {
            first: self.first,
            last: self.last,
            switch_times: self.switch_times.clone(),
            params: self.params.clone(),
            total_cost: 0.0,
        };
        plan.total_cost = plan
            .periods()
            .iter()
            .zip(&plan.params)
            .map(|(&(a, b), mu)| fit_value(a, b, day, mu, cfg))
            .sum();
        plan
    }
}

/// Runs the controller over one day.
pub fn run_controller(
    nominal: &SegmentationPlan,
    day: &FlowSeries,
    predictor: &dyn FlowPredictor,
    cfg: &ControllerConfig,
    fit_cfg: &FitConfig,
) -> Result<PredictivePlan> {
    cfg.validate(nominal)?;
    fit_cfg.validate()?;
    nominal.validate(day.n_movements())?;
    if nominal.first != 1 || !day.covers(1, nominal.last) || day.first() != 1 {
        return Err(Error::Range(format!(
            "day flows must cover the plan range 1..={}",
            nominal.last
        )));
    }
    // A zero-width window leaves nothing to decide: the plan stays nominal,
    // parameters included.
    let mode = if cfg.window_halfwidth == 0 {
        ControlMode::SegmentationOnly
    } else {
        cfg.mode
    };
    let horizon = nominal.last;
    let n_switches = nominal.switch_times.len();
    let mut switch_times = Vec::with_capacity(n_switches);
    let mut params = vec![nominal.params[0].clone()];
    let mut decisions = Vec::new();
    let mut i = 0;

    for t in 1..=horizon {
        if i >= n_switches {
            break;
        }
        let window = segment_window(nominal.switch_times[i], cfg.window_halfwidth, horizon);
        if window.first().is_none_or(|&w| t < w) {
            continue;
        }
        let end = nominal.switch_times.get(i + 1).copied().unwrap_or(horizon);
        let mut y_hat = predictor.predict(i + 1, t, end, &day.window(1, t))?;
        if y_hat.first() != t + 1 || y_hat.last() != end || y_hat.n_movements() != day.n_movements()
        {
            return Err(Error::validation(format!(
                "prediction for switch {} at {t} has the wrong shape",
                i + 1
            )));
        }
        if cfg.clamp_predictions {
            y_hat.clamp_nonnegative();
        }
        let (mu_i, mu_next) = match mode {
            ControlMode::SegmentationAndParams => (params[i].as_slice(), None),
            ControlMode::SegmentationOnly => (
                nominal.params[i].as_slice(),
                Some(nominal.params[i + 1].as_slice()),
            ),
        };
        let best = t_opt(t, &window, &y_hat, mu_i, mu_next, fit_cfg);
        let committed = best == t;
        decisions.push(Decision {
            t,
            switch: i + 1,
            t_opt: best,
            committed,
            forced: window.last() == Some(&t),
        });
        if committed {
            switch_times.push(t);
            let next = match mode {
                ControlMode::SegmentationAndParams => segment_cost(t + 1, end, &y_hat, fit_cfg).1,
                ControlMode::SegmentationOnly => nominal.params[i + 1].clone(),
            };
            params.push(next);
            i += 1;
        }
    }

    Ok(PredictivePlan {
        first: 1,
        last: horizon,
        switch_times,
        params,
        decisions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::optimal_segmentation;

    fn series(values: &[f64]) -> FlowSeries {
        FlowSeries::new(1, 1, values.to_vec()).unwrap()
    }

    fn step_day(shift: usize) -> FlowSeries {
        let v: Vec<f64> = (1..=20)
            .map(|t| {
                if (9 + shift..=14 + shift).contains(&t) {
                    100.0
                } else {
                    10.0
                }
            })
            .collect();
        series(&v)
    }

    #[test]
    fn windows() {
        assert_eq!(segment_window(40, 3, 96), (37..=43).collect::<Vec<_>>());
        assert_eq!(segment_window(40, 0, 96), vec![40]);
        assert_eq!(segment_window(2, 3, 96), (1..=5).collect::<Vec<_>>());
        assert_eq!(segment_window(94, 3, 96), (91..=95).collect::<Vec<_>>());
    }

    #[test]
    fn singleton_window_and_empty_feasible_set() {
        let cfg = FitConfig::default();
        let y = series(&[1.0, 50.0, 3.0, 4.0]).window(2, 4);
        assert_eq!(t_opt(1, &[3], &y, &[0.0], None, &cfg), 3);
        assert_eq!(t_opt(4, &[2, 3], &y, &[0.0], None, &cfg), 4);
    }

    #[test]
    fn overlapping_windows_are_rejected() {
        let plan = SegmentationPlan {
            first: 1,
            last: 20,
            switch_times: vec![5, 11],
            params: vec![vec![0.0]; 3],
            total_cost: 0.0,
        };
        let cfg = |h| ControllerConfig {
            window_halfwidth: h,
            ..Default::default()
        };
        assert!(cfg(2).validate(&plan).is_ok());
        assert!(cfg(3).validate(&plan).is_err());
    }

    /// Objective of the switch decision written out with explicit loops.
    fn brute_force(
        t: usize,
        window: &[usize],
        x: &FlowSeries,
        mu_i: f64,
        end: usize,
        c: f64,
    ) -> usize {
        let loss = |a: f64, b: f64| {
            if a > b {
                c * (a - b).powi(2)
            } else {
                (a - b).powi(2)
            }
        };
        let mut best = (usize::MAX, f64::INFINITY);
        for &u in window.iter().filter(|&&u| u >= t) {
            let head: f64 = (t + 1..=u).map(|s| loss(x.at(s)[0], mu_i)).sum();
            let tail = (0..=20000)
                .map(|k| k as f64 * 0.01)
                .map(|mu| (u + 1..=end).map(|s| loss(x.at(s)[0], mu)).sum::<f64>())
                .fold(f64::INFINITY, f64::min);
            if head + tail < best.1 - 1e-6 {
                best = (u, head + tail);
            }
        }
        best.0
    }

    #[test]
    fn late_peak_shifts_switches() {
        let cfg = FitConfig::default();
        let nominal = optimal_segmentation(&step_day(0), 3, &cfg).unwrap();
        assert_eq!(nominal.switch_times, vec![8, 14]);
        let late = step_day(2);
        let window = segment_window(8, 2, 20);
        for t in 6..=10 {
            let y = late.window(t + 1, 14);
            let got = t_opt(t, &window, &y, &nominal.params[0], None, &cfg);
            assert_eq!(
                got,
                brute_force(t, &window, &late, nominal.params[0][0], 14, 2.0)
            );
            assert_eq!(got, 10);
        }
        for mode in [
            ControlMode::SegmentationAndParams,
            ControlMode::SegmentationOnly,
        ] {
            let ctl = ControllerConfig {
                window_halfwidth: 2,
                mode,
                clamp_predictions: true,
            };
            let plan = run_controller(
                &nominal,
                &late,
                &PerfectForesight::new(late.clone()),
                &ctl,
                &cfg,
            )
            .unwrap();
            assert_eq!(plan.switch_times, vec![10, 16]);
            assert!(plan.decisions.iter().all(|d| !d.forced || d.committed));
        }
    }

    #[test]
    fn zero_halfwidth_reproduces_nominal() {
        let cfg = FitConfig::default();
        let nominal = optimal_segmentation(&step_day(0), 3, &cfg).unwrap();
        let ctl = ControllerConfig {
            window_halfwidth: 0,
            ..Default::default()
        };
        let late = step_day(3);
        let plan = run_controller(
            &nominal,
            &late,
            &PerfectForesight::new(late.clone()),
            &ctl,
            &cfg,
        )
        .unwrap();
        assert_eq!(plan.switch_times, nominal.switch_times);
        assert_eq!(plan.params, nominal.params);
        let ctl = ControllerConfig {
            mode: ControlMode::SegmentationOnly,
            ..ctl
        };
        let plan = run_controller(
            &nominal,
            &late,
            &PerfectForesight::new(late.clone()),
            &ctl,
            &cfg,
        )
        .unwrap();
        assert_eq!(plan.params, nominal.params);
        assert!(plan.decisions.iter().all(|d| d.forced && d.committed));
    }

    #[test]
    fn nominal_prediction_keeps_nominal_plan() {
        let x = FlowSeries::new(
            1,
            2,
            (0..40)
                .map(|i| {
                    let t = (i / 2) as f64;
                    let k = (i % 2) as f64;
                    20.0 + 15.0 * (t / 3.0).sin() + 4.0 * k + 0.1 * t * t
                })
                .collect(),
        )
        .unwrap();
        let cfg = FitConfig::default();
        let nominal = optimal_segmentation(&x, 4, &cfg).unwrap();
        let gaps: Vec<usize> = nominal
            .switch_times
            .windows(2)
            .map(|w| w[1] - w[0])
            .collect();
        let h = (gaps.iter().min().unwrap() - 1) / 2;
        let ctl = ControllerConfig {
            window_halfwidth: h,
            ..Default::default()
        };
        let plan =
            run_controller(&nominal, &x, &PerfectForesight::new(x.clone()), &ctl, &cfg).unwrap();
        assert_eq!(plan.switch_times, nominal.switch_times);
        assert_eq!(plan.params, nominal.params);
    }

    #[test]
    fn perfect_foresight_range_is_checked() {
        let p = PerfectForesight::new(series(&[1.0, 2.0]));
        assert!(p.predict(1, 1, 3, &series(&[1.0])).is_err());
        assert_eq!(
            p.predict(1, 1, 2, &series(&[1.0])).unwrap().values(),
            &[2.0]
        );
    }
}
