//! End-to-end evaluation: nominal plan, predictive control in both modes, and
//! the four delay scenarios for a day.

use serde::{Deserialize, Serialize};

use crate::controller::{
    build_model_bank, run_controller, ControlMode, ControllerConfig, PlsModelBank, PredictivePlan,
};
use crate::delay::{lower_bound_delay, simulate_day, DayDelay, IntersectionConfig};
use crate::flowdata::{mean_profile, FlowDataset, FlowSeries};
use crate::pls::DEFAULT_COMPONENTS;
use crate::segmentation::{optimal_segmentation, FitConfig, SegmentationPlan};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub n_periods: usize,
    pub fit: FitConfig,
    /// `mode` is ignored: both modes are always run.
    pub controller: ControllerConfig,
    pub n_components: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            n_periods: 7,
            fit: FitConfig::default(),
            controller: ControllerConfig::default(),
            n_components: DEFAULT_COMPONENTS,
        }
    }
}

impl EvalConfig {
    fn with_mode(&self, mode: ControlMode) -> ControllerConfig {
        ControllerConfig {
            mode,
            ..self.controller
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub date: String,
    pub predictive_seg: PredictivePlan,
    pub predictive_seg_params: PredictivePlan,
    pub delay: DayDelay,
}

/// Optimal segmentation of the dataset's mean day.
pub fn nominal_plan(
    ds: &FlowDataset,
    n_periods: usize,
    fit: &FitConfig,
) -> Result<SegmentationPlan> {
    let mean = FlowSeries::from_day_vector(
        mean_profile(ds).as_slice(),
        ds.intervals_per_day(),
        ds.n_movements(),
    );
    optimal_segmentation(&mean, n_periods, fit)
}

/// Runs both controller modes on `day` and evaluates all four scenarios.
pub fn evaluate_day(
    date: &str,
    day: &FlowSeries,
    nominal: &SegmentationPlan,
    bank: &PlsModelBank,
    cfg: &EvalConfig,
    ic: &IntersectionConfig,
) -> Result<DayOutcome> {
    let seg = run_controller(
        nominal,
        day,
        bank,
        &cfg.with_mode(ControlMode::SegmentationOnly),
        &cfg.fit,
    )?;
    let par = run_controller(
        nominal,
        day,
        bank,
        &cfg.with_mode(ControlMode::SegmentationAndParams),
        &cfg.fit,
    )?;
    let delay = DayDelay {
        date: date.to_string(),
        nominal: simulate_day(day, nominal, ic)?,
        predictive_seg: simulate_day(day, &seg, ic)?,
        predictive_seg_params: simulate_day(day, &par, ic)?,
        lower_bound: lower_bound_delay(day, ic)?,
    };
    Ok(DayOutcome {
        date: date.to_string(),
        predictive_seg: seg,
        predictive_seg_params: par,
        delay,
    })
}

/// Evaluates day `d` with the nominal plan and model bank learned from the
/// other days only.
pub fn evaluate_holdout(
    ds: &FlowDataset,
    d: usize,
    cfg: &EvalConfig,
    ic: &IntersectionConfig,
) -> Result<DayOutcome> {
    let train = ds.without_day(d);
    let nominal = nominal_plan(&train, cfg.n_periods, &cfg.fit)?;
    let bank = build_model_bank(&train, &nominal, &cfg.controller, cfg.n_components)?;
    evaluate_day(
        &ds.days()[d].date,
        &ds.day_series(d),
        &nominal,
        &bank,
        cfg,
        ic,
    )
}
