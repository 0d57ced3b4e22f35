//! Signalised-intersection delay model, delay-minimising green splits, and
//! day-long delay evaluation of time-of-day schedules.
//!
//! Control delay per vehicle follows the usual uniform plus incremental form
//! with progression factor 1, `k = 0.5` and `I = 1`:
//!
//! ```text
//! d1 = 0.5 C (1 − g)² / (1 − min(1, X) g)
//! d2 = 900 T [(X − 1) + √((X − 1)² + 8 k I X / (c T))]
//! ```
//!
//! where `c = s g` is the movement capacity and `X = q / c`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::controller::PredictivePlan;
use crate::error::{Error, Result};
use crate::flowdata::FlowSeries;
use crate::segmentation::SegmentationPlan;

const K_INCREMENTAL: f64 = 0.5;
const I_UPSTREAM: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    /// 0-based movement indices served by this phase.
    pub movements: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntersectionConfig {
    pub phases: Vec<Phase>,
    /// Saturation flow per movement, vph.
    pub saturation_flow: Vec<f64>,
    pub cycle_seconds: f64,
    pub lost_time_seconds: f64,
    pub min_green_fraction: f64,
    pub poisson_inflation: f64,
    pub analysis_period_hours: f64,
}

impl IntersectionConfig {
    /// Four phases (N/S through and right, N/S left, E/W through and right,
    /// E/W left) built from movement labels such as `NBLT`, `SBT`, `EBRT`.
    pub fn four_phase(movements: &[String], interval_minutes: u32) -> Result<Self> {
        let names = ["NS through", "NS left", "EW through", "EW left"];
        let mut groups: [Vec<usize>; 4] = Default::default();
        for (i, label) in movements.iter().enumerate() {
            let upper = label.to_ascii_uppercase();
            let (dir, turn) = upper.split_at(upper.len().min(2));
            let axis = match dir {
                "NB" | "SB" => 0,
                "EB" | "WB" => 2,
                _ => return Err(unknown_label(label)),
            };
            let left = match turn.trim_start_matches(['_', '-', ' ']) {
                "LT" | "L" => 1,
                "T" | "TH" | "RT" | "R" => 0,
                _ => return Err(unknown_label(label)),
            };
            groups[axis + left].push(i);
        }
        let phases = groups
            .into_iter()
            .zip(names)
            .filter(|(g, _)| !g.is_empty())
            .map(|(movements, name)| Phase {
                name: name.to_string(),
                movements,
            })
            .collect();
        let cfg = IntersectionConfig {
            phases,
            saturation_flow: vec![1800.0; movements.len()],
            cycle_seconds: 120.0,
            lost_time_seconds: 16.0,
            min_green_fraction: 0.07,
            poisson_inflation: 1.10,
            analysis_period_hours: f64::from(interval_minutes) / 60.0,
        };
        cfg.validate(movements.len())?;
        Ok(cfg)
    }

    /// Effective green available to all phases, `1 − L/C`.
    pub fn effective_green(&self) -> f64 {
        1.0 - self.lost_time_seconds / self.cycle_seconds
    }

    pub fn validate(&self, n_movements: usize) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.phases.is_empty() {
            return bad("intersection needs at least one phase".into());
        }
        if self.saturation_flow.len() != n_movements {
            return bad(format!(
                "{} saturation flows for {n_movements} movements",
                self.saturation_flow.len()
            ));
        }
        if self
            .saturation_flow
            .iter()
            .any(|s| !(*s > 0.0 && s.is_finite()))
        {
            return bad("saturation flows must be positive".into());
        }
        let mut owner = vec![None; n_movements];
        for (p, phase) in self.phases.iter().enumerate() {
            for &m in &phase.movements {
                match owner.get_mut(m) {
                    None => return bad(format!("phase {} lists unknown movement {m}", phase.name)),
                    Some(Some(_)) => {
                        return bad(format!("movement {m} belongs to more than one phase"))
                    }
                    Some(slot) => *slot = Some(p),
                }
            }
        }
        if let Some(m) = owner.iter().position(Option::is_none) {
            return bad(format!("movement {m} is not served by any phase"));
        }
        if !(self.cycle_seconds > 0.0 && self.cycle_seconds.is_finite()) {
            return bad(format!(
                "cycle length {} must be positive",
                self.cycle_seconds
            ));
        }
        if !(self.lost_time_seconds >= 0.0 && self.lost_time_seconds < self.cycle_seconds) {
            return bad(format!(
                "lost time {} must lie in [0, cycle length)",
                self.lost_time_seconds
            ));
        }
        if !(self.min_green_fraction > 0.0) {
            return bad("minimum green fraction must be positive".into());
        }
        if self.phases.len() as f64 * self.min_green_fraction > self.effective_green() + 1e-12 {
            return bad(format!(
                "minimum greens ({} x {}) exceed the effective green {}",
                self.phases.len(),
                self.min_green_fraction,
                self.effective_green()
            ));
        }
        if !(self.poisson_inflation >= 1.0 && self.poisson_inflation.is_finite()) {
            return bad(format!("inflation {} must be >= 1", self.poisson_inflation));
        }
        if !(self.analysis_period_hours > 0.0 && self.analysis_period_hours.is_finite()) {
            return bad("analysis period must be positive".into());
        }
        Ok(())
    }
}

fn unknown_label(label: &str) -> Error {
    Error::Config(format!(
        "cannot place movement {label:?} in the default phases; configure phases explicitly"
    ))
}

/// Control delay in seconds per vehicle.
pub fn movement_delay(flow: f64, sat: f64, green_fraction: f64, ic: &IntersectionConfig) -> f64 {
    let g = green_fraction;
    let capacity = sat * g;
    let x = flow / capacity;
    let d1 = if g >= 1.0 {
        0.0
    } else {
        0.5 * ic.cycle_seconds * (1.0 - g).powi(2) / (1.0 - x.min(1.0) * g)
    };
    let t = ic.analysis_period_hours;
    let d2 = 900.0
        * t
        * ((x - 1.0)
            + ((x - 1.0).powi(2) + 8.0 * K_INCREMENTAL * I_UPSTREAM * x / (capacity * t)).sqrt());
    d1 + d2
}

/// Green fractions per phase.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Splits {
    pub green: Vec<f64>,
    /// Some movement cannot be served even at the largest feasible green.
    pub saturated: bool,
    /// `Σ q·d` at the optimum, vehicle-seconds per hour.
    pub objective: f64,
}

fn phase_cost(phase: &Phase, g: f64, demand: &[f64], ic: &IntersectionConfig) -> f64 {
    phase
        .movements
        .iter()
        .filter(|&&m| demand[m] > 0.0)
        .map(|&m| demand[m] * movement_delay(demand[m], ic.saturation_flow[m], g, ic))
        .sum()
}

fn total_cost(green: &[f64], demand: &[f64], ic: &IntersectionConfig) -> f64 {
    ic.phases
        .iter()
        .zip(green)
        .map(|(p, &g)| phase_cost(p, g, demand, ic))
        .sum()
}

const GOLDEN: f64 = 0.618_033_988_749_894_8;

/// Minimises `f` on `[lo, hi]`: coarse grid, then golden section around the
/// best grid point.
fn line_search(f: impl Fn(f64) -> f64, lo: f64, hi: f64) -> (f64, f64) {
    const GRID: usize = 50;
    if hi - lo <= 0.0 {
        return (lo, f(lo));
    }
    let step = (hi - lo) / GRID as f64;
    let mut best = (lo, f(lo));
    let mut best_k = 0;
    for k in 1..=GRID {
        let x = if k == GRID { hi } else { lo + step * k as f64 };
        let v = f(x);
        if v < best.1 {
            best = (x, v);
            best_k = k;
        }
    }
    let mut a = if best_k == 0 {
        lo
    } else {
        lo + step * (best_k - 1) as f64
    };
    let mut b = if best_k == GRID {
        hi
    } else {
        lo + step * (best_k + 1) as f64
    };
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > 1e-12 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    if fm < best.1 {
        (mid, fm)
    } else {
        best
    }
}

/// Delay-minimising splits for `demand` (already inflated if desired).
pub fn optimal_splits(demand: &[f64], ic: &IntersectionConfig) -> Result<Splits> {
    ic.validate(demand.len())?;
    if demand.iter().any(|q| !(*q >= 0.0 && q.is_finite())) {
        return Err(Error::validation("demand must be finite and non-negative"));
    }
    let n = ic.phases.len();
    let total = ic.effective_green();
    let gmin = ic.min_green_fraction;
    let mut green = vec![total / n as f64; n];
    let mut value = total_cost(&green, demand, ic);

    for _ in 0..200 {
        let before = value;
        for p in 0..n {
            for r in p + 1..n {
                let pool = green[p] + green[r];
                let cost_of = |gp: f64| {
                    phase_cost(&ic.phases[p], gp, demand, ic)
                        + phase_cost(&ic.phases[r], pool - gp, demand, ic)
                };
                let current = cost_of(green[p]);
                let (gp, v) = line_search(cost_of, gmin, pool - gmin);
                if v < current {
                    green[p] = gp;
                    green[r] = pool - gp;
                }
            }
        }
        value = total_cost(&green, demand, ic);
        if before - value <= 1e-12 * value.max(1.0) {
            break;
        }
    }

    let widest = total - (n - 1) as f64 * gmin;
    let saturated = ic
        .phases
        .iter()
        .flat_map(|p| p.movements.iter())
        .any(|&m| demand[m] >= ic.saturation_flow[m] * widest);
    Ok(Splits {
        green,
        saturated,
        objective: value,
    })
}

/// Splits for a period's parameter vector, with demand inflated for random
/// arrivals.
pub fn green_splits(mu: &[f64], ic: &IntersectionConfig) -> Result<Splits> {
    let demand: Vec<f64> = mu.iter().map(|q| q * ic.poisson_inflation).collect();
    optimal_splits(&demand, ic)
}

/// Delay rate (vehicle-hours per hour) of `flows` under fixed splits.
pub fn delay_rate(flows: &[f64], green: &[f64], ic: &IntersectionConfig) -> f64 {
    total_cost(green, flows, ic) / 3600.0
}

/// Anything that assigns a parameter vector to each period of the day.
pub trait TodSchedule {
    fn switch_times(&self) -> &[usize];
    fn params(&self) -> &[Vec<f64>];
}

impl TodSchedule for SegmentationPlan {
    fn switch_times(&self) -> &[usize] {
        &self.switch_times
    }

    fn params(&self) -> &[Vec<f64>] {
        &self.params
    }
}

impl TodSchedule for PredictivePlan {
    fn switch_times(&self) -> &[usize] {
        &self.switch_times
    }

    fn params(&self) -> &[Vec<f64>] {
        &self.params
    }
}

/// Per-interval delay rates and their integral over the day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDelay {
    pub rates: Vec<f64>,
    /// Vehicle-hours.
    pub total: f64,
    /// Some period's splits could not serve its demand.
    pub saturated: bool,
}

impl ScenarioDelay {
    fn from_rates(rates: Vec<f64>, hours: f64, saturated: bool) -> Self {
        let total = rates.iter().map(|r| r * hours).sum();
        ScenarioDelay {
            rates,
            total,
            saturated,
        }
    }
}

/// Fixed-time control within each period, splits designed from the period's
/// parameter vector.
pub fn simulate_day(
    day: &FlowSeries,
    plan: &dyn TodSchedule,
    ic: &IntersectionConfig,
) -> Result<ScenarioDelay> {
    let params = plan.params();
    let switches = plan.switch_times();
    if params.len() != switches.len() + 1 {
        return Err(Error::validation(
            "schedule needs one parameter vector per period",
        ));
    }
    let splits = params
        .iter()
        .map(|mu| green_splits(mu, ic))
        .collect::<Result<Vec<_>>>()?;
    let rates = (day.first()..=day.last())
        .map(|t| {
            let period = switches.partition_point(|&tau| tau < t);
            delay_rate(day.at(t), &splits[period].green, ic)
        })
        .collect();
    Ok(ScenarioDelay::from_rates(
        rates,
        ic.analysis_period_hours,
        splits.iter().any(|s| s.saturated),
    ))
}

/// Splits re-optimised for the true flows of every interval.
pub fn lower_bound_delay(day: &FlowSeries, ic: &IntersectionConfig) -> Result<ScenarioDelay> {
    let mut rates = Vec::with_capacity(day.len());
    let mut saturated = false;
    for t in day.first()..=day.last() {
        let s = optimal_splits(day.at(t), ic)?;
        saturated |= s.saturated;
        rates.push(s.objective / 3600.0);
    }
    Ok(ScenarioDelay::from_rates(
        rates,
        ic.analysis_period_hours,
        saturated,
    ))
}

/// The four evaluated scenarios for one day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayDelay {
    pub date: String,
    pub nominal: ScenarioDelay,
    pub predictive_seg: ScenarioDelay,
    pub predictive_seg_params: ScenarioDelay,
    pub lower_bound: ScenarioDelay,
}

impl DayDelay {
    pub fn improvement_seg(&self) -> f64 {
        self.nominal.total - self.predictive_seg.total
    }

    pub fn improvement_seg_params(&self) -> f64 {
        self.nominal.total - self.predictive_seg_params.total
    }
}

/// Mean daily totals over a set of days, in vehicle-hours.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayTable {
    pub days: usize,
    pub nominal: f64,
    pub predictive_seg: f64,
    pub predictive_seg_params: f64,
    pub lower_bound: f64,
    pub improvement_seg: f64,
    pub improvement_seg_params: f64,
}

impl DelayTable {
    pub fn from_days(days: &[DayDelay]) -> Self {
        let n = days.len();
        let mean = |f: &dyn Fn(&DayDelay) -> f64| {
            if n == 0 {
                0.0
            } else {
                days.iter().map(f).sum::<f64>() / n as f64
            }
        };
        DelayTable {
            days: n,
            nominal: mean(&|d| d.nominal.total),
            predictive_seg: mean(&|d| d.predictive_seg.total),
            predictive_seg_params: mean(&|d| d.predictive_seg_params.total),
            lower_bound: mean(&|d| d.lower_bound.total),
            improvement_seg: mean(&|d| d.improvement_seg()),
            improvement_seg_params: mean(&|d| d.improvement_seg_params()),
        }
    }
}

/// Per-interval rates: `date,interval,nominal,predictive_seg,predictive_seg_params,lower_bound`.
pub fn write_rates_csv<W: Write>(
    days: &[DayDelay],
    first_interval: usize,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "date",
        "interval",
        "nominal",
        "predictive_seg",
        "predictive_seg_params",
        "lower_bound",
    ])?;
    for d in days {
        for (i, rate) in d.nominal.rates.iter().enumerate() {
            out.write_record([
                d.date.clone(),
                (first_interval + i).to_string(),
                rate.to_string(),
                d.predictive_seg.rates[i].to_string(),
                d.predictive_seg_params.rates[i].to_string(),
                d.lower_bound.rates[i].to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
