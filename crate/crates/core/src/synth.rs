//! Deterministic synthetic flow datasets with a planted low-rank structure.
//!
//! Every day is `mean + Σ_i w_i(d) q_i + noise`, clamped at zero. The planted
//! components are orthonormal and each spans both morning and afternoon, so
//! early-day flows carry information about the rest of the day.
//!
//! Randomness comes from ChaCha8 seeded with the configured 64-bit seed.
//! Per day, the component weights are drawn first (uniform on
//! `[−√3 σ_i, √3 σ_i]`), then Gaussian noise for every entry in movement-block
//! order. Values are not rounded; CSV output uses the shortest decimal that
//! round-trips the `f64`.

use chrono::{Days, NaiveDate};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::{DayRecord, FlowDataset, Weekday};
use crate::FORMAT_VERSION;

/// Largest number of planted shapes available.
pub const MAX_COMPONENTS: usize = 4;

const NIGHT_FLOOR: f64 = 45.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileShape {
    BimodalCommute,
    Flat,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Calendar {
    /// Consecutive Monday to Thursday dates.
    MonToThu,
    AllDays,
}

/// A day whose leading weights are fixed to `multipliers[i] · σ_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyDay {
    pub day: usize,
    pub multipliers: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_days: usize,
    pub intervals_per_day: usize,
    pub n_movements: usize,
    pub n_components: usize,
    pub noise_sigma: f64,
    /// Weight standard deviation of each planted component, as a fraction of
    /// the norm of the daytime mean profile.
    pub relative_amplitudes: Vec<f64>,
    pub anomaly_days: Vec<AnomalyDay>,
    pub mean_profile_shape: ProfileShape,
    pub calendar: Calendar,
    pub start_date: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let multipliers = [3.0, -2.5, 3.5, -3.0, 2.5, -3.5, 3.0, -2.5, 3.5, -3.0];
        SynthConfig {
            seed: 2014,
            n_days: 132,
            intervals_per_day: 96,
            n_movements: 12,
            n_components: 4,
            noise_sigma: 10.0,
            relative_amplitudes: vec![0.08, 0.04, 0.05, 0.05],
            anomaly_days: multipliers
                .iter()
                .enumerate()
                .map(|(k, &m)| AnomalyDay {
                    day: 7 + 13 * k,
                    multipliers: vec![m, 0.0, 0.0, 0.0],
                })
                .collect(),
            mean_profile_shape: ProfileShape::BimodalCommute,
            calendar: Calendar::MonToThu,
            start_date: "2014-12-01".to_string(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.n_days == 0 {
            return bad("n_days must be positive".into());
        }
        if self.n_movements == 0 {
            return bad("n_movements must be positive".into());
        }
        if self.intervals_per_day < 4 || 1440 % self.intervals_per_day != 0 {
            return bad(format!(
                "intervals_per_day {} must be at least 4 and divide 1440",
                self.intervals_per_day
            ));
        }
        if self.n_components > MAX_COMPONENTS {
            return bad(format!(
                "at most {MAX_COMPONENTS} planted components, got {}",
                self.n_components
            ));
        }
        if self.relative_amplitudes.len() < self.n_components {
            return bad(format!(
                "{} amplitudes for {} components",
                self.relative_amplitudes.len(),
                self.n_components
            ));
        }
        if self
            .relative_amplitudes
            .iter()
            .any(|a| !(*a >= 0.0 && a.is_finite()))
        {
            return bad("amplitudes must be finite and non-negative".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!(
                "noise_sigma {} must be non-negative",
                self.noise_sigma
            ));
        }
        for a in &self.anomaly_days {
            if a.day >= self.n_days {
                return bad(format!("anomaly day {} outside 0..{}", a.day, self.n_days));
            }
            if a.multipliers.len() > self.n_components {
                return bad(format!(
                    "anomaly day {} has {} multipliers for {} components",
                    a.day,
                    a.multipliers.len(),
                    self.n_components
                ));
            }
        }
        NaiveDate::parse_from_str(&self.start_date, "%Y-%m-%d")
            .map_err(|e| Error::Config(format!("start_date {:?}: {e}", self.start_date)))?;
        Ok(())
    }

    pub fn interval_minutes(&self) -> u32 {
        (1440 / self.intervals_per_day) as u32
    }
}

/// Planted structure behind a generated dataset. Vectors use the dataset's
/// movement-block layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub version: u32,
    pub config: SynthConfig,
    pub mean: Vec<f64>,
    /// Unit-norm, mutually orthogonal.
    pub components: Vec<Vec<f64>>,
    /// Weight standard deviations.
    pub sigmas: Vec<f64>,
    /// `weights[d][i]` multiplies component `i` on day `d`.
    pub weights: Vec<Vec<f64>>,
    /// Entries raised to zero by clamping.
    pub clamped: usize,
}

pub struct SynthOutput {
    pub dataset: FlowDataset,
    pub truth: GroundTruth,
}

/// `NBLT, NBT, NBRT, SBLT, …, WBRT`, then `M13, M14, …`.
pub fn movement_labels(n: usize) -> Vec<String> {
    let mut out = Vec::with_capacity(n);
    for dir in ["NB", "SB", "EB", "WB"] {
        for turn in ["LT", "T", "RT"] {
            out.push(format!("{dir}{turn}"));
        }
    }
    out.truncate(n);
    out.extend((out.len()..n).map(|i| format!("M{}", i + 1)));
    out
}

#[derive(Clone, Copy, PartialEq)]
enum Approach {
    North,
    South,
    EastWest,
    Other,
}

#[derive(Clone, Copy)]
struct Role {
    base: f64,
    approach: Approach,
}

fn role(label: &str) -> Role {
    let base = match label {
        "NBLT" => 90.0,
        "NBT" => 380.0,
        "NBRT" => 95.0,
        "SBLT" => 95.0,
        "SBT" => 400.0,
        "SBRT" => 90.0,
        "EBLT" => 80.0,
        "EBT" => 280.0,
        "EBRT" => 80.0,
        "WBLT" => 70.0,
        "WBT" => 265.0,
        "WBRT" => 75.0,
        _ => 150.0,
    };
    let approach = match label.get(..2) {
        Some("NB") => Approach::North,
        Some("SB") => Approach::South,
        Some("EB") | Some("WB") => Approach::EastWest,
        _ => Approach::Other,
    };
    Role { base, approach }
}

fn bump(h: f64, centre: f64, width: f64) -> f64 {
    (-(h - centre).powi(2) / (2.0 * width * width)).exp()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Daytime activity of a movement at hour `h`, roughly in `[0, 1.4]`.
///
/// `spread` widens both commute peaks; `midday` weights the daytime plateau.
fn activity(h: f64, shape: ProfileShape, approach: Approach, spread: f64, midday: f64) -> f64 {
    if shape == ProfileShape::Flat {
        return 0.6;
    }
    let am = bump(h, 8.0, 0.7 * spread);
    let pm = bump(h, 17.0, 1.1 * spread);
    let day = midday * logistic((h - 5.25) / 0.5) * logistic((21.0 - h) / 0.7);
    let (a, p, d) = match approach {
        Approach::North => (1.0, 0.55, 0.35),
        Approach::South => (0.55, 1.0, 0.35),
        Approach::EastWest => (0.4, 0.45, 0.7),
        Approach::Other => (0.7, 0.7, 0.5),
    };
    a * am + p * pm + d * day
}

fn sample(cfg: &SynthConfig, roles: &[Role], f: &dyn Fn(&Role, f64) -> f64) -> Vec<f64> {
    let t_len = cfg.intervals_per_day;
    let mut v = Vec::with_capacity(t_len * roles.len());
    for r in roles {
        v.extend((0..t_len).map(|t| f(r, (t as f64 + 0.5) * 24.0 / t_len as f64)));
    }
    v
}

/// Mean flows above the night floor.
fn daytime_mean(cfg: &SynthConfig, roles: &[Role]) -> Vec<f64> {
    let shape = cfg.mean_profile_shape;
    sample(cfg, roles, &|r, h| {
        r.base * activity(h, shape, r.approach, 1.0, 1.0)
    })
}

/// Raw, unnormalised component shapes.
fn raw_shapes(cfg: &SynthConfig, roles: &[Role]) -> Vec<Vec<f64>> {
    let build = |f: &dyn Fn(&Role, f64) -> f64| sample(cfg, roles, f);
    let shape = cfg.mean_profile_shape;
    vec![
        // commute volume, with peaks wider than the mean's
        build(&|r, h| r.base * activity(h, shape, r.approach, 1.6, 0.5)),
        // school arrivals and dismissals, mostly southbound
        build(&|r, h| {
            let k = if r.approach == Approach::South {
                1.0
            } else {
                0.25
            };
            k * r.base * (bump(h, 7.5, 0.35) + bump(h, 15.5, 0.35))
        }),
        // long evening with a small morning precursor
        build(&|r, h| r.base * (bump(h, 18.75, 1.0) + 0.4 * bump(h, 8.5, 0.7))),
        // tidal: northbound morning, southbound afternoon
        build(&|r, h| {
            let am = if r.approach == Approach::North {
                bump(h, 7.5, 0.9)
            } else {
                0.0
            };
            let pm = if r.approach == Approach::South {
                bump(h, 17.0, 1.1)
            } else {
                0.0
            };
            r.base * (am + pm)
        }),
    ]
}

/// Orthonormalises in order with two passes of modified Gram-Schmidt.
fn orthonormalise(shapes: Vec<Vec<f64>>) -> Result<Vec<DVector<f64>>> {
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(shapes.len());
    for (i, s) in shapes.into_iter().enumerate() {
        let mut v = DVector::from_vec(s);
        let norm0 = v.norm();
        for _ in 0..2 {
            for q in &out {
                let d = q.dot(&v);
                v -= q * d;
            }
        }
        let norm = v.norm();
        if norm <= 1e-6 * norm0 || norm == 0.0 {
            return Err(Error::Config(format!(
                "planted component {} is degenerate for this profile shape",
                i + 1
            )));
        }
        out.push(v / norm);
    }
    Ok(out)
}

fn dates(cfg: &SynthConfig) -> Result<Vec<DayRecord>> {
    let start = NaiveDate::parse_from_str(&cfg.start_date, "%Y-%m-%d")
        .map_err(|e| Error::Config(format!("start_date: {e}")))?;
    let mut out = Vec::with_capacity(cfg.n_days);
    let mut date = start;
    while out.len() < cfg.n_days {
        let keep = match cfg.calendar {
            Calendar::AllDays => true,
            Calendar::MonToThu => Weekday::MON_TO_THU.contains(&Weekday::of(date)),
        };
        if keep {
            out.push(DayRecord::from_date(date));
        }
        date = date
            .checked_add_days(Days::new(1))
            .ok_or_else(|| Error::Config("calendar overflow".into()))?;
    }
    Ok(out)
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let labels = movement_labels(cfg.n_movements);
    let roles: Vec<Role> = labels.iter().map(|l| role(l)).collect();
    let shapes = raw_shapes(cfg, &roles);
    let daytime = daytime_mean(cfg, &roles);
    let scale = DVector::from_column_slice(&daytime).norm();
    let mean: Vec<f64> = daytime.iter().map(|v| NIGHT_FLOOR + v).collect();
    let components = orthonormalise(shapes.into_iter().take(cfg.n_components).collect())?;
    let sigmas: Vec<f64> = cfg.relative_amplitudes[..cfg.n_components]
        .iter()
        .map(|a| a * scale)
        .collect();

    let width = mean.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.noise_sigma).map_err(|e| Error::Config(e.to_string()))?;
    let mut flows = DMatrix::zeros(cfg.n_days, width);
    let mut weights = vec![vec![0.0; cfg.n_components]; cfg.n_days];
    let mut clamped = 0;

    for (d, w) in weights.iter_mut().enumerate() {
        for (wi, s) in w.iter_mut().zip(&sigmas) {
            *wi = s * 3f64.sqrt() * (2.0 * rng.random::<f64>() - 1.0);
        }
        if let Some(a) = cfg.anomaly_days.iter().rev().find(|a| a.day == d) {
            for (i, m) in a.multipliers.iter().enumerate() {
                w[i] = m * sigmas[i];
            }
        }
        let mut row = DVector::from_column_slice(&mean);
        for (wi, q) in w.iter().zip(&components) {
            row.axpy(*wi, q, 1.0);
        }
        for (j, v) in row.iter_mut().enumerate() {
            if cfg.noise_sigma > 0.0 {
                *v += noise.sample(&mut rng);
            }
            if *v < 0.0 {
                *v = 0.0;
                clamped += 1;
            }
            flows[(d, j)] = *v;
        }
    }
    if clamped > 0 {
        log::info!(
            "clamped {clamped} of {} synthetic entries at zero",
            cfg.n_days * width
        );
    }

    let dataset = FlowDataset::new(dates(cfg)?, flows, cfg.interval_minutes(), labels)?;
    let truth = GroundTruth {
        version: FORMAT_VERSION,
        config: cfg.clone(),
        mean,
        components: components.iter().map(|c| c.as_slice().to_vec()).collect(),
        sigmas,
        weights,
        clamped,
    };
    Ok(SynthOutput { dataset, truth })
}

impl GroundTruth {
    pub fn weight_matrix(&self) -> DMatrix<f64> {
        let n = self.components.len();
        DMatrix::from_fn(self.weights.len(), n, |d, i| self.weights[d][i])
    }
}
