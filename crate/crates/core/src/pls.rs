//! Projection to latent structures: correlated predictor/predicted
//! components learned from early-day (`Z`) and later-day (`Y`) flows, and the
//! linear predictor built on them.
//!
//! Two fitting routes produce the same model up to floating-point error:
//!
//! * [`fit_pls`] forms the cross-product `Z̃ᵀỸ` at every step and takes its
//!   leading left singular vector.
//! * [`fit_pls_kernel`] works only with the `D × D` kernels `Z̃Z̃ᵀ` and `ỸỸᵀ`;
//!   each score vector is the dominant eigenvector of their product. This is
//!   the route to use when `D` is much smaller than the flow dimensions.
//!
//! Both deflate with the score vector, `Z̃ ← Z̃ − ω pᵀ` and `Ỹ ← Ỹ − ω cᵀ`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::{column_means, split_at, FlowDataset, SplitSpec};
use crate::linalg::{deflate_kernel, dominant_eigenpair, first_significant, PowerIteration};
use crate::lowrank::{columns, from_columns};
use crate::FORMAT_VERSION;

/// Default number of predictor/predicted component pairs.
pub const DEFAULT_COMPONENTS: usize = 4;

/// A direction counts as degenerate once the leading cross-covariance singular
/// value falls below this fraction of `‖Z̃‖_F ‖Ỹ‖_F`.
const DEGENERATE_REL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    Direct,
    Kernel,
}

/// Bookkeeping from a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitInfo {
    pub method: FitMethod,
    pub requested_components: usize,
    /// 1 when the fit stopped early on a degenerate direction.
    pub degenerate_stops: usize,
    /// Frobenius norm of the predictor residual after the last deflation.
    pub residual_norm: f64,
    /// Largest dense matrix product formed while fitting, as (rows, cols).
    pub largest_product: (usize, usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlsModel {
    predictor_components: DMatrix<f64>,
    predicted_components: DMatrix<f64>,
    scores: DMatrix<f64>,
    mean_z: DVector<f64>,
    mean_y: DVector<f64>,
    split: Option<SplitSpec>,
    pinv_pt: DMatrix<f64>,
    info: FitInfo,
}

struct Components {
    p: Vec<DVector<f64>>,
    c: Vec<DVector<f64>>,
    omega: Vec<DVector<f64>>,
    degenerate: bool,
}

impl Components {
    fn new() -> Self {
        Components {
            p: Vec::new(),
            c: Vec::new(),
            omega: Vec::new(),
            degenerate: false,
        }
    }

    /// Orients the triple so the first significant entry of `p` is positive.
    fn push(&mut self, mut omega: DVector<f64>, mut p: DVector<f64>, mut c: DVector<f64>) {
        if let Some(i) = first_significant(p.as_slice(), 1e-10) {
            if p[i] < 0.0 {
                omega.neg_mut();
                p.neg_mut();
                c.neg_mut();
            }
        }
        self.omega.push(omega);
        self.p.push(p);
        self.c.push(c);
    }
}

fn check_inputs(z: &DMatrix<f64>, y: &DMatrix<f64>, n_components: usize) -> Result<()> {
    if z.nrows() != y.nrows() {
        return Err(Error::Dimension {
            what: "rows of Y (days)",
            expected: z.nrows(),
            found: y.nrows(),
        });
    }
    let d = z.nrows();
    if d < 2 {
        return Err(Error::Range(format!("PLS needs at least 2 days, got {d}")));
    }
    if z.ncols() == 0 || y.ncols() == 0 {
        return Err(Error::validation(
            "PLS needs non-empty predictor and predicted blocks",
        ));
    }
    if n_components == 0 || n_components > d - 1 {
        return Err(Error::Range(format!(
            "n_components {n_components} (must lie in 1..={})",
            d - 1
        )));
    }
    Ok(())
}

fn centered(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mean = column_means(m);
    let mut out = m.clone();
    for mut row in out.row_iter_mut() {
        row -= mean.transpose();
    }
    (mean, out)
}

/// Fits by SVD of the explicitly formed cross-product `Z̃ᵀỸ`.
pub fn fit_pls(z: &DMatrix<f64>, y: &DMatrix<f64>, n_components: usize) -> Result<PlsModel> {
    check_inputs(z, y, n_components)?;
    let (mean_z, z0) = centered(z);
    let (mean_y, y0) = centered(y);
    let tol = DEGENERATE_REL * z0.norm() * y0.norm();
    let mut zt = z0.clone();
    let mut yt = y0;
    let mut comps = Components::new();
    let mut largest = (0, 0);

    for _ in 0..n_components {
        let cross = zt.tr_mul(&yt);
        largest = larger(largest, cross.shape());
        let svd = cross.svd(true, false);
        let sigma = &svd.singular_values;
        let Some(lead) = (0..sigma.len()).max_by(|&a, &b| sigma[a].total_cmp(&sigma[b])) else {
            comps.degenerate = true;
            break;
        };
        if sigma[lead] <= tol || tol == 0.0 {
            comps.degenerate = true;
            break;
        }
        let r = svd
            .u
            .as_ref()
            .expect("left vectors requested")
            .column(lead)
            .into_owned();
        let t = &zt * r;
        let t_norm = t.norm();
        if t_norm <= DEGENERATE_REL * z0.norm() {
            comps.degenerate = true;
            break;
        }
        let omega = t / t_norm;
        let p = zt.tr_mul(&omega);
        let c = yt.tr_mul(&omega);
        zt -= &omega * p.transpose();
        yt -= &omega * c.transpose();
        comps.push(omega, p, c);
    }
    finish(
        comps,
        mean_z,
        mean_y,
        &zt,
        FitMethod::Direct,
        n_components,
        largest,
    )
}

/// Fits with `D × D` kernel matrices only.
pub fn fit_pls_kernel(z: &DMatrix<f64>, y: &DMatrix<f64>, n_components: usize) -> Result<PlsModel> {
    check_inputs(z, y, n_components)?;
    let (mean_z, z0) = centered(z);
    let (mean_y, y0) = centered(y);
    let d = z0.nrows();
    let mut kz = &z0 * z0.transpose();
    let mut ky = &y0 * y0.transpose();
    let scale = kz.trace() * ky.trace();
    let tol = DEGENERATE_REL * DEGENERATE_REL * scale;
    let mut largest = (d, d);
    let mut comps = Components::new();

    for _ in 0..n_components {
        if scale == 0.0 {
            comps.degenerate = true;
            break;
        }
        let pair = dominant_eigenpair(|x| &kz * (&ky * x), d, scale, PowerIteration::default());
        let Some(pair) = pair.filter(|p| p.value > tol) else {
            comps.degenerate = true;
            break;
        };
        // Re-orthogonalise against earlier scores to remove drift.
        let mut omega = pair.vector;
        for prev in &comps.omega {
            let overlap = prev.dot(&omega);
            omega -= prev * overlap;
        }
        let norm = omega.norm();
        if norm <= 1e-8 {
            comps.degenerate = true;
            break;
        }
        omega /= norm;
        // Earlier deflations are orthogonal to ω, so the undeflated blocks give
        // the same loadings.
        let p = z0.tr_mul(&omega);
        let c = y0.tr_mul(&omega);
        largest = larger(largest, (p.len(), 1));
        kz = deflate_kernel(&kz, &omega);
        ky = deflate_kernel(&ky, &omega);
        comps.push(omega, p, c);
    }

    let mut residual = z0;
    for (omega, p) in comps.omega.iter().zip(&comps.p) {
        residual -= omega * p.transpose();
    }
    finish(
        comps,
        mean_z,
        mean_y,
        &residual,
        FitMethod::Kernel,
        n_components,
        largest,
    )
}

fn larger(a: (usize, usize), b: (usize, usize)) -> (usize, usize) {
    if b.0 * b.1 > a.0 * a.1 {
        b
    } else {
        a
    }
}

fn stack(cols: &[DVector<f64>], rows: usize) -> DMatrix<f64> {
    if cols.is_empty() {
        DMatrix::zeros(rows, 0)
    } else {
        DMatrix::from_columns(cols)
    }
}

fn finish(
    comps: Components,
    mean_z: DVector<f64>,
    mean_y: DVector<f64>,
    residual: &DMatrix<f64>,
    method: FitMethod,
    requested: usize,
    largest_product: (usize, usize),
) -> Result<PlsModel> {
    if comps.degenerate {
        log::warn!(
            "PLS fit stopped after {} of {requested} components: degenerate direction",
            comps.p.len()
        );
    }
    let p = stack(&comps.p, mean_z.len());
    let c = stack(&comps.c, mean_y.len());
    let scores = stack(&comps.omega, residual.nrows());
    let pinv_pt = pseudo_inverse_of_transpose(&p)?;
    Ok(PlsModel {
        predictor_components: p,
        predicted_components: c,
        scores,
        mean_z,
        mean_y,
        split: None,
        pinv_pt,
        info: FitInfo {
            method,
            requested_components: requested,
            degenerate_stops: usize::from(comps.degenerate),
            residual_norm: residual.norm(),
            largest_product,
        },
    })
}

/// Moore–Penrose pseudoinverse of `Pᵀ`, shaped `dim_z × N`.
fn pseudo_inverse_of_transpose(p: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if p.ncols() == 0 {
        return Ok(DMatrix::zeros(p.nrows(), 0));
    }
    let eps = 1e-12 * p.norm();
    p.transpose()
        .pseudo_inverse(eps)
        .map_err(|e| Error::validation(format!("pseudoinverse failed: {e}")))
}

impl PlsModel {
    /// Attaches the split that produced `Z` and `Y`.
    pub fn with_split(mut self, split: SplitSpec) -> Self {
        self.split = Some(split);
        self
    }

    pub fn split(&self) -> Option<&SplitSpec> {
        self.split.as_ref()
    }

    /// `P`, one predictor component per column.
    pub fn predictor_components(&self) -> &DMatrix<f64> {
        &self.predictor_components
    }

    /// `C`, one predicted component per column.
    pub fn predicted_components(&self) -> &DMatrix<f64> {
        &self.predicted_components
    }

    /// `Ω`, one unit-norm score vector per column.
    pub fn scores(&self) -> &DMatrix<f64> {
        &self.scores
    }

    pub fn mean_z(&self) -> &DVector<f64> {
        &self.mean_z
    }

    pub fn mean_y(&self) -> &DVector<f64> {
        &self.mean_y
    }

    pub fn pinv_pt(&self) -> &DMatrix<f64> {
        &self.pinv_pt
    }

    pub fn info(&self) -> &FitInfo {
        &self.info
    }

    pub fn n_components(&self) -> usize {
        self.predictor_components.ncols()
    }

    pub fn predictor_dim(&self) -> usize {
        self.mean_z.len()
    }

    pub fn predicted_dim(&self) -> usize {
        self.mean_y.len()
    }

    /// Score estimate `ω̂ = ((z − z̄)ᵀ (Pᵀ)⁺)ᵀ` for one sample.
    pub fn predict_scores(&self, z_sample: &DVector<f64>) -> Result<DVector<f64>> {
        if z_sample.len() != self.predictor_dim() {
            return Err(Error::Dimension {
                what: "predictor sample",
                expected: self.predictor_dim(),
                found: z_sample.len(),
            });
        }
        Ok(self.pinv_pt.tr_mul(&(z_sample - &self.mean_z)))
    }

    /// `ŷ = (z − z̄)ᵀ (Pᵀ)⁺ Cᵀ + ȳ`. Not clamped.
    pub fn predict(&self, z_sample: &DVector<f64>) -> Result<DVector<f64>> {
        let omega = self.predict_scores(z_sample)?;
        Ok(&self.predicted_components * omega + &self.mean_y)
    }

    pub fn to_document(&self) -> PlsDocument {
        PlsDocument {
            version: FORMAT_VERSION,
            info: self.info.clone(),
            split: self.split,
            mean_z: self.mean_z.as_slice().to_vec(),
            mean_y: self.mean_y.as_slice().to_vec(),
            predictor_components: columns(&self.predictor_components),
            predicted_components: columns(&self.predicted_components),
            scores: columns(&self.scores),
            pinv_pt: columns(&self.pinv_pt),
        }
    }

    pub fn from_document(doc: &PlsDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: doc.version,
            });
        }
        let dz = doc.mean_z.len();
        let dy = doc.mean_y.len();
        let n = doc.predictor_components.len();
        let days = doc.scores.first().map_or(0, Vec::len);
        let model = PlsModel {
            predictor_components: from_columns(&doc.predictor_components, dz)?,
            predicted_components: from_columns(&doc.predicted_components, dy)?,
            scores: from_columns(&doc.scores, days)?,
            mean_z: DVector::from_vec(doc.mean_z.clone()),
            mean_y: DVector::from_vec(doc.mean_y.clone()),
            split: doc.split,
            pinv_pt: from_columns(&doc.pinv_pt, dz)?,
            info: doc.info.clone(),
        };
        if doc.predicted_components.len() != n || doc.scores.len() != n || doc.pinv_pt.len() != n {
            return Err(Error::validation(
                "PLS document has inconsistent component counts",
            ));
        }
        Ok(model)
    }
}

/// Versioned JSON form of a [`PlsModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlsDocument {
    pub version: u32,
    pub info: FitInfo,
    pub split: Option<SplitSpec>,
    pub mean_z: Vec<f64>,
    pub mean_y: Vec<f64>,
    pub predictor_components: Vec<Vec<f64>>,
    pub predicted_components: Vec<Vec<f64>>,
    pub scores: Vec<Vec<f64>>,
    pub pinv_pt: Vec<Vec<f64>>,
}

/// Fits the kernel route on `ds` cut by `spec`.
pub fn fit_split(ds: &FlowDataset, spec: &SplitSpec, n_components: usize) -> Result<PlsModel> {
    let (z, y) = split_at(ds, spec)?;
    Ok(fit_pls_kernel(&z, &y, n_components)?.with_split(*spec))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoocvRecord {
    pub date: String,
    pub e_pred: f64,
    pub e_base: f64,
    /// `(E_base − E_pred) / E_base`, defined as 0 when `E_base = 0`.
    pub decrease: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoocvSummary {
    pub days: usize,
    pub positive_decreases: usize,
    pub fraction_positive: f64,
    pub mean_decrease: f64,
    pub mean_e_pred: f64,
    pub mean_e_base: f64,
}

/// Leave-one-out cross validation of the predictor.
///
/// Each day is predicted by a model fitted on the other days; its baseline is
/// the mean of the other days.
pub fn loocv(ds: &FlowDataset, spec: &SplitSpec, n_components: usize) -> Result<Vec<LoocvRecord>> {
    if ds.n_days() < 3 {
        return Err(Error::Range(format!(
            "leave-one-out needs at least 3 days, got {}",
            ds.n_days()
        )));
    }
    let (z, y) = split_at(ds, spec)?;
    (0..ds.n_days())
        .into_par_iter()
        .map(|d| {
            let keep: Vec<usize> = (0..ds.n_days()).filter(|&i| i != d).collect();
            let model = fit_pls_kernel(
                &z.select_rows(keep.iter()),
                &y.select_rows(keep.iter()),
                n_components,
            )?;
            let actual: DVector<f64> = y.row(d).transpose();
            let predicted = model.predict(&z.row(d).transpose())?;
            let e_pred = (&actual - predicted).lp_norm(1);
            let e_base = (&actual - model.mean_y()).lp_norm(1);
            let decrease = if e_base > 0.0 {
                (e_base - e_pred) / e_base
            } else {
                0.0
            };
            Ok(LoocvRecord {
                date: ds.days()[d].date.clone(),
                e_pred,
                e_base,
                decrease,
            })
        })
        .collect()
}

pub fn summarize(records: &[LoocvRecord]) -> LoocvSummary {
    let n = records.len();
    let positive = records.iter().filter(|r| r.decrease > 0.0).count();
    let mean = |f: fn(&LoocvRecord) -> f64| {
        if n == 0 {
            0.0
        } else {
            records.iter().map(f).sum::<f64>() / n as f64
        }
    };
    LoocvSummary {
        days: n,
        positive_decreases: positive,
        fraction_positive: if n == 0 {
            0.0
        } else {
            positive as f64 / n as f64
        },
        mean_decrease: mean(|r| r.decrease),
        mean_e_pred: mean(|r| r.e_pred),
        mean_e_base: mean(|r| r.e_base),
    }
}

/// Writes `date,E_pred,E_base,decrease`.
pub fn write_loocv_csv<W: Write>(records: &[LoocvRecord], writer: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(["date", "E_pred", "E_base", "decrease"])?;
    for r in records {
        out.write_record([
            r.date.clone(),
            r.e_pred.to_string(),
            r.e_base.to_string(),
            r.decrease.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}
