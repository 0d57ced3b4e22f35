//! Principal components of centered daily flow profiles.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flowdata::CenteredMatrix;
use crate::linalg::argmax_abs;
use crate::FORMAT_VERSION;

/// Rank-N factorisation `X̃ ≈ W Qᵀ` of the centered flow matrix.
///
/// Components are stored with unit norm. `component_scale` only changes how
/// weights are reported: [`PcaModel::project`] divides by it and
/// [`PcaModel::reconstruct`] multiplies the components by it, so the pair is
/// invariant to the choice.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    mean: DVector<f64>,
    components: DMatrix<f64>,
    weights: DMatrix<f64>,
    singular_values: Vec<f64>,
    all_singular_values: Vec<f64>,
    component_scale: f64,
}

/// Fits `n_components` principal components by SVD of the residual matrix.
///
/// Each component is oriented so that its entry of largest magnitude is
/// positive. Components with equal singular values keep the order the
/// decomposition returned them in, so their identity is not guaranteed.
pub fn fit_pca(cm: &CenteredMatrix, n_components: usize) -> Result<PcaModel> {
    let x = cm.residuals();
    let rank_cap = x.nrows().min(x.ncols());
    if n_components == 0 || n_components > rank_cap {
        return Err(Error::Range(format!(
            "n_components {n_components} (must lie in 1..={rank_cap})"
        )));
    }
    let svd = x.clone().svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => unreachable!("SVD was asked for both factors"),
    };
    let sigma = svd.singular_values;
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&a, &b| sigma[b].total_cmp(&sigma[a]));

    let mut components = DMatrix::zeros(x.ncols(), n_components);
    let mut weights = DMatrix::zeros(x.nrows(), n_components);
    for (k, &idx) in order.iter().take(n_components).enumerate() {
        let mut q: DVector<f64> = v_t.row(idx).transpose();
        let mut w: DVector<f64> = u.column(idx) * sigma[idx];
        if let Some(i) = argmax_abs(q.as_slice()) {
            if q[i] < 0.0 {
                q.neg_mut();
                w.neg_mut();
            }
        }
        components.set_column(k, &q);
        weights.set_column(k, &w);
    }
    let all_singular_values: Vec<f64> = order.iter().map(|&i| sigma[i]).collect();
    Ok(PcaModel {
        mean: cm.mean().clone(),
        components,
        weights,
        singular_values: all_singular_values[..n_components].to_vec(),
        all_singular_values,
        component_scale: 1.0,
    })
}

impl PcaModel {
    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    /// Unit-norm components, one per column.
    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    /// Per-day weights for the unit-norm components, one row per day.
    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn singular_values(&self) -> &[f64] {
        &self.singular_values
    }

    /// Every singular value of the residual matrix, descending.
    pub fn all_singular_values(&self) -> &[f64] {
        &self.all_singular_values
    }

    pub fn n_components(&self) -> usize {
        self.components.ncols()
    }

    pub fn component_scale(&self) -> f64 {
        self.component_scale
    }

    pub fn with_component_scale(mut self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!(
                "component scale must be positive, got {scale}"
            )));
        }
        self.component_scale = scale;
        Ok(self)
    }

    pub fn scaled_components(&self) -> DMatrix<f64> {
        &self.components * self.component_scale
    }

    pub fn scaled_weights(&self) -> DMatrix<f64> {
        &self.weights / self.component_scale
    }

    /// Least-squares weights of `day_flow - mean` on the (scaled) components.
    pub fn project(&self, day_flow: &DVector<f64>) -> Result<DVector<f64>> {
        if day_flow.len() != self.mean.len() {
            return Err(Error::Dimension {
                what: "day flow vector",
                expected: self.mean.len(),
                found: day_flow.len(),
            });
        }
        Ok(self.components.tr_mul(&(day_flow - &self.mean)) / self.component_scale)
    }

    /// `mean + Σ w_i · scale · q_i`.
    pub fn reconstruct(&self, weights: &DVector<f64>) -> Result<DVector<f64>> {
        if weights.len() != self.n_components() {
            return Err(Error::Dimension {
                what: "weight vector",
                expected: self.n_components(),
                found: weights.len(),
            });
        }
        Ok(&self.mean + &self.components * weights * self.component_scale)
    }

    /// `‖X̃ − W Qᵀ‖_F` against the residual matrix the model was fitted on.
    pub fn residual_norm(&self, cm: &CenteredMatrix) -> f64 {
        (cm.residuals() - &self.weights * self.components.transpose()).norm()
    }

    pub fn to_document(&self) -> PcaDocument {
        PcaDocument {
            version: FORMAT_VERSION,
            mean: self.mean.as_slice().to_vec(),
            components: columns(&self.components),
            weights: rows(&self.weights),
            singular_values: self.singular_values.clone(),
            all_singular_values: self.all_singular_values.clone(),
            component_scale: self.component_scale,
        }
    }

    pub fn from_document(doc: &PcaDocument) -> Result<Self> {
        if doc.version != FORMAT_VERSION {
            return Err(Error::Version {
                expected: FORMAT_VERSION,
                found: doc.version,
            });
        }
        let dim = doc.mean.len();
        let components = from_columns(&doc.components, dim)?;
        let weights = from_rows(&doc.weights, doc.components.len())?;
        PcaModel {
            mean: DVector::from_vec(doc.mean.clone()),
            components,
            weights,
            singular_values: doc.singular_values.clone(),
            all_singular_values: doc.all_singular_values.clone(),
            component_scale: 1.0,
        }
        .with_component_scale(doc.component_scale)
    }
}

/// Fraction of the singular-value sum carried by each retained component.
///
/// Normalises by the sum of singular values, not of their squares.
pub fn explained_variance(model: &PcaModel) -> Vec<f64> {
    let total: f64 = model.all_singular_values.iter().sum();
    model
        .singular_values
        .iter()
        .map(|s| if total > 0.0 { s / total } else { 0.0 })
        .collect()
}

/// Versioned JSON form of a [`PcaModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaDocument {
    pub version: u32,
    pub mean: Vec<f64>,
    /// Unit-norm components, one inner vector per component.
    pub components: Vec<Vec<f64>>,
    /// Per-day weights for the unit-norm components.
    pub weights: Vec<Vec<f64>>,
    pub singular_values: Vec<f64>,
    pub all_singular_values: Vec<f64>,
    pub component_scale: f64,
}

pub(crate) fn columns(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.column_iter()
        .map(|c| c.iter().copied().collect())
        .collect()
}

pub(crate) fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub(crate) fn from_columns(cols: &[Vec<f64>], dim: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = cols.iter().find(|c| c.len() != dim) {
        return Err(Error::Dimension {
            what: "serialized column",
            expected: dim,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(dim, cols.len(), |i, j| cols[j][i]))
}

pub(crate) fn from_rows(rows: &[Vec<f64>], width: usize) -> Result<DMatrix<f64>> {
    if let Some(bad) = rows.iter().find(|r| r.len() != width) {
        return Err(Error::Dimension {
            what: "serialized row",
            expected: width,
            found: bad.len(),
        });
    }
    Ok(DMatrix::from_fn(rows.len(), width, |i, j| rows[i][j]))
}
