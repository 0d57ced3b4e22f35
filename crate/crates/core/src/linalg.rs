use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Settings for [`dominant_eigenpair`].
#[derive(Clone, Copy, Debug)]
pub(crate) struct PowerIteration {
    /// Relative change of the eigenvalue estimate at which iteration stops.
    pub tol: f64,
    pub max_iter: usize,
    /// Seed for the restart vector used when the canonical start stalls.
    pub seed: u64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            tol: 1e-10,
            max_iter: 10_000,
            seed: 0x5eed_0f_9e7a,
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Eigenpair {
    pub value: f64,
    pub vector: DVector<f64>,
    pub converged: bool,
}

/// Dominant eigenpair of a linear operator with real non-negative spectrum
/// (e.g. a product of two PSD matrices), by power iteration from `e_1`.
///
/// `scale` bounds the operator norm and decides when an iterate counts as
/// having collapsed to zero. Returns `None` when the operator annihilates
/// both the canonical and the seeded random start.
pub(crate) fn dominant_eigenpair<F>(
    apply: F,
    n: usize,
    scale: f64,
    opts: PowerIteration,
) -> Option<Eigenpair>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let floor = scale * 1e-14;
    let mut start = DVector::zeros(n);
    start[0] = 1.0;
    let mut best = run(&apply, start, floor, opts);
    if best.as_ref().is_none_or(|p| !p.converged) {
        let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
        let restart = DVector::from_fn(n, |_, _| rng.random::<f64>() - 0.5);
        if let Some(alt) = run(&apply, restart.normalize(), floor, opts) {
            let better = match &best {
                None => true,
                Some(b) => alt.converged || alt.value > b.value,
            };
            if better {
                best = Some(alt);
            }
        }
    }
    if let Some(p) = &best {
        if !p.converged {
            log::warn!(
                "power iteration stopped after {} steps without converging",
                opts.max_iter
            );
        }
    }
    best
}

fn run<F>(apply: &F, mut x: DVector<f64>, floor: f64, opts: PowerIteration) -> Option<Eigenpair>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let mut value = 0.0;
    for _ in 0..opts.max_iter {
        let y = apply(&x);
        let norm = y.norm();
        if norm <= floor {
            return None;
        }
        let next = y / norm;
        let step = (&next - &x).norm();
        let settled = (norm - value).abs() <= opts.tol * norm && step <= 1e-9;
        value = norm;
        x = next;
        if settled {
            return Some(Eigenpair {
                value,
                vector: x,
                converged: true,
            });
        }
    }
    Some(Eigenpair {
        value,
        vector: x,
        converged: false,
    })
}

/// Index of the first entry whose magnitude exceeds `rel` times the largest.
pub(crate) fn first_significant(v: &[f64], rel: f64) -> Option<usize> {
    let max = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    if max == 0.0 {
        return None;
    }
    v.iter().position(|x| x.abs() > rel * max)
}

/// Index of the entry of largest magnitude (earliest on ties).
pub(crate) fn argmax_abs(v: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, x) in v.iter().enumerate() {
        if best.is_none_or(|(_, b)| x.abs() > b) {
            best = Some((i, x.abs()));
        }
    }
    best.map(|(i, _)| i)
}

/// `(I - w wᵀ) K (I - w wᵀ)` for a unit vector `w`.
pub(crate) fn deflate_kernel(k: &DMatrix<f64>, w: &DVector<f64>) -> DMatrix<f64> {
    let kw = k * w;
    let wkw = w.dot(&kw);
    // K - w (Kw)ᵀ - (Kw) wᵀ + (wᵀKw) w wᵀ, with K symmetric
    let mut out = k - w * kw.transpose() - &kw * w.transpose();
    out += (w * w.transpose()) * wkw;
    // keep exact symmetry
    (&out + out.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_iteration_finds_dominant_pair() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.0, 1.0, 3.0, 0.0, 0.0, 0.0, 1.0]);
        let pair = dominant_eigenpair(|x| &a * x, 3, 10.0, PowerIteration::default()).unwrap();
        let eig = a.clone().symmetric_eigen();
        let top = eig.eigenvalues.max();
        assert!((pair.value - top).abs() < 1e-9);
        assert!((&a * &pair.vector - &pair.vector * pair.value).norm() < 1e-7);
    }

    #[test]
    fn restarts_when_canonical_start_is_annihilated() {
        // e_1 lies in the null space
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0]);
        let pair = dominant_eigenpair(|x| &a * x, 2, 2.0, PowerIteration::default()).unwrap();
        assert!((pair.value - 2.0).abs() < 1e-12);
        assert!(dominant_eigenpair(|x| x * 0.0, 2, 1.0, PowerIteration::default()).is_none());
    }

    #[test]
    fn deflated_kernel_matches_projector_form() {
        let k = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.0, 0.3, 0.1, 0.3, 1.5]);
        let w = DVector::from_vec(vec![1.0, 2.0, -1.0]).normalize();
        let proj = DMatrix::identity(3, 3) - &w * w.transpose();
        let expect = &proj * &k * &proj;
        assert!((deflate_kernel(&k, &w) - expect).norm() < 1e-12);
    }

    #[test]
    fn significance_helpers() {
        assert_eq!(first_significant(&[1e-20, -3.0, 2.0], 1e-10), Some(1));
        assert_eq!(first_significant(&[0.0, 0.0], 1e-10), None);
        assert_eq!(argmax_abs(&[1.0, -3.0, 3.0]), Some(1));
    }
}
