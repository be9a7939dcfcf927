//! Synthetic classification streams and Gaussian samplers.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::datasets::{Example, SupervisedDataset};
use crate::error::{Error, Result};

fn uniform_point<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// A stream that cycles through `contexts` fixed prototypes in random order,
/// each with its own uniformly drawn label. Rewards are noiseless and the
/// label map has no structure, so only memorization helps.
pub fn recurring_contexts<R: Rng + ?Sized>(
    contexts: usize,
    dim: usize,
    actions: usize,
    rounds: usize,
    rng: &mut R,
) -> Result<SupervisedDataset> {
    if contexts == 0 || dim == 0 {
        return Err(Error::InvalidConfig("need at least one context and one feature".into()));
    }
    let prototypes: Vec<Example> = (0..contexts)
        .map(|_| Example {
            features: uniform_point(dim, rng),
            label: rng.random_range(0..actions.max(1)),
        })
        .collect();
    let examples = (0..rounds)
        .map(|_| prototypes[rng.random_range(0..contexts)].clone())
        .collect();
    SupervisedDataset::new(examples, actions)
}

/// Uniform contexts in `[0, 1]^dim` labelled by the argmax of random linear
/// scores, so each action's reward region is a convex polytope.
pub fn linear_classes<R: Rng + ?Sized>(
    dim: usize,
    actions: usize,
    rounds: usize,
    rng: &mut R,
) -> Result<SupervisedDataset> {
    if dim == 0 {
        return Err(Error::InvalidConfig("need at least one feature".into()));
    }
    let weights: Vec<Vec<f64>> = (0..actions)
        .map(|_| (0..dim).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    // Centre each score on the cube's midpoint so every class has mass.
    let offsets: Vec<f64> = weights.iter().map(|w| -0.5 * w.iter().sum::<f64>()).collect();
    let examples = (0..rounds)
        .map(|_| {
            let x = uniform_point(dim, rng);
            let scores: Vec<f64> = weights
                .iter()
                .zip(&offsets)
                .map(|(w, b)| b + w.iter().zip(&x).map(|(wi, xi)| wi * xi).sum::<f64>())
                .collect();
            Example {
                label: crate::bandit::argmax(&scores),
                features: x,
            }
        })
        .collect();
    SupervisedDataset::new(examples, actions)
}

/// A Haar-distributed random rotation of `R^dim`.
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Sign-fix so the distribution is uniform over rotations.
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Zero-mean Gaussian samples whose covariance is `Q diag(eigenvalues) Qᵀ`.
pub fn gaussian_samples<R: Rng + ?Sized>(
    eigenvalues: &[f64],
    rotation: &DMatrix<f64>,
    n: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let d = eigenvalues.len();
    if rotation.nrows() != d || rotation.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rotation.nrows(),
        });
    }
    if eigenvalues.iter().any(|&l| !(l >= 0.0) || !l.is_finite()) {
        return Err(Error::InvalidConfig("eigenvalues must be finite and non-negative".into()));
    }
    let scales: Vec<f64> = eigenvalues.iter().map(|l| l.sqrt()).collect();
    Ok((0..n)
        .map(|_| {
            let z: Vec<f64> = scales.iter().map(|s| s * rng.sample::<f64, _>(StandardNormal)).collect();
            (0..d)
                .map(|i| (0..d).map(|j| rotation[(i, j)] * z[j]).sum())
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::explained_variance_ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn recurring_has_bounded_distinct_contexts() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ds = recurring_contexts(50, 4, 5, 4000, &mut rng).unwrap();
        assert_eq!(ds.len(), 4000);
        let mut distinct: Vec<&Vec<f64>> = ds.examples().iter().map(|e| &e.features).collect();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        assert!(distinct.len() <= 50 && distinct.len() > 45);
        // Identical contexts always carry the same label.
        for e in ds.examples() {
            let first = ds.examples().iter().find(|o| o.features == e.features).unwrap();
            assert_eq!(first.label, e.label);
        }
    }

    #[test]
    fn linear_classes_uses_every_class() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ds = linear_classes(3, 2, 2000, &mut rng).unwrap();
        let ones = ds.examples().iter().filter(|e| e.label == 1).count();
        assert!(ones > 100 && ones < 1900, "{ones}");
    }

    #[test]
    fn rotation_is_orthogonal() {
        let q = random_rotation(6, &mut ChaCha8Rng::seed_from_u64(9));
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(6, 6)).abs().max();
        assert!(err < 1e-12);
    }

    #[test]
    fn diagonal_spectrum_explained_variance() {
        // Analytic ratio 9 / (9 + 1).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let q = DMatrix::<f64>::identity(2, 2);
        let xs = gaussian_samples(&[9.0, 1.0], &q, 20_000, &mut rng).unwrap();
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let ratio = explained_variance_ratio(&refs).unwrap();
        assert!((ratio - 0.9).abs() < 0.01, "{ratio}");
    }
}
