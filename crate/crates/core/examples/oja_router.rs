//! Compare the single-pass Oja router direction with an exact
//! eigendecomposition, and show how the split boundary halves a leaf.

use emt::tree::{split_boundary, top_eigen};
use emt::synth::{gaussian_samples, random_rotation};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> emt::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut spectrum = vec![0.01; 8];
    spectrum[0] = 1.0;
    let rotation = random_rotation(8, &mut rng);
    let xs = gaussian_samples(&spectrum, &rotation, 512, &mut rng)?;

    let oja = top_eigen(&xs, &mut rng)?;

    let n = xs.len() as f64;
    let mean: Vec<f64> = (0..8).map(|j| xs.iter().map(|x| x[j]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(8, 8, |i, j| {
        xs.iter().map(|x| (x[i] - mean[i]) * (x[j] - mean[j])).sum::<f64>() / (n - 1.0)
    });
    let eig = SymmetricEigen::new(cov);
    let exact = eig.eigenvectors.column(eig.eigenvalues.imax());
    let cos: f64 = oja.iter().zip(exact.iter()).map(|(a, b)| a * b).sum();
    println!("|cos(oja, exact)| = {:.4}", cos.abs());

    let projections: Vec<f64> = xs.iter().map(|x| x.iter().zip(&oja).map(|(a, b)| a * b).sum()).collect();
    let boundary = split_boundary(&projections).expect("projections are not all equal");
    let left = projections.iter().filter(|&&p| p <= boundary).count();
    println!("boundary {boundary:.4}: {left} left, {} right", projections.len() - left);
    Ok(())
}
