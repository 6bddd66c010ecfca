use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Adds i.i.d. zero-mean Gaussian noise drawn from a stream seeded by `seed`.
pub fn add_noise(y: &[f64], noise_std: f64, seed: u64) -> Result<Vec<f64>> {
    if !(noise_std.is_finite() && noise_std >= 0.0) {
        return Err(Error::invalid("noise_std must be finite and >= 0"));
    }
    if noise_std == 0.0 {
        return Ok(y.to_vec());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise_std).expect("finite std");
    Ok(y.iter().map(|&v| v + normal.sample(&mut rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_std_is_identity() {
        let y = vec![1.0, -2.0, 3.5];
        assert_eq!(add_noise(&y, 0.0, 9).unwrap(), y);
    }

    #[test]
    fn variance_matches() {
        let n = 100_000;
        let out = add_noise(&vec![0.0; n], 0.3, 1).unwrap();
        let var = out.iter().map(|v| v * v).sum::<f64>() / n as f64;
        assert!((var / 0.09 - 1.0).abs() < 0.05);
    }

    #[test]
    fn seeds_differ_but_means_agree() {
        let n = 100_000;
        let a = add_noise(&vec![0.0; n], 1.0, 1).unwrap();
        let b = add_noise(&vec![0.0; n], 1.0, 2).unwrap();
        assert_ne!(a, b);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        assert!((ma - mb).abs() < 3.0 * (2.0f64 / n as f64).sqrt());
        assert_eq!(a, add_noise(&vec![0.0; n], 1.0, 1).unwrap());
    }

    #[test]
    fn negative_std_rejected() {
        assert!(add_noise(&[0.0], -1.0, 0).is_err());
    }
}
