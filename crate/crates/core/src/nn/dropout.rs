use rand::Rng;

/// Inverted-dropout mask: each entry is 0 with probability `rate`, otherwise
/// `1 / (1 - rate)`, so the masked activation keeps its expectation.
pub fn dropout_mask<R: Rng + ?Sized>(len: usize, rate: f64, rng: &mut R) -> Vec<f64> {
    let keep = 1.0 - rate;
    let scale = 1.0 / keep;
    (0..len)
        .map(|_| {
            if rng.random::<f64>() < keep {
                scale
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mask_values_and_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = dropout_mask(100_000, 0.2, &mut rng);
        assert!(m.iter().all(|&v| v == 0.0 || v == 1.25));
        let dropped = m.iter().filter(|&&v| v == 0.0).count() as f64 / m.len() as f64;
        assert!((dropped - 0.2).abs() < 0.01);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
    }

    #[test]
    fn zero_rate_keeps_everything() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dropout_mask(1000, 0.0, &mut rng).iter().all(|&v| v == 1.0));
    }
}
