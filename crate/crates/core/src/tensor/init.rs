//! Parameter initializers.

use rand::Rng;

use super::{scalar, Element, Tensor};

/// Uniform samples in `±sqrt(6 / (fan_in + fan_out))`, shaped `fan_in × fan_out`.
pub fn glorot<T: Element, R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    glorot_shaped(&[fan_in, fan_out], fan_in, fan_out, rng)
}

/// Glorot bound computed from explicit fans, filled into an arbitrary shape.
pub fn glorot_shaped<T: Element, R: Rng + ?Sized>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| scalar(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("shape and data agree")
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn within_bound_and_seeded() {
        let a: Tensor<f32> = glorot(30, 20, &mut ChaCha8Rng::seed_from_u64(3));
        let b: Tensor<f32> = glorot(30, 20, &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(a, b);
        let bound = (6.0f32 / 50.0).sqrt();
        assert!(a.data().iter().all(|v| v.abs() <= bound));
    }

    #[test]
    fn variance_matches_uniform_moment() {
        let t: Tensor<f64> = glorot(200, 500, &mut ChaCha8Rng::seed_from_u64(11));
        let n = t.numel() as f64;
        let mean = t.data().iter().sum::<f64>() / n;
        let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        let expected = 2.0 / 700.0;
        assert!((var - expected).abs() / expected < 0.05, "variance {var} vs {expected}");
    }
}
