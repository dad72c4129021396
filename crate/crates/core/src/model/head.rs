use ndarray::{linalg::general_mat_mul, Array2, Axis};
use rand::Rng;

use super::params::HeadParams;

pub fn hardswish(x: f64) -> f64 {
    x * (x + 3.0).clamp(0.0, 6.0) / 6.0
}

pub fn hardswish_grad(x: f64) -> f64 {
    if x <= -3.0 {
        0.0
    } else if x >= 3.0 {
        1.0
    } else {
        (2.0 * x + 3.0) / 6.0
    }
}

#[derive(Debug, Clone)]
pub struct HeadCache {
    encoded: Array2<f64>,
    a1: Array2<f64>,
    z1: Array2<f64>,
    /// Post-dropout activations fed to the output layer.
    a2: Array2<f64>,
    /// Inverted-dropout multipliers (0 or `1/(1-p)`), absent at evaluation.
    mask: Option<Array2<f64>>,
}

/// Draw an inverted-dropout mask.
pub fn dropout_mask(rows: usize, cols: usize, p: f64, rng: &mut impl Rng) -> Array2<f64> {
    let keep = 1.0 / (1.0 - p);
    Array2::from_shape_simple_fn((rows, cols), || if rng.random::<f64>() < p { 0.0 } else { keep })
}

pub fn head_forward(
    head: &HeadParams,
    encoded: &Array2<f64>,
    mask: Option<Array2<f64>>,
) -> (Array2<f64>, HeadCache) {
    let a1 = encoded.mapv(hardswish);
    let mut z1 = Array2::zeros((a1.nrows(), head.w1.ncols()));
    z1 += &head.b1;
    general_mat_mul(1.0, &a1, &head.w1, 1.0, &mut z1);
    let mut a2 = z1.mapv(hardswish);
    if let Some(m) = &mask {
        a2 *= m;
    }
    let mut y = Array2::zeros((a2.nrows(), head.w2.ncols()));
    y += &head.b2;
    general_mat_mul(1.0, &a2, &head.w2, 1.0, &mut y);
    (
        y,
        HeadCache {
            encoded: encoded.clone(),
            a1,
            z1,
            a2,
            mask,
        },
    )
}

/// Accumulates head gradients and returns the gradient w.r.t. the encoder output.
pub fn head_backward(head: &HeadParams, cache: &HeadCache, dy: &Array2<f64>, grads: &mut HeadParams) -> Array2<f64> {
    grads.b2 += &dy.sum_axis(Axis(0));
    general_mat_mul(1.0, &cache.a2.t(), dy, 1.0, &mut grads.w2);
    let mut da2 = dy.dot(&head.w2.t());
    if let Some(m) = &cache.mask {
        da2 *= m;
    }
    let mut dz1 = da2;
    dz1.zip_mut_with(&cache.z1, |d, &z| *d *= hardswish_grad(z));
    grads.b1 += &dz1.sum_axis(Axis(0));
    general_mat_mul(1.0, &cache.a1.t(), &dz1, 1.0, &mut grads.w1);
    let mut de = dz1.dot(&head.w1.t());
    de.zip_mut_with(&cache.encoded, |d, &e| *d *= hardswish_grad(e));
    de
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hardswish_checkpoints() {
        assert_eq!(hardswish(0.0), 0.0);
        assert_eq!(hardswish(3.0), 3.0);
        assert_eq!(hardswish(-3.0), 0.0);
        assert!((hardswish(1.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(hardswish(10.0), 10.0);
        assert_eq!(hardswish(-10.0), 0.0);
    }

    #[test]
    fn hardswish_derivative_matches_difference_quotient() {
        for &x in &[-2.5, -1.0, 0.0, 0.7, 2.9, 4.0, -4.0] {
            let h = 1e-6;
            let fd = (hardswish(x + h) - hardswish(x - h)) / (2.0 * h);
            assert!((fd - hardswish_grad(x)).abs() < 1e-6, "x = {x}");
        }
    }

    #[test]
    fn dropout_mask_values() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let m = dropout_mask(100, 50, 0.2, &mut rng);
        assert!(m.iter().all(|&v| v == 0.0 || v == 1.25));
        let dropped = m.iter().filter(|&&v| v == 0.0).count() as f64 / 5000.0;
        assert!((dropped - 0.2).abs() < 0.03);
    }
}
