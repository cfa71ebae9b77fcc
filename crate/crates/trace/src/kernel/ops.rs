//! Elementwise and row-wise layer primitives with hand-derived backwards.

use super::real::Real;

const LN_EPS: f64 = 1e-8;

/// Cache of per-row statistics needed by the layer-norm backward.
pub struct LayerNormCache<T> {
    /// Normalised activations (pre-affine), one row per position.
    pub xhat: Vec<T>,
    /// 1 / sqrt(var + eps) per row.
    pub inv_std: Vec<T>,
}

/// Row-wise layer norm: `y = g * (x - mean) / sqrt(var + eps) + b`.
/// Rows are `d` wide. Returns the cache for the backward pass.
pub fn layer_norm_forward<T: Real>(
    x: &[T],
    gain: &[T],
    bias: &[T],
    out: &mut [T],
    d: usize,
) -> LayerNormCache<T> {
    let rows = x.len() / d;
    let mut xhat = vec![T::zero(); x.len()];
    let mut inv_std = vec![T::zero(); rows];
    let inv_d = T::from_f64(1.0 / d as f64);
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mut mean = T::zero();
        for &v in xr {
            mean += v;
        }
        mean *= inv_d;
        let mut var = T::zero();
        for &v in xr {
            let c = v - mean;
            var += c * c;
        }
        var *= inv_d;
        let istd = T::one() / (var + T::from_f64(LN_EPS)).sqrt();
        inv_std[r] = istd;
        let xh = &mut xhat[r * d..(r + 1) * d];
        let yr = &mut out[r * d..(r + 1) * d];
        for i in 0..d {
            let h = (xr[i] - mean) * istd;
            xh[i] = h;
            yr[i] = gain[i] * h + bias[i];
        }
    }
    LayerNormCache { xhat, inv_std }
}

/// Backward of [`layer_norm_forward`]: fills `dx` and accumulates `dgain`,
/// `dbias`.
pub fn layer_norm_backward<T: Real>(
    dy: &[T],
    cache: &LayerNormCache<T>,
    gain: &[T],
    dx: &mut [T],
    dgain: &mut [T],
    dbias: &mut [T],
    d: usize,
) {
    let rows = dy.len() / d;
    let inv_d = T::from_f64(1.0 / d as f64);
    for r in 0..rows {
        let dyr = &dy[r * d..(r + 1) * d];
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let istd = cache.inv_std[r];
        let mut sum_dh = T::zero();
        let mut sum_dh_xh = T::zero();
        for i in 0..d {
            let dh = dyr[i] * gain[i];
            sum_dh += dh;
            sum_dh_xh += dh * xh[i];
            dgain[i] += dyr[i] * xh[i];
            dbias[i] += dyr[i];
        }
        let dxr = &mut dx[r * d..(r + 1) * d];
        for i in 0..d {
            let dh = dyr[i] * gain[i];
            dxr[i] = (dh - inv_d * sum_dh - xh[i] * inv_d * sum_dh_xh) * istd;
        }
    }
}

/// Numerically stable in-place row softmax.
pub fn softmax_rows<T: Real>(x: &mut [T], n: usize) {
    for row in x.chunks_exact_mut(n) {
        let mut max = row[0];
        for &v in row.iter() {
            max = max.maximum(v);
        }
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v *= inv;
        }
    }
}

pub fn relu_forward<T: Real>(x: &mut [T]) {
    for v in x.iter_mut() {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// `dx = dy ⊙ 1[y > 0]` where `y` is the post-activation value.
pub fn relu_backward<T: Real>(dy: &mut [T], y: &[T]) {
    for (d, &v) in dy.iter_mut().zip(y.iter()) {
        if v <= T::zero() {
            *d = T::zero();
        }
    }
}

pub fn add_bias<T: Real>(x: &mut [T], bias: &[T]) {
    let n = bias.len();
    for row in x.chunks_exact_mut(n) {
        for (v, &b) in row.iter_mut().zip(bias.iter()) {
            *v += b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use absynth::rng::SeedTree;

    #[test]
    fn layer_norm_rows_are_standardised() {
        let d = 64;
        let rows = 10;
        let mut s = SeedTree::new(3).stream();
        let x: Vec<f64> = (0..rows * d).map(|_| s.normal() * 2.5 + 0.7).collect();
        let gain = vec![1.0; d];
        let bias = vec![0.0; d];
        let mut y = vec![0.0; rows * d];
        layer_norm_forward(&x, &gain, &bias, &mut y, d);
        for r in 0..rows {
            let row = &y[r * d..(r + 1) * d];
            let mean: f64 = row.iter().sum::<f64>() / d as f64;
            let var: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            assert!(mean.abs() <= 1e-6, "mean {mean}");
            assert!((var - 1.0).abs() <= 1e-5, "var {var}");
        }
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let n = 100;
        let mut s = SeedTree::new(4).stream();
        let mut x: Vec<f64> = (0..5 * n).map(|_| s.normal() * 10.0).collect();
        softmax_rows(&mut x, n);
        for row in x.chunks_exact(n) {
            let sum: f64 = row.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
    }

    #[test]
    fn layer_norm_backward_matches_finite_difference() {
        let d = 8;
        let rows = 3;
        let mut s = SeedTree::new(5).stream();
        let x: Vec<f64> = (0..rows * d).map(|_| s.normal()).collect();
        let gain: Vec<f64> = (0..d).map(|_| 1.0 + 0.1 * s.normal()).collect();
        let bias: Vec<f64> = (0..d).map(|_| 0.1 * s.normal()).collect();
        let w: Vec<f64> = (0..rows * d).map(|_| s.normal()).collect();

        // Scalar objective: L = sum(w ⊙ LN(x)).
        let loss = |x: &[f64], gain: &[f64], bias: &[f64]| -> f64 {
            let mut y = vec![0.0; x.len()];
            layer_norm_forward(x, gain, bias, &mut y, d);
            y.iter().zip(w.iter()).map(|(a, b)| a * b).sum()
        };

        let mut y = vec![0.0; rows * d];
        let cache = layer_norm_forward(&x, &gain, &bias, &mut y, d);
        let mut dx = vec![0.0; rows * d];
        let mut dgain = vec![0.0; d];
        let mut dbias = vec![0.0; d];
        layer_norm_backward(&w, &cache, &gain, &mut dx, &mut dgain, &mut dbias, d);

        let eps = 1e-6;
        for idx in [0usize, 5, 13, rows * d - 1] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let fd = (loss(&xp, &gain, &bias) - loss(&xm, &gain, &bias)) / (2.0 * eps);
            assert!(
                (fd - dx[idx]).abs() < 1e-6 * (1.0 + fd.abs()),
                "dx[{idx}]: analytic {} vs fd {fd}",
                dx[idx]
            );
        }
        for idx in [0usize, 3, d - 1] {
            let mut gp = gain.clone();
            gp[idx] += eps;
            let mut gm = gain.clone();
            gm[idx] -= eps;
            let fd = (loss(&x, &gp, &bias) - loss(&x, &gm, &bias)) / (2.0 * eps);
            assert!((fd - dgain[idx]).abs() < 1e-6 * (1.0 + fd.abs()));
        }
    }
}
