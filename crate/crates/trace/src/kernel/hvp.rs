//! Hessian-vector products by central differences of gradients.
//!
//! `H v ≈ ‖v‖ · (g(θ + ε v̂) − g(θ − ε v̂)) / (2 ε)` with `v̂ = v / ‖v‖` and
//! `ε = 1e-3`. Two extra gradient evaluations per product, no higher-order
//! differentiation machinery; accuracy is pinned by the quadratic oracle in
//! the test suite.

use super::Result;

const HVP_EPS: f64 = 1e-3;

/// A gradient oracle over a flat parameter vector.
pub trait HvpOracle {
    fn dim(&self) -> usize;
    /// Gradient of the loss at `theta`.
    fn grad(&mut self, theta: &[f64]) -> Result<Vec<f64>>;
}

/// Finite-difference Hessian-vector product at `theta`.
///
/// A zero direction returns the zero vector without evaluating the oracle.
pub fn hvp<O: HvpOracle>(oracle: &mut O, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    assert_eq!(theta.len(), oracle.dim());
    assert_eq!(v.len(), theta.len());
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Ok(vec![0.0; v.len()]);
    }
    let scale = HVP_EPS / norm;
    let plus: Vec<f64> = theta.iter().zip(v.iter()).map(|(t, x)| t + scale * x).collect();
    let minus: Vec<f64> = theta.iter().zip(v.iter()).map(|(t, x)| t - scale * x).collect();
    let gp = oracle.grad(&plus)?;
    let gm = oracle.grad(&minus)?;
    let factor = norm / (2.0 * HVP_EPS);
    Ok(gp
        .iter()
        .zip(gm.iter())
        .map(|(p, m)| (p - m) * factor)
        .collect())
}
