//! Central finite differences — the gradient oracle everything else is
//! checked against.

use super::Tensor;
use crate::error::{Error, Result};

/// Central-difference gradient estimate of a scalar function at `x`:
/// per coordinate, (f(x + h·eᵢ) − f(x − h·eᵢ)) / 2h.
///
/// `f` may fail (shape errors etc.); any non-finite value it produces is a
/// numeric error.
pub fn finite_diff_grad<F>(mut f: F, x: &Tensor, h: f64) -> Result<Tensor>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    assert!(h > 0.0, "finite_diff_grad requires h > 0");
    let mut grad = vec![0.0; x.numel()];
    let mut probe = x.clone();
    for i in 0..x.numel() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let up = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let down = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!(
                "finite_diff_grad probe at coordinate {i}"
            )));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    Tensor::from_vec(x.shape().to_vec(), grad)
}

/// Largest relative error between an analytic gradient and the oracle.
///
/// The denominator is floored at 1% of the vectors' sup-norm: entries far
/// below the gradient's own scale are held to an absolute tolerance there,
/// since central-difference noise (~1e-10 in f64) would otherwise dominate
/// the ratio on near-zero coordinates.
pub fn max_rel_err(analytic: &[f64], oracle: &[f64]) -> f64 {
    let scale = analytic
        .iter()
        .chain(oracle)
        .fold(0.0f64, |m, v| m.max(v.abs()));
    max_rel_err_floored(analytic, oracle, 1e-2 * scale)
}

/// Like [`max_rel_err`] but with an explicit denominator floor. Use this
/// when checking one parameter of a larger model: pass a floor derived from
/// the global gradient scale, so a parameter whose true gradient is orders
/// of magnitude below the rest is held to an absolute tolerance instead of
/// a ratio the oracle's own noise would dominate.
pub fn max_rel_err_floored(analytic: &[f64], oracle: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), oracle.len());
    let floor = floor.max(1e-12);
    analytic
        .iter()
        .zip(oracle)
        .map(|(&a, &o)| (a - o).abs() / a.abs().max(o.abs()).max(floor))
        .fold(0.0, f64::max)
}
