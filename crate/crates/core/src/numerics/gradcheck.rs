use crate::{Error, Matrix, Result};

/// Central-difference gradient of `loss_fn` at `point`:
/// `(f(x + h·e_i) − f(x − h·e_i)) / 2h` for every entry `i`.
pub fn finite_difference_gradient<F>(mut loss_fn: F, point: &Matrix, h: f64) -> Result<Matrix>
where
    F: FnMut(&Matrix) -> f64,
{
    if !(h > 0.0) {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let mut probe = point.clone();
    let mut grad = Matrix::zeros(point.rows(), point.cols());
    for i in 0..point.len() {
        let x0 = point.as_slice()[i];
        probe.as_mut_slice()[i] = x0 + h;
        let up = loss_fn(&probe);
        probe.as_mut_slice()[i] = x0 - h;
        let down = loss_fn(&probe);
        probe.as_mut_slice()[i] = x0;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(alloc::format!(
                "loss evaluation at entry {i}"
            )));
        }
        grad.as_mut_slice()[i] = (up - down) / (2.0 * h);
    }
    Ok(grad)
}
