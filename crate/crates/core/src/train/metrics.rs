use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// `√((1/n) Σᵢ ‖ŷᵢ − yᵢ‖²)` over 2-D gaze points, in the targets' units.
pub fn rmse_points(preds: &[[f64; 2]], targets: &[[f64; 2]]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "rmse: {} predictions for {} targets",
            preds.len(),
            targets.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::InvalidArgument("rmse: no samples".into()));
    }
    let sq: f64 = preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p[0] - t[0]).powi(2) + (p[1] - t[1]).powi(2))
        .sum();
    Ok((sq / preds.len() as f64).sqrt())
}

/// [`rmse_points`] on `[n, 2]` tensors.
pub fn rmse_mm(preds: &Tensor<f64>, targets: &Tensor<f64>) -> Result<f64> {
    if preds.dims() != targets.dims() || preds.rank() != 2 || preds.dims()[1] != 2 {
        return Err(Error::ShapeMismatch {
            op: "rmse_mm",
            left: preds.dims().to_vec(),
            right: targets.dims().to_vec(),
        });
    }
    let rows = |t: &Tensor<f64>| t.data().chunks(2).map(|c| [c[0], c[1]]).collect::<Vec<_>>();
    rmse_points(&rows(preds), &rows(targets))
}

pub fn mean_point(points: &[[f64; 2]]) -> Result<[f64; 2]> {
    if points.is_empty() {
        return Err(Error::InvalidArgument("mean of an empty target set".into()));
    }
    let n = points.len() as f64;
    Ok([
        points.iter().map(|p| p[0]).sum::<f64>() / n,
        points.iter().map(|p| p[1]).sum::<f64>() / n,
    ])
}

/// RMSE of predicting the training-set mean gaze for every evaluation sample.
pub fn naive_baseline(train_targets: &[[f64; 2]], eval_targets: &[[f64; 2]]) -> Result<f64> {
    let mean = mean_point(train_targets)?;
    rmse_points(&vec![mean; eval_targets.len()], eval_targets)
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}
