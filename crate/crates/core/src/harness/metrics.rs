//! Error metrics.

use nalgebra::DMatrix;

use crate::error::{EklError, Result};

/// Mean over outputs of `MSE_s / Var_s`, with the population variance of
/// each row of `y_true`.
pub fn nmse(y_pred: &DMatrix<f64>, y_true: &DMatrix<f64>) -> Result<f64> {
    if y_pred.shape() != y_true.shape() {
        return Err(EklError::Dimension(format!(
            "predictions {:?} vs targets {:?}",
            y_pred.shape(),
            y_true.shape()
        )));
    }
    let (p, t) = y_true.shape();
    if p == 0 || t == 0 {
        return Err(EklError::Dimension("nMSE of an empty matrix".into()));
    }
    let mut total = 0.0;
    for s in 0..p {
        let truth = y_true.row(s);
        let mean = truth.mean();
        let var = truth.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / t as f64;
        if !(var > 0.0) {
            return Err(EklError::Data(format!("output {s} has zero variance")));
        }
        let mse = (y_pred.row(s) - truth).norm_squared() / t as f64;
        total += mse / var;
    }
    Ok(total / p as f64)
}

/// Relative improvement over the kernel ridge baseline, `(e_krr − e) / e_krr`.
pub fn ni(err_method: f64, err_krr: f64) -> Result<f64> {
    if !(err_krr > 0.0) {
        return Err(EklError::InvalidParameter(format!(
            "baseline error must be positive, got {err_krr}"
        )));
    }
    Ok((err_krr - err_method) / err_krr)
}
