//! Training loss: squared error on the VMAF channel plus a weighted squared
//! error on the bitrate channel, averaged over the batch.

use crate::core::{RateQualityCurve, GRID_COUNT};
use crate::error::{Error, Result};
use crate::nn::linalg::Mat;
use serde::{Deserialize, Serialize};

/// Network output width: 101 VMAF values followed by 101 bitrate values.
pub const OUTPUT_DIM: usize = 2 * GRID_COUNT;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight on the bitrate term.
    pub lambda: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig { lambda: 1e-4 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0) {
            return Err(Error::Config(format!("lambda must be > 0, got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Loss over curve batches:
/// mean over samples of ||C_vmaf - G_vmaf||^2 + lambda * ||C_rate - G_rate||^2.
pub fn loss_eq1(pred: &[RateQualityCurve], truth: &[RateQualityCurve], cfg: &LossConfig) -> Result<f64> {
    cfg.validate()?;
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "loss needs matching non-empty batches, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut total = 0.0;
    for (p, t) in pred.iter().zip(truth.iter()) {
        let sq = |a: &[f64], b: &[f64]| -> f64 {
            a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
        };
        total += sq(p.vmaf(), t.vmaf()) + cfg.lambda * sq(p.bitrate(), t.bitrate());
    }
    let loss = total / pred.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric("loss is not finite".into()));
    }
    Ok(loss)
}

/// Same loss on raw `[batch, 202]` output matrices; also returns the gradient
/// with respect to the predictions.
pub fn loss_eq1_grad(pred: &Mat, truth: &Mat, lambda: f64) -> (f64, Mat) {
    assert_eq!(pred.rows, truth.rows);
    assert_eq!(pred.cols, OUTPUT_DIM);
    assert_eq!(truth.cols, OUTPUT_DIM);
    let n = pred.rows as f64;
    let mut grad = Mat::zeros(pred.rows, pred.cols);
    let mut total = 0.0;
    for i in 0..pred.rows {
        let pr = pred.row(i);
        let tr = truth.row(i);
        let gr = grad.row_mut(i);
        for j in 0..OUTPUT_DIM {
            let w = if j < GRID_COUNT { 1.0 } else { lambda };
            let d = pr[j] - tr[j];
            total += w * d * d;
            gr[j] = 2.0 * w * d / n;
        }
    }
    (total / n, grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(vmaf: f64, rate: f64) -> RateQualityCurve {
        RateQualityCurve::new(vec![vmaf; GRID_COUNT], vec![rate; GRID_COUNT]).unwrap()
    }

    #[test]
    fn exact_prediction_is_zero_loss() {
        let c = curve(90.0, 1000.0);
        let l = loss_eq1(&[c.clone()], &[c], &LossConfig::default()).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn vmaf_error_of_one_everywhere() {
        let pred = curve(91.0, 1000.0);
        let truth = curve(90.0, 1000.0);
        let l = loss_eq1(&[pred], &[truth], &LossConfig::default()).unwrap();
        assert!((l - 101.0).abs() < 1e-12);
    }

    #[test]
    fn bitrate_error_of_ten_everywhere() {
        let pred = curve(90.0, 1010.0);
        let truth = curve(90.0, 1000.0);
        let l = loss_eq1(&[pred], &[truth], &LossConfig::default()).unwrap();
        // 1e-4 * 101 * 10^2 = 1.01
        assert!((l - 1.01).abs() < 1e-12);
    }

    #[test]
    fn lambda_must_be_positive() {
        let c = curve(90.0, 1000.0);
        let cfg = LossConfig { lambda: 0.0 };
        assert!(loss_eq1(&[c.clone()], &[c], &cfg).is_err());
    }

    #[test]
    fn grad_matches_finite_difference() {
        let mut pred = Mat::zeros(2, OUTPUT_DIM);
        let mut truth = Mat::zeros(2, OUTPUT_DIM);
        for (i, v) in pred.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.37).sin() * 50.0;
        }
        for (i, v) in truth.data.iter_mut().enumerate() {
            *v = (i as f64 * 0.11).cos() * 50.0;
        }
        let lambda = 1e-4;
        let (_, grad) = loss_eq1_grad(&pred, &truth, lambda);
        let h = 1e-6;
        for &idx in &[0usize, 50, 101, 201, 250, 403] {
            let orig = pred.data[idx];
            pred.data[idx] = orig + h;
            let (lp, _) = loss_eq1_grad(&pred, &truth, lambda);
            pred.data[idx] = orig - h;
            let (lm, _) = loss_eq1_grad(&pred, &truth, lambda);
            pred.data[idx] = orig;
            let numeric = (lp - lm) / (2.0 * h);
            assert!(
                (numeric - grad.data[idx]).abs() < 1e-6,
                "grad mismatch at {idx}: fd={numeric} analytic={}",
                grad.data[idx]
            );
        }
    }
}
