//! Metrics (curve MAE, VACC), the ablation comparison harness, and plot-data
//! emission.

use crate::core::{clamp_curve, CrfGrid, RateQualityCurve, GRID_COUNT};
use crate::error::{Error, Result};
use crate::pipeline::{train, Ablation, Dataset, ModelBundle, PredictorConfig, TrainSample};
use crate::strategy::{crf_for_target_vmaf, monotone_project, LookupOutcome};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

/// Default constant-quality target and VACC tolerance.
pub const DEFAULT_TARGET_VMAF: f64 = 91.0;
pub const DEFAULT_VACC_TOLERANCE: f64 = 1.0;

/// Mean absolute error over all videos and all grid points, per channel.
pub fn curve_mae(pred: &[RateQualityCurve], truth: &[RateQualityCurve]) -> Result<(f64, f64)> {
    if pred.len() != truth.len() || pred.is_empty() {
        return Err(Error::Shape(format!(
            "curve_mae needs matching non-empty sets, got {} and {}",
            pred.len(),
            truth.len()
        )));
    }
    let mut v = 0.0;
    let mut r = 0.0;
    for (p, t) in pred.iter().zip(truth.iter()) {
        for i in 0..GRID_COUNT {
            v += (p.vmaf()[i] - t.vmaf()[i]).abs();
            r += (p.bitrate()[i] - t.bitrate()[i]).abs();
        }
    }
    let n = (pred.len() * GRID_COUNT) as f64;
    Ok((v / n, r / n))
}

/// Fraction of videos whose actual VMAF lies strictly within `tolerance` of
/// the target.
pub fn vacc(actual_vmaf: &[f64], target: f64, tolerance: f64) -> Result<f64> {
    if actual_vmaf.is_empty() {
        return Err(Error::Shape("vacc needs at least one video".into()));
    }
    let hits = actual_vmaf.iter().filter(|&&v| (v - target).abs() < tolerance).count();
    Ok(hits as f64 / actual_vmaf.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerVideoRow {
    pub id: String,
    pub d_i: f64,
    pub selected_crf: f64,
    pub actual_vmaf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub vmaf_mae: f64,
    pub bitrate_mae: f64,
    pub vacc: f64,
    pub n: usize,
    pub target_vmaf: f64,
    pub tolerance: f64,
    pub per_video: Vec<PerVideoRow>,
}

impl std::fmt::Display for EvalReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "n            {:>10}", self.n)?;
        writeln!(f, "vmaf mae     {:>10.4}", self.vmaf_mae)?;
        writeln!(f, "bitrate mae  {:>10.2} kbps", self.bitrate_mae)?;
        write!(
            f,
            "vacc         {:>9.2}% (target {}, tol {})",
            self.vacc * 100.0,
            self.target_vmaf,
            self.tolerance
        )
    }
}

/// Predicts every sample, selects a CRF for the target VMAF on the projected
/// curve, and measures accuracy against the ground-truth curves. The actual
/// VMAF at the selected (on-grid) CRF is read from the truth curve.
pub fn evaluate_cohort(
    bundle: &ModelBundle,
    samples: &[TrainSample],
    target: f64,
    tolerance: f64,
) -> Result<EvalReport> {
    if samples.is_empty() {
        return Err(Error::Shape("evaluation cohort is empty".into()));
    }
    let grid = CrfGrid::standard();
    let rows: Vec<(RateQualityCurve, PerVideoRow)> = samples
        .par_iter()
        .map(|s| -> Result<(RateQualityCurve, PerVideoRow)> {
            let pred = bundle.predict(&s.features, s.anchor.as_ref())?;
            let choice = crf_for_target_vmaf(&monotone_project(&pred), target, &grid);
            let idx = grid.index_of(choice.crf)?;
            let actual = s.truth.vmaf()[idx];
            Ok((
                pred,
                PerVideoRow {
                    id: s.id.clone(),
                    d_i: (actual - target).abs(),
                    selected_crf: choice.crf,
                    actual_vmaf: actual,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let preds: Vec<RateQualityCurve> = rows.iter().map(|(p, _)| p.clone()).collect();
    let truths: Vec<RateQualityCurve> = samples.iter().map(|s| s.truth.clone()).collect();
    let (vmaf_mae, bitrate_mae) = curve_mae(&preds, &truths)?;
    let actuals: Vec<f64> = rows.iter().map(|(_, r)| r.actual_vmaf).collect();
    let v = vacc(&actuals, target, tolerance)?;
    Ok(EvalReport {
        vmaf_mae,
        bitrate_mae,
        vacc: v,
        n: samples.len(),
        target_vmaf: target,
        tolerance,
        per_video: rows.into_iter().map(|(_, r)| r).collect(),
    })
}

/// One ablation row: config, per-seed reports, and the across-seed means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: String,
    pub mean_vmaf_mae: f64,
    pub mean_bitrate_mae: f64,
    pub mean_vacc: f64,
    pub reports: Vec<EvalReport>,
}

/// Trains and evaluates every ablation configuration with identical data and
/// seeds, so differences are attributable to the configuration alone.
pub fn run_ablation_suite(
    dataset: &Dataset,
    seeds: &[u64],
    base: &PredictorConfig,
    target: f64,
    tolerance: f64,
) -> Result<Vec<AblationRow>> {
    if seeds.is_empty() {
        return Err(Error::Config("ablation suite needs at least one seed".into()));
    }
    let mut rows = Vec::new();
    for ablation in Ablation::ALL {
        let config = PredictorConfig { ablation, ..*base };
        let mut reports = Vec::new();
        for &seed in seeds {
            let (bundle, _) = train(dataset, &config, seed)?;
            reports.push(evaluate_cohort(&bundle, &dataset.test, target, tolerance)?);
        }
        let n = reports.len() as f64;
        rows.push(AblationRow {
            ablation: ablation.to_string(),
            mean_vmaf_mae: reports.iter().map(|r| r.vmaf_mae).sum::<f64>() / n,
            mean_bitrate_mae: reports.iter().map(|r| r.bitrate_mae).sum::<f64>() / n,
            mean_vacc: reports.iter().map(|r| r.vacc).sum::<f64>() / n,
            reports,
        });
    }
    Ok(rows)
}

/// Renders the ablation table in the usual comparison layout.
pub fn format_ablation_table(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<22} {:>10} {:>9} {:>14}\n",
        "", "VMAF MAE", "VACC", "Bitrate MAE"
    ));
    for r in rows {
        out.push_str(&format!(
            "{:<22} {:>10.4} {:>8.2}% {:>11.2} kbps\n",
            r.ablation,
            r.mean_vmaf_mae,
            r.mean_vacc * 100.0,
            r.mean_bitrate_mae
        ));
    }
    out
}

/// Writes one video's predicted and true curves as CSV: header plus 101 data
/// rows, ready for any plotting tool.
pub fn emit_curve_csv(pred: &RateQualityCurve, truth: &RateQualityCurve, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_curve_csv(&mut w, pred, truth)
}

pub fn write_curve_csv(
    w: &mut impl Write,
    pred: &RateQualityCurve,
    truth: &RateQualityCurve,
) -> Result<()> {
    let grid = CrfGrid::standard();
    writeln!(w, "crf,pred_vmaf,true_vmaf,pred_bitrate,true_bitrate")?;
    for i in 0..grid.count() {
        writeln!(
            w,
            "{},{},{},{},{}",
            grid.crf_of(i)?,
            pred.vmaf()[i],
            truth.vmaf()[i],
            pred.bitrate()[i],
            truth.bitrate()[i]
        )?;
    }
    Ok(())
}

/// Convenience used by the CLI and acceptance harness: prediction with the
/// clamp applied, as a standalone curve.
pub fn clamped_prediction(
    bundle: &ModelBundle,
    sample: &TrainSample,
) -> Result<RateQualityCurve> {
    let pred = bundle.predict(&sample.features, sample.anchor.as_ref())?;
    clamp_curve(&pred)
}
