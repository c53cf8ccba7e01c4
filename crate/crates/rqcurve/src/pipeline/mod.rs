//! The three-stage predictor: 1-pass prediction, anchor suspension, 2-pass
//! residual prediction, plus end-to-end training, ablation modes, dataset
//! file I/O and model persistence.

pub mod bundle;
pub mod files;
pub mod suspend;
pub mod train;

pub use bundle::{load_bundle, load_bundle_from, save_bundle, save_bundle_to};
pub use files::{
    read_feature_file, read_feature_records, write_feature_file, write_feature_records,
    FeatureFileSchema, FeatureRecord,
};
pub use suspend::{suspend, suspend_backward, suspend_row, suspend_row_backward, SuspensionMode};
pub use train::{train, Dataset, EpochStats, TrainReport, TrainSample};

use crate::codec::{CodecBackend, EncodeInput};
use crate::core::{
    clamp_curve, AnchorPoint, CrfGrid, FeatureVector, RateQualityCurve, GRID_COUNT,
};
use crate::error::{Error, Result};
use crate::nn::{loss::OUTPUT_DIM, LossConfig, Mat, Mlp};
use crate::simcodec::SimDataset;
use crate::strategy::{crf_for_target_vmaf, monotone_project, LookupOutcome};
use serde::{Deserialize, Serialize};

/// Which pipeline pieces are disabled, mirroring the ablation study rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ablation {
    Full,
    /// No anchor features in the input and no suspension.
    NoAnchorFeatures,
    /// Anchor features stay in the input but the curves are not suspended.
    NoSuspension,
    /// Two networks trained in separate stages instead of jointly.
    NoEnd2End,
}

impl Ablation {
    pub const ALL: [Ablation; 4] =
        [Ablation::Full, Ablation::NoAnchorFeatures, Ablation::NoSuspension, Ablation::NoEnd2End];

    pub fn uses_anchor_features(&self) -> bool {
        !matches!(self, Ablation::NoAnchorFeatures)
    }

    pub fn uses_suspension(&self) -> bool {
        matches!(self, Ablation::Full | Ablation::NoEnd2End)
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Ablation::Full => "full",
            Ablation::NoAnchorFeatures => "no-anchor-features",
            Ablation::NoSuspension => "no-suspension",
            Ablation::NoEnd2End => "no-end2end",
        };
        write!(f, "{s}")
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Ablation::Full),
            "no-anchor-features" => Ok(Ablation::NoAnchorFeatures),
            "no-suspension" => Ok(Ablation::NoSuspension),
            "no-end2end" => Ok(Ablation::NoEnd2End),
            other => Err(Error::Config(format!("unknown ablation {other:?}"))),
        }
    }
}

/// Training hyperparameters. The defaults are the frozen reference settings;
/// alternatives are configuration, not code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainHyper {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub hidden: usize,
    pub res_blocks: usize,
    /// Record train/test curve MAE after every epoch (costs one extra pass).
    pub track_epoch_mae: bool,
}

impl Default for TrainHyper {
    fn default() -> Self {
        TrainHyper {
            epochs: 200,
            batch_size: 64,
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            hidden: 256,
            res_blocks: 2,
            track_epoch_mae: true,
        }
    }
}

/// Everything that defines a trained predictor besides the weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub anchor_crf: f64,
    pub ablation: Ablation,
    pub suspension: SuspensionMode,
    pub loss: LossConfig,
    pub hyper: TrainHyper,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            anchor_crf: 30.4,
            ablation: Ablation::Full,
            suspension: SuspensionMode::Additive,
            loss: LossConfig::default(),
            hyper: TrainHyper::default(),
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self, grid: &CrfGrid) -> Result<()> {
        grid.index_of(self.anchor_crf)
            .map_err(|_| Error::Config(format!("anchor crf {} is not on the grid", self.anchor_crf)))?;
        self.loss.validate()?;
        let h = &self.hyper;
        if h.epochs == 0 || h.batch_size == 0 || h.hidden == 0 {
            return Err(Error::Config("epochs, batch size and hidden width must be positive".into()));
        }
        if !(h.lr > 0.0) || !(0.0..1.0).contains(&h.beta1) || !(0.0..1.0).contains(&h.beta2) {
            return Err(Error::Config("invalid optimizer hyperparameters".into()));
        }
        Ok(())
    }
}

/// A trained two-network predictor with its configuration and feature schema
/// dims.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub config: PredictorConfig,
    pub grid: CrfGrid,
    pub codec_dim: usize,
    pub content_dim: usize,
    pub net1: Mlp,
    pub net2: Mlp,
}

/// Input width of the 1-pass network for a given schema and ablation.
pub fn input_dim(codec_dim: usize, content_dim: usize, ablation: Ablation) -> usize {
    codec_dim + content_dim + if ablation.uses_anchor_features() { 2 } else { 0 }
}

/// Flattens a feature vector into a network input row, honoring the ablation.
fn input_row(
    features: &FeatureVector,
    anchor: Option<&AnchorPoint>,
    codec_dim: usize,
    content_dim: usize,
    ablation: Ablation,
) -> Result<Vec<f64>> {
    features.check_dims(codec_dim, content_dim, false)?;
    let mut row = Vec::with_capacity(input_dim(codec_dim, content_dim, ablation));
    row.extend_from_slice(&features.codec);
    row.extend_from_slice(&features.content);
    if ablation.uses_anchor_features() {
        let seg = features
            .anchor
            .or_else(|| anchor.map(|a| a.feature_segment()))
            .ok_or_else(|| Error::Schema("anchor features required but absent".into()))?;
        row.extend_from_slice(&seg);
    }
    Ok(row)
}

impl ModelBundle {
    /// Full three-stage inference for one video: 1-pass prediction, anchor
    /// suspension (per config), 2-pass residual, clamp.
    pub fn predict(
        &self,
        features: &FeatureVector,
        anchor: Option<&AnchorPoint>,
    ) -> Result<RateQualityCurve> {
        let (curve, _) = self.predict_with_stage1(features, anchor)?;
        Ok(curve)
    }

    /// As [`predict`](Self::predict) but also returns the raw 1-pass output
    /// row for callers that re-suspend (dynamic anchor retargeting).
    pub fn predict_with_stage1(
        &self,
        features: &FeatureVector,
        anchor: Option<&AnchorPoint>,
    ) -> Result<(RateQualityCurve, Vec<f64>)> {
        let x = input_row(features, anchor, self.codec_dim, self.content_dim, self.config.ablation)?;
        let out1 = self.stage1_row(&x)?;
        let anchor_ref = if self.config.ablation.uses_suspension() {
            Some(self.check_anchor(anchor)?)
        } else {
            None
        };
        let curve = self.finish_from_stage1(&x, &out1, anchor_ref)?;
        Ok((curve, out1))
    }

    fn check_anchor<'a>(&self, anchor: Option<&'a AnchorPoint>) -> Result<&'a AnchorPoint> {
        let a = anchor.ok_or_else(|| {
            Error::Schema("suspension requires an anchor point, none provided".into())
        })?;
        a.grid_index(&self.grid)?;
        Ok(a)
    }

    fn stage1_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let xm = Mat::from_vec(1, x.len(), x.to_vec());
        let y = self.net1.forward_eval(&xm)?;
        Ok(y.data)
    }

    /// Runs suspension (optional) and the 2-pass network from a 1-pass output
    /// row, then clamps.
    pub(crate) fn finish_from_stage1(
        &self,
        x: &[f64],
        out1: &[f64],
        anchor: Option<&AnchorPoint>,
    ) -> Result<RateQualityCurve> {
        if out1.len() != OUTPUT_DIM {
            return Err(Error::Shape(format!("stage-1 row has width {}", out1.len())));
        }
        let mut s = out1.to_vec();
        if let Some(a) = anchor {
            let idx = a.grid_index(&self.grid)?;
            suspend_row(&mut s, a, idx, self.config.suspension)?;
        }
        let mut x2 = Vec::with_capacity(OUTPUT_DIM + x.len());
        x2.extend_from_slice(&s);
        x2.extend_from_slice(x);
        let x2m = Mat::from_vec(1, x2.len(), x2);
        let residual = self.net2.forward_eval(&x2m)?;
        let final_row: Vec<f64> =
            s.iter().zip(residual.data.iter()).map(|(a, b)| a + b).collect();
        let (vmaf, rate) = final_row.split_at(GRID_COUNT);
        clamp_curve(&RateQualityCurve::new(vmaf.to_vec(), rate.to_vec())?)
    }
}

/// Outcome of dynamic anchor retargeting.
#[derive(Debug, Clone)]
pub struct RetargetOutcome {
    pub anchor: AnchorPoint,
    pub curve: RateQualityCurve,
    /// The target VMAF was outside the suspended 1-pass curve; the anchor
    /// fell back to the nearest extreme CRF.
    pub target_unreachable: bool,
}

/// Strategy-coupled anchor selection: find the CRF matching the target VMAF
/// on the suspended 1-pass curve, measure there, and rerun suspension and the
/// 2-pass from the measured point.
pub fn dynamic_anchor_retarget(
    bundle: &ModelBundle,
    features: &FeatureVector,
    initial_anchor: &AnchorPoint,
    target_vmaf: f64,
    backend: &dyn CodecBackend,
    input: &EncodeInput,
) -> Result<RetargetOutcome> {
    if !bundle.config.ablation.uses_suspension() {
        return Err(Error::Config(
            "dynamic anchor retargeting needs a suspension-enabled model".into(),
        ));
    }
    let x = input_row(
        features,
        Some(initial_anchor),
        bundle.codec_dim,
        bundle.content_dim,
        bundle.config.ablation,
    )?;
    let out1 = bundle.stage1_row(&x)?;

    // Suspend at the prior anchor and look up the target on that curve.
    let mut s = out1.clone();
    let idx0 = initial_anchor.grid_index(&bundle.grid)?;
    suspend_row(&mut s, initial_anchor, idx0, bundle.config.suspension)?;
    let (sv, sr) = s.split_at(GRID_COUNT);
    let suspended = clamp_curve(&RateQualityCurve::new(sv.to_vec(), sr.to_vec())?)?;
    let lookup = crf_for_target_vmaf(&monotone_project(&suspended), target_vmaf, &bundle.grid);

    let measured = backend.encode_measure(input, lookup.crf)?;
    let new_anchor =
        AnchorPoint { crf: lookup.crf, bitrate: measured.bitrate, vmaf: measured.vmaf };
    let curve = bundle.finish_from_stage1(&x, &out1, Some(&new_anchor))?;
    Ok(RetargetOutcome {
        anchor: new_anchor,
        curve,
        target_unreachable: lookup.outcome != LookupOutcome::Reached,
    })
}

/// Converts synthetic samples into training samples.
impl Dataset {
    pub fn from_sim(d: &SimDataset) -> Dataset {
        let conv = |s: &crate::simcodec::SimSample| TrainSample {
            id: s.id.clone(),
            features: s.features.clone(),
            anchor: Some(s.anchor),
            truth: s.truth.clone(),
        };
        Dataset {
            train: d.train.iter().map(conv).collect(),
            test: d.test.iter().map(conv).collect(),
        }
    }

    /// Builds a dataset from labeled feature records; every record must carry
    /// labels.
    pub fn from_records(
        train: Vec<FeatureRecord>,
        test: Vec<FeatureRecord>,
    ) -> Result<Dataset> {
        let conv = |r: FeatureRecord| -> Result<TrainSample> {
            let labels = r.labels.ok_or_else(|| {
                Error::Schema(format!("record {:?} has no ground-truth labels", r.id))
            })?;
            Ok(TrainSample { id: r.id, features: r.features, anchor: r.anchor_point, truth: labels })
        };
        Ok(Dataset {
            train: train.into_iter().map(conv).collect::<Result<_>>()?,
            test: test.into_iter().map(conv).collect::<Result<_>>()?,
        })
    }
}
