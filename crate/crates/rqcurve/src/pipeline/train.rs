//! End-to-end and two-stage training of the 1-pass / 2-pass predictor.
//!
//! Full, no-suspension and no-anchor-features configurations train both
//! networks jointly against a single final-output loss, with gradients
//! flowing through the 2-pass network, the suspension shift and the 1-pass
//! network. The no-end2end configuration trains the 1-pass network to
//! convergence first (loss on its suspended output), freezes it, then trains
//! the 2-pass network on the residual objective.
//!
//! Training is single-threaded and bitwise deterministic for a fixed seed.

use super::{input_dim, Ablation, ModelBundle, PredictorConfig, SuspensionMode};
use crate::core::{AnchorPoint, CrfGrid, FeatureVector, RateQualityCurve, GRID_COUNT};
use crate::error::{Error, Result};
use crate::nn::{
    adam_step, loss::loss_eq1_grad, loss::OUTPUT_DIM, AdamState, Mat, Mlp, MlpGrads, MlpSpec, Mode,
};
use crate::pipeline::suspend::{suspend_row, suspend_row_backward};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::time::Instant;

/// One labeled video.
#[derive(Debug, Clone)]
pub struct TrainSample {
    pub id: String,
    pub features: FeatureVector,
    pub anchor: Option<AnchorPoint>,
    pub truth: RateQualityCurve,
}

/// Train/test split. The test half is only read for reporting.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<TrainSample>,
    pub test: Vec<TrainSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub stage: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub train_vmaf_mae: f64,
    pub train_bitrate_mae: f64,
    pub test_vmaf_mae: f64,
    pub test_bitrate_mae: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub per_epoch: Vec<EpochStats>,
    pub final_train_loss: f64,
    pub final_test_vmaf_mae: f64,
    pub final_test_bitrate_mae: f64,
    pub wall_seconds: f64,
}

struct Prepared {
    x: Mat,
    truth: Mat,
    anchors: Vec<AnchorPoint>,
    anchor_index: usize,
}

fn prepare(
    samples: &[TrainSample],
    config: &PredictorConfig,
    codec_dim: usize,
    content_dim: usize,
    grid: &CrfGrid,
) -> Result<Prepared> {
    let ab = config.ablation;
    let d = input_dim(codec_dim, content_dim, ab);
    let anchor_index = grid.index_of(config.anchor_crf)?;
    let mut x = Mat::zeros(samples.len(), d);
    let mut truth = Mat::zeros(samples.len(), OUTPUT_DIM);
    let mut anchors = Vec::with_capacity(samples.len());
    for (i, s) in samples.iter().enumerate() {
        s.features.check_dims(codec_dim, content_dim, false)?;
        let row = super::input_row(&s.features, s.anchor.as_ref(), codec_dim, content_dim, ab)?;
        x.row_mut(i).copy_from_slice(&row);
        truth.row_mut(i)[..GRID_COUNT].copy_from_slice(s.truth.vmaf());
        truth.row_mut(i)[GRID_COUNT..].copy_from_slice(s.truth.bitrate());
        if ab.uses_suspension() {
            let a = s.anchor.ok_or_else(|| {
                Error::Schema(format!("sample {:?} has no anchor point", s.id))
            })?;
            if (a.crf - config.anchor_crf).abs() > 1e-9 {
                return Err(Error::Schema(format!(
                    "sample {:?} anchored at crf {}, config says {}",
                    s.id, a.crf, config.anchor_crf
                )));
            }
            a.grid_index(grid)?;
            anchors.push(a);
        }
    }
    Ok(Prepared { x, truth, anchors, anchor_index })
}

fn gather(mat: &Mat, indices: &[usize]) -> Mat {
    let mut out = Mat::zeros(indices.len(), mat.cols);
    for (r, &i) in indices.iter().enumerate() {
        out.row_mut(r).copy_from_slice(mat.row(i));
    }
    out
}

fn concat_cols(a: &Mat, b: &Mat) -> Mat {
    assert_eq!(a.rows, b.rows);
    let mut out = Mat::zeros(a.rows, a.cols + b.cols);
    for i in 0..a.rows {
        out.row_mut(i)[..a.cols].copy_from_slice(a.row(i));
        out.row_mut(i)[a.cols..].copy_from_slice(b.row(i));
    }
    out
}

fn suspend_batch(
    out1: &Mat,
    anchors: &[AnchorPoint],
    indices: &[usize],
    anchor_index: usize,
    mode: SuspensionMode,
) -> Result<Mat> {
    let mut s = out1.clone();
    for (r, &i) in indices.iter().enumerate() {
        suspend_row(s.row_mut(r), &anchors[i], anchor_index, mode)?;
    }
    Ok(s)
}

fn suspend_batch_backward(
    ds: &Mat,
    out1: &Mat,
    anchors: &[AnchorPoint],
    indices: &[usize],
    anchor_index: usize,
    mode: SuspensionMode,
) -> Mat {
    let mut d = Mat::zeros(ds.rows, ds.cols);
    for (r, &i) in indices.iter().enumerate() {
        let g = suspend_row_backward(ds.row(r), out1.row(r), &anchors[i], anchor_index, mode);
        d.row_mut(r).copy_from_slice(&g);
    }
    d
}

/// Eval-mode inference over a matrix of inputs; returns the unclamped final
/// output rows.
pub(crate) fn infer_matrix(
    net1: &Mlp,
    net2: &Mlp,
    x: &Mat,
    anchors: Option<(&[AnchorPoint], usize)>,
    mode: SuspensionMode,
) -> Result<Mat> {
    let out1 = net1.forward_eval(x)?;
    let s = match anchors {
        Some((anchors, a_idx)) => {
            let mut s = out1;
            for i in 0..s.rows {
                suspend_row(s.row_mut(i), &anchors[i], a_idx, mode)?;
            }
            s
        }
        None => out1,
    };
    let x2 = concat_cols(&s, x);
    let r = net2.forward_eval(&x2)?;
    let mut final_out = s;
    for (a, b) in final_out.data.iter_mut().zip(r.data.iter()) {
        *a += b;
    }
    Ok(final_out)
}

/// Mean absolute error per channel of clamped predictions against the truth.
fn mae_of(pred: &Mat, truth: &Mat) -> (f64, f64) {
    let mut v = 0.0;
    let mut r = 0.0;
    for i in 0..pred.rows {
        let p = pred.row(i);
        let t = truth.row(i);
        for j in 0..GRID_COUNT {
            v += (p[j].clamp(0.0, 100.0) - t[j]).abs();
            r += (p[GRID_COUNT + j].max(crate::core::BITRATE_FLOOR_KBPS) - t[GRID_COUNT + j]).abs();
        }
    }
    let n = (pred.rows * GRID_COUNT) as f64;
    (v / n, r / n)
}

struct Nets {
    net1: Mlp,
    net2: Mlp,
    g1: MlpGrads,
    g2: MlpGrads,
    st1: AdamState,
    st2: AdamState,
}

impl Nets {
    fn init(d: usize, config: &PredictorConfig, rng: &mut ChaCha8Rng) -> Self {
        let h = &config.hyper;
        let net1 = Mlp::init(MlpSpec::new(d, h.hidden, h.res_blocks, OUTPUT_DIM), rng);
        let net2 = Mlp::init(MlpSpec::new(OUTPUT_DIM + d, h.hidden, h.res_blocks, OUTPUT_DIM), rng);
        let g1 = net1.zero_grads();
        let g2 = net2.zero_grads();
        let st1 = AdamState::for_slices(&g1.slices().iter().map(|s| s.len()).collect::<Vec<_>>());
        let st2 = AdamState::for_slices(&g2.slices().iter().map(|s| s.len()).collect::<Vec<_>>());
        Nets { net1, net2, g1, g2, st1, st2 }
    }

    fn step1(&mut self, h: &super::TrainHyper) {
        let mut params = self.net1.param_slices_mut();
        adam_step(&mut params, &self.g1.slices(), &mut self.st1, h.lr, (h.beta1, h.beta2), h.adam_eps);
    }

    fn step2(&mut self, h: &super::TrainHyper) {
        let mut params = self.net2.param_slices_mut();
        adam_step(&mut params, &self.g2.slices(), &mut self.st2, h.lr, (h.beta1, h.beta2), h.adam_eps);
    }
}

enum Stage {
    Joint,
    Net1Only,
    Net2Only,
}

/// One minibatch update; returns the batch loss.
fn train_batch(
    nets: &mut Nets,
    prep: &Prepared,
    indices: &[usize],
    config: &PredictorConfig,
    stage: &Stage,
) -> Result<f64> {
    let xb = gather(&prep.x, indices);
    let tb = gather(&prep.truth, indices);
    let lambda = config.loss.lambda;
    let suspends = config.ablation.uses_suspension();
    let mode = config.suspension;

    match stage {
        Stage::Net1Only => {
            let (out1, c1) = nets.net1.forward(&xb, Mode::Train)?;
            let c1 = c1.expect("train cache");
            let s = suspend_batch(&out1, &prep.anchors, indices, prep.anchor_index, mode)?;
            let (loss, ds) = loss_eq1_grad(&s, &tb, lambda);
            let dout1 =
                suspend_batch_backward(&ds, &out1, &prep.anchors, indices, prep.anchor_index, mode);
            nets.g1.zero();
            nets.net1.backward(&c1, &dout1, &mut nets.g1);
            nets.step1(&config.hyper);
            Ok(loss)
        }
        Stage::Net2Only => {
            let out1 = nets.net1.forward_eval(&xb)?;
            let s = suspend_batch(&out1, &prep.anchors, indices, prep.anchor_index, mode)?;
            let x2 = concat_cols(&s, &xb);
            let (r, c2) = nets.net2.forward(&x2, Mode::Train)?;
            let c2 = c2.expect("train cache");
            let mut final_out = s;
            for (a, b) in final_out.data.iter_mut().zip(r.data.iter()) {
                *a += b;
            }
            let (loss, dfinal) = loss_eq1_grad(&final_out, &tb, lambda);
            nets.g2.zero();
            nets.net2.backward(&c2, &dfinal, &mut nets.g2);
            nets.step2(&config.hyper);
            Ok(loss)
        }
        Stage::Joint => {
            let (out1, c1) = nets.net1.forward(&xb, Mode::Train)?;
            let c1 = c1.expect("train cache");
            let s = if suspends {
                suspend_batch(&out1, &prep.anchors, indices, prep.anchor_index, mode)?
            } else {
                out1.clone()
            };
            let x2 = concat_cols(&s, &xb);
            let (r, c2) = nets.net2.forward(&x2, Mode::Train)?;
            let c2 = c2.expect("train cache");
            let mut final_out = s;
            for (a, b) in final_out.data.iter_mut().zip(r.data.iter()) {
                *a += b;
            }
            let (loss, dfinal) = loss_eq1_grad(&final_out, &tb, lambda);

            // residual path
            nets.g2.zero();
            let dx2 = nets.net2.backward(&c2, &dfinal, &mut nets.g2);

            // identity path plus the gradient entering through net2's input
            let mut ds = dfinal;
            for i in 0..ds.rows {
                let extra = &dx2.row(i)[..OUTPUT_DIM];
                for (a, b) in ds.row_mut(i).iter_mut().zip(extra.iter()) {
                    *a += b;
                }
            }
            let dout1 = if suspends {
                suspend_batch_backward(&ds, &out1, &prep.anchors, indices, prep.anchor_index, mode)
            } else {
                ds
            };
            nets.g1.zero();
            nets.net1.backward(&c1, &dout1, &mut nets.g1);
            nets.step1(&config.hyper);
            nets.step2(&config.hyper);
            Ok(loss)
        }
    }
}

fn run_stage(
    nets: &mut Nets,
    prep_train: &Prepared,
    prep_test: Option<&Prepared>,
    config: &PredictorConfig,
    stage: Stage,
    stage_name: &str,
    rng: &mut ChaCha8Rng,
    report: &mut Vec<EpochStats>,
) -> Result<f64> {
    let h = &config.hyper;
    let n = prep_train.x.rows;
    let mut order: Vec<usize> = (0..n).collect();
    let mut last_loss = f64::NAN;
    for epoch in 0..h.epochs {
        order.shuffle(rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(h.batch_size) {
            let loss = train_batch(nets, prep_train, chunk, config, &stage)?;
            if !loss.is_finite() {
                return Err(Error::Training { epoch, msg: format!("batch loss {loss}") });
            }
            epoch_loss += loss;
            batches += 1;
        }
        last_loss = epoch_loss / batches.max(1) as f64;
        if h.track_epoch_mae {
            let (train_v, train_r) = stage_mae(nets, prep_train, config)?;
            let (test_v, test_r) = match prep_test {
                Some(p) => stage_mae(nets, p, config)?,
                None => (f64::NAN, f64::NAN),
            };
            report.push(EpochStats {
                stage: stage_name.to_string(),
                epoch,
                train_loss: last_loss,
                train_vmaf_mae: train_v,
                train_bitrate_mae: train_r,
                test_vmaf_mae: test_v,
                test_bitrate_mae: test_r,
            });
        }
    }
    Ok(last_loss)
}

fn stage_mae(nets: &Nets, prep: &Prepared, config: &PredictorConfig) -> Result<(f64, f64)> {
    let anchors = if config.ablation.uses_suspension() {
        Some((prep.anchors.as_slice(), prep.anchor_index))
    } else {
        None
    };
    let out = infer_matrix(&nets.net1, &nets.net2, &prep.x, anchors, config.suspension)?;
    Ok(mae_of(&out, &prep.truth))
}

/// Trains a model bundle on the dataset. Deterministic: the same dataset,
/// config and seed reproduce bitwise-identical weights.
pub fn train(
    dataset: &Dataset,
    config: &PredictorConfig,
    seed: u64,
) -> Result<(ModelBundle, TrainReport)> {
    let started = Instant::now();
    let grid = CrfGrid::standard();
    config.validate(&grid)?;
    let first = dataset
        .train
        .first()
        .ok_or_else(|| Error::Schema("training set is empty".into()))?;
    let codec_dim = first.features.codec.len();
    let content_dim = first.features.content.len();

    let prep_train = prepare(&dataset.train, config, codec_dim, content_dim, &grid)?;
    let prep_test = if dataset.test.is_empty() {
        None
    } else {
        Some(prepare(&dataset.test, config, codec_dim, content_dim, &grid)?)
    };

    let d = input_dim(codec_dim, content_dim, config.ablation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nets = Nets::init(d, config, &mut rng);
    let mut per_epoch = Vec::new();

    let final_train_loss = match config.ablation {
        Ablation::NoEnd2End => {
            run_stage(
                &mut nets,
                &prep_train,
                prep_test.as_ref(),
                config,
                Stage::Net1Only,
                "net1",
                &mut rng,
                &mut per_epoch,
            )?;
            run_stage(
                &mut nets,
                &prep_train,
                prep_test.as_ref(),
                config,
                Stage::Net2Only,
                "net2",
                &mut rng,
                &mut per_epoch,
            )?
        }
        _ => run_stage(
            &mut nets,
            &prep_train,
            prep_test.as_ref(),
            config,
            Stage::Joint,
            "joint",
            &mut rng,
            &mut per_epoch,
        )?,
    };

    let (test_v, test_r) = match prep_test.as_ref() {
        Some(p) => stage_mae(&nets, p, config)?,
        None => (f64::NAN, f64::NAN),
    };
    let report = TrainReport {
        per_epoch,
        final_train_loss,
        final_test_vmaf_mae: test_v,
        final_test_bitrate_mae: test_r,
        wall_seconds: started.elapsed().as_secs_f64(),
    };
    let bundle = ModelBundle {
        config: *config,
        grid,
        codec_dim,
        content_dim,
        net1: nets.net1,
        net2: nets.net2,
    };
    Ok((bundle, report))
}
