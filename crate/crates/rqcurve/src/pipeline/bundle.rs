//! Model bundle persistence: a config header followed by the two embedded
//! network files.

use super::{Ablation, ModelBundle, PredictorConfig, SuspensionMode, TrainHyper};
use crate::core::CrfGrid;
use crate::error::{Error, Result};
use crate::features::feature_schema_tag;
use crate::nn::io::{load_model, save_model};
use crate::nn::LossConfig;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const BUNDLE_MAGIC: &str = "rqbundle";
pub const BUNDLE_VERSION: u32 = 1;

pub fn save_bundle(path: &Path, bundle: &mut ModelBundle) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    save_bundle_to(&mut w, bundle)
}

pub fn save_bundle_to(w: &mut impl Write, bundle: &mut ModelBundle) -> Result<()> {
    let c = &bundle.config;
    writeln!(w, "{BUNDLE_MAGIC} {BUNDLE_VERSION}")?;
    writeln!(
        w,
        "config anchor_crf={} ablation={} suspension={} lambda={}",
        c.anchor_crf, c.ablation, c.suspension, c.loss.lambda
    )?;
    let h = &c.hyper;
    writeln!(
        w,
        "hyper epochs={} batch={} lr={} beta1={} beta2={} adam_eps={} hidden={} res_blocks={} track_mae={}",
        h.epochs, h.batch_size, h.lr, h.beta1, h.beta2, h.adam_eps, h.hidden, h.res_blocks, h.track_epoch_mae
    )?;
    writeln!(
        w,
        "schema codec={} content={} tag={}",
        bundle.codec_dim,
        bundle.content_dim,
        feature_schema_tag()
    )?;
    let meta = vec![
        ("schema".to_string(), feature_schema_tag()),
        ("ablation".to_string(), c.ablation.to_string()),
        ("suspension".to_string(), c.suspension.to_string()),
    ];
    save_model(w, &mut bundle.net1, &meta)?;
    save_model(w, &mut bundle.net2, &meta)?;
    Ok(())
}

pub fn load_bundle(path: &Path) -> Result<ModelBundle> {
    let file = std::fs::File::open(path)?;
    load_bundle_from(&mut BufReader::new(file))
}

fn kv_map(line: &str, prefix: &str) -> Result<std::collections::BTreeMap<String, String>> {
    let rest = line
        .strip_prefix(prefix)
        .ok_or_else(|| Error::parse("bundle header", format!("expected {prefix:?} line")))?;
    let mut map = std::collections::BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse("bundle header", format!("malformed token {tok:?}")))?;
        map.insert(k.to_string(), v.to_string());
    }
    Ok(map)
}

fn take<T: std::str::FromStr>(
    map: &std::collections::BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    map.get(key)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Schema(format!("bundle header missing or invalid {key:?}")))
}

pub fn load_bundle_from(r: &mut impl BufRead) -> Result<ModelBundle> {
    let mut line = String::new();
    let mut next_line = |r: &mut dyn BufRead, line: &mut String| -> Result<()> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(Error::parse("bundle header", "unexpected end of file"));
        }
        while line.ends_with('\n') || line.ends_with('\r') {
            line.pop();
        }
        Ok(())
    };

    next_line(r, &mut line)?;
    let mut it = line.split_whitespace();
    if it.next() != Some(BUNDLE_MAGIC) {
        return Err(Error::parse("bundle header", "bad magic"));
    }
    match it.next().and_then(|v| v.parse::<u32>().ok()) {
        Some(BUNDLE_VERSION) => {}
        other => return Err(Error::Schema(format!("unsupported bundle version {other:?}"))),
    }

    next_line(r, &mut line)?;
    let cfg = kv_map(&line, "config ")?;
    next_line(r, &mut line)?;
    let hyper = kv_map(&line, "hyper ")?;
    next_line(r, &mut line)?;
    let schema = kv_map(&line, "schema ")?;

    let tag: String = take(&schema, "tag")?;
    if tag != feature_schema_tag() {
        return Err(Error::Schema(format!(
            "feature schema mismatch: bundle carries {tag:?}, this build expects {:?}",
            feature_schema_tag()
        )));
    }

    let config = PredictorConfig {
        anchor_crf: take(&cfg, "anchor_crf")?,
        ablation: take::<Ablation>(&cfg, "ablation")?,
        suspension: take::<SuspensionMode>(&cfg, "suspension")?,
        loss: LossConfig { lambda: take(&cfg, "lambda")? },
        hyper: TrainHyper {
            epochs: take(&hyper, "epochs")?,
            batch_size: take(&hyper, "batch")?,
            lr: take(&hyper, "lr")?,
            beta1: take(&hyper, "beta1")?,
            beta2: take(&hyper, "beta2")?,
            adam_eps: take(&hyper, "adam_eps")?,
            hidden: take(&hyper, "hidden")?,
            res_blocks: take(&hyper, "res_blocks")?,
            track_epoch_mae: take(&hyper, "track_mae")?,
        },
    };
    let grid = CrfGrid::standard();
    config.validate(&grid)?;

    let codec_dim: usize = take(&schema, "codec")?;
    let content_dim: usize = take(&schema, "content")?;

    let (net1, _) = load_model(r)?;
    let (net2, _) = load_model(r)?;
    let expect_d = super::input_dim(codec_dim, content_dim, config.ablation);
    if net1.spec.input_dim != expect_d {
        return Err(Error::Schema(format!(
            "net1 input width {} does not match schema width {expect_d}",
            net1.spec.input_dim
        )));
    }
    if net2.spec.input_dim != crate::nn::loss::OUTPUT_DIM + expect_d {
        return Err(Error::Schema(format!(
            "net2 input width {} does not match schema width {}",
            net2.spec.input_dim,
            crate::nn::loss::OUTPUT_DIM + expect_d
        )));
    }
    Ok(ModelBundle { config, grid, codec_dim, content_dim, net1, net2 })
}
