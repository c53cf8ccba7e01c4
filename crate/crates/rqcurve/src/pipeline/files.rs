//! Line-delimited feature file format.
//!
//! ```text
//! rqfeat 1 codec=113 content=65 anchor=2 labels=202
//! <id>|<codec csv>|<content csv>|<anchor segment csv or empty>|<anchor point crf,bitrate,vmaf or empty>|<202 label csv or empty>
//! ```
//!
//! The header carries the schema version and segment dims; records must match
//! it exactly. `labels=202` files carry ground-truth curves; `labels=0` files
//! load in inference-only mode. Floats are written in shortest round-trip
//! form, so write-then-read reproduces values exactly.

use crate::core::{AnchorPoint, FeatureVector, RateQualityCurve, GRID_COUNT};
use crate::error::{Error, Result};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

pub const FEATURE_FILE_MAGIC: &str = "rqfeat";
pub const FEATURE_FILE_VERSION: u32 = 1;

/// One video's persisted record.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub id: String,
    pub features: FeatureVector,
    pub anchor_point: Option<AnchorPoint>,
    pub labels: Option<RateQualityCurve>,
}

/// Declared segment dims of a feature file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureFileSchema {
    pub codec_dim: usize,
    pub content_dim: usize,
    pub anchor_dim: usize,
    pub label_dim: usize,
}

fn write_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(&format!("{v}"));
    }
}

fn parse_floats(field: &str, what: &str, line: usize) -> Result<Vec<f64>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field
        .split(',')
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| {
                Error::parse(format!("line {line}"), format!("bad float {tok:?} in {what}"))
            })
        })
        .collect()
}

pub fn write_feature_file(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_feature_records(&mut w, records)
}

pub fn write_feature_records(w: &mut impl Write, records: &[FeatureRecord]) -> Result<()> {
    let first = records
        .first()
        .ok_or_else(|| Error::Schema("cannot write an empty feature file".into()))?;
    let schema = FeatureFileSchema {
        codec_dim: first.features.codec.len(),
        content_dim: first.features.content.len(),
        anchor_dim: if first.features.anchor.is_some() { 2 } else { 0 },
        label_dim: if first.labels.is_some() { 2 * GRID_COUNT } else { 0 },
    };
    writeln!(
        w,
        "{FEATURE_FILE_MAGIC} {FEATURE_FILE_VERSION} codec={} content={} anchor={} labels={}",
        schema.codec_dim, schema.content_dim, schema.anchor_dim, schema.label_dim
    )?;
    for (i, rec) in records.iter().enumerate() {
        if rec.id.is_empty() || rec.id.contains('|') || rec.id.contains('\n') {
            return Err(Error::Schema(format!("record {i}: invalid id {:?}", rec.id)));
        }
        rec.features.check_dims(schema.codec_dim, schema.content_dim, schema.anchor_dim == 2)?;
        if (rec.labels.is_some()) != (schema.label_dim > 0) {
            return Err(Error::Schema(format!(
                "record {i}: labels presence does not match the file header"
            )));
        }
        let mut line = String::new();
        line.push_str(&rec.id);
        line.push('|');
        write_floats(&mut line, &rec.features.codec);
        line.push('|');
        write_floats(&mut line, &rec.features.content);
        line.push('|');
        if let Some(seg) = rec.features.anchor {
            write_floats(&mut line, &seg);
        }
        line.push('|');
        if let Some(a) = rec.anchor_point {
            write_floats(&mut line, &[a.crf, a.bitrate, a.vmaf]);
        }
        line.push('|');
        if let Some(curve) = &rec.labels {
            let mut flat = Vec::with_capacity(2 * GRID_COUNT);
            flat.extend_from_slice(curve.vmaf());
            flat.extend_from_slice(curve.bitrate());
            write_floats(&mut line, &flat);
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<(FeatureFileSchema, Vec<FeatureRecord>)> {
    let file = std::fs::File::open(path)?;
    read_feature_records(&mut BufReader::new(file))
}

pub fn read_feature_records(
    r: &mut impl BufRead,
) -> Result<(FeatureFileSchema, Vec<FeatureRecord>)> {
    let mut header = String::new();
    if r.read_line(&mut header)? == 0 {
        return Err(Error::parse("line 1", "empty feature file"));
    }
    let mut it = header.split_whitespace();
    if it.next() != Some(FEATURE_FILE_MAGIC) {
        return Err(Error::parse("line 1", "missing rqfeat magic"));
    }
    let version: u32 = it
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse("line 1", "missing version"))?;
    if version != FEATURE_FILE_VERSION {
        return Err(Error::Schema(format!("unsupported feature file version {version}")));
    }
    let mut codec_dim = None;
    let mut content_dim = None;
    let mut anchor_dim = None;
    let mut label_dim = None;
    for tok in it {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse("line 1", format!("malformed header token {tok:?}")))?;
        let v: usize = v
            .parse()
            .map_err(|_| Error::parse("line 1", format!("bad header value in {tok:?}")))?;
        match k {
            "codec" => codec_dim = Some(v),
            "content" => content_dim = Some(v),
            "anchor" => anchor_dim = Some(v),
            "labels" => label_dim = Some(v),
            _ => return Err(Error::parse("line 1", format!("unknown header key {k:?}"))),
        }
    }
    let schema = FeatureFileSchema {
        codec_dim: codec_dim.ok_or_else(|| Error::parse("line 1", "missing codec dim"))?,
        content_dim: content_dim.ok_or_else(|| Error::parse("line 1", "missing content dim"))?,
        anchor_dim: anchor_dim.ok_or_else(|| Error::parse("line 1", "missing anchor dim"))?,
        label_dim: label_dim.ok_or_else(|| Error::parse("line 1", "missing labels dim"))?,
    };
    if schema.anchor_dim != 0 && schema.anchor_dim != 2 {
        return Err(Error::Schema(format!("anchor dim must be 0 or 2, got {}", schema.anchor_dim)));
    }
    if schema.label_dim != 0 && schema.label_dim != 2 * GRID_COUNT {
        return Err(Error::Schema(format!(
            "labels dim must be 0 or {}, got {}",
            2 * GRID_COUNT,
            schema.label_dim
        )));
    }
    if schema.codec_dim == 0 && schema.content_dim == 0 {
        return Err(Error::Schema("feature file declares no feature segments".into()));
    }
    if schema.codec_dim > 1 << 20 || schema.content_dim > 1 << 20 {
        return Err(Error::Schema("implausibly large segment dims".into()));
    }

    let mut records = Vec::new();
    let mut lineno = 1usize;
    let mut line = String::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let trimmed = line.trim_end_matches(['\n', '\r']);
        if trimmed.is_empty() {
            continue;
        }
        let fields: Vec<&str> = trimmed.split('|').collect();
        if fields.len() != 6 {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("expected 6 |-separated fields, got {}", fields.len()),
            ));
        }
        let id = fields[0].to_string();
        if id.is_empty() {
            return Err(Error::parse(format!("line {lineno}"), "empty record id"));
        }
        let codec = parse_floats(fields[1], "codec segment", lineno)?;
        if codec.len() != schema.codec_dim {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!("codec segment has {} entries, header says {}", codec.len(), schema.codec_dim),
            ));
        }
        let content = parse_floats(fields[2], "content segment", lineno)?;
        if content.len() != schema.content_dim {
            return Err(Error::parse(
                format!("line {lineno}"),
                format!(
                    "content segment has {} entries, header says {}",
                    content.len(),
                    schema.content_dim
                ),
            ));
        }
        let anchor_seg = parse_floats(fields[3], "anchor segment", lineno)?;
        let anchor = match (schema.anchor_dim, anchor_seg.len()) {
            (0, 0) => None,
            (2, 2) => Some([anchor_seg[0], anchor_seg[1]]),
            (want, got) => {
                return Err(Error::parse(
                    format!("line {lineno}"),
                    format!("anchor segment has {got} entries, header says {want}"),
                ))
            }
        };
        let ap = parse_floats(fields[4], "anchor point", lineno)?;
        let anchor_point = match ap.len() {
            0 => None,
            3 => Some(AnchorPoint { crf: ap[0], bitrate: ap[1], vmaf: ap[2] }),
            n => {
                return Err(Error::parse(
                    format!("line {lineno}"),
                    format!("anchor point must have 3 entries, got {n}"),
                ))
            }
        };
        let label_vals = parse_floats(fields[5], "labels", lineno)?;
        let labels = match (schema.label_dim, label_vals.len()) {
            (0, 0) => None,
            (d, got) if d == got => {
                let (vmaf, bitrate) = label_vals.split_at(GRID_COUNT);
                Some(RateQualityCurve::new(vmaf.to_vec(), bitrate.to_vec())?)
            }
            (want, got) => {
                return Err(Error::parse(
                    format!("line {lineno}"),
                    format!("labels have {got} entries, header says {want}"),
                ))
            }
        };
        records.push(FeatureRecord {
            id,
            features: FeatureVector { codec, content, anchor },
            anchor_point,
            labels,
        });
    }
    Ok((schema, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simcodec;

    fn sim_records(n: usize) -> Vec<FeatureRecord> {
        let d = simcodec::synth_dataset(n, 1, 42, 0.3).unwrap();
        d.train
            .iter()
            .map(|s| FeatureRecord {
                id: s.id.clone(),
                features: s.features.clone(),
                anchor_point: Some(s.anchor),
                labels: Some(s.truth.clone()),
            })
            .collect()
    }

    #[test]
    fn round_trip_is_exact() {
        let records = sim_records(20);
        let mut buf = Vec::new();
        write_feature_records(&mut buf, &records).unwrap();
        let (schema, back) = read_feature_records(&mut buf.as_slice()).unwrap();
        assert_eq!(schema.codec_dim, 113);
        assert_eq!(schema.content_dim, 65);
        assert_eq!(back, records);
    }

    #[test]
    fn write_read_round_trip_via_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.rqf");
        let records = sim_records(5);
        write_feature_file(&path, &records).unwrap();
        let (_, back) = read_feature_file(&path).unwrap();
        assert_eq!(back, records);
        // byte-identical rewrite
        let first = std::fs::read(&path).unwrap();
        write_feature_file(&path, &back).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }

    #[test]
    fn segment_width_mismatch_names_line() {
        let text = "rqfeat 1 codec=3 content=2 anchor=0 labels=0\nvid|1,2|4,5||\u{7c}\n";
        let err = read_feature_records(&mut text.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "{err}");
    }

    #[test]
    fn missing_labels_loads_inference_only() {
        let mut records = sim_records(3);
        for r in records.iter_mut() {
            r.labels = None;
        }
        let mut buf = Vec::new();
        write_feature_records(&mut buf, &records).unwrap();
        let (schema, back) = read_feature_records(&mut buf.as_slice()).unwrap();
        assert_eq!(schema.label_dim, 0);
        assert!(back.iter().all(|r| r.labels.is_none()));
    }

    #[test]
    fn junk_rejected_not_panicking() {
        for junk in ["", "rqfeat", "rqfeat 9 codec=1 content=1 anchor=0 labels=0\n", "rqfeat 1 codec=x\n"] {
            assert!(read_feature_records(&mut junk.as_bytes()).is_err());
        }
    }
}
