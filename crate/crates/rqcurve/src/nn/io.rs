//! Model file format: a small text header (schema version, architecture
//! descriptor, caller metadata, tensor directory) followed by the tensors as
//! raw little-endian f64 in directory order. Any mismatch on load is refused.

use crate::error::{Error, Result};
use crate::nn::layers::{Mlp, MlpSpec};
use crate::nn::linalg::Mat;
use std::io::{BufRead, Read, Write};

pub const MODEL_MAGIC: &str = "rqmodel";
pub const MODEL_VERSION: u32 = 1;

impl Mlp {
    /// A network of the given shape with all tensors zeroed (running variance
    /// set to 1). Used as the load target.
    pub fn zeroed(spec: MlpSpec) -> Self {
        use crate::nn::layers::{Attention, BatchNorm, Linear, ResBlock};
        let lin = |fan_in: usize, fan_out: usize| Linear {
            w: Mat::zeros(fan_in, fan_out),
            b: vec![0.0; fan_out],
        };
        Mlp {
            bn: BatchNorm {
                gamma: vec![0.0; spec.input_dim],
                beta: vec![0.0; spec.input_dim],
                running_mean: vec![0.0; spec.input_dim],
                running_var: vec![1.0; spec.input_dim],
                eps: spec.bn_eps,
                momentum: spec.bn_momentum,
            },
            input_fc: lin(spec.input_dim, spec.hidden),
            attn: Attention {
                fc1: lin(spec.hidden, spec.attn_bottleneck),
                fc2: lin(spec.attn_bottleneck, spec.hidden),
            },
            blocks: (0..spec.res_blocks).map(|_| ResBlock { fc1: lin(spec.hidden, spec.hidden), fc2: lin(spec.hidden, spec.hidden) }).collect(),
            head: lin(spec.hidden, spec.output_dim),
            spec,
        }
    }
}

pub fn save_model(w: &mut impl Write, net: &mut Mlp, meta: &[(String, String)]) -> Result<()> {
    let s = &net.spec;
    writeln!(w, "{MODEL_MAGIC} {MODEL_VERSION}")?;
    for (k, v) in meta {
        if k.contains(['=', '\n', ' ']) || v.contains('\n') {
            return Err(Error::Schema(format!("invalid meta key/value: {k:?}")));
        }
        writeln!(w, "meta {k}={v}")?;
    }
    writeln!(
        w,
        "arch input_dim={} hidden={} attn_bottleneck={} res_blocks={} output_dim={} bn_eps={} bn_momentum={}",
        s.input_dim, s.hidden, s.attn_bottleneck, s.res_blocks, s.output_dim, s.bn_eps, s.bn_momentum
    )?;
    let layout = net.tensor_layout();
    for (name, len) in &layout {
        writeln!(w, "tensor {name} {len}")?;
    }
    writeln!(w, "end")?;
    for slice in net.tensor_slices_mut() {
        for v in slice.iter() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Loads a model written by [`save_model`], returning the network and the
/// caller metadata. Refuses anything that does not match: magic, version,
/// architecture shapes, tensor directory, payload length, non-finite values.
pub fn load_model(r: &mut impl BufRead) -> Result<(Mlp, Vec<(String, String)>)> {
    let mut line = String::new();
    let mut read_line = |r: &mut dyn BufRead, line: &mut String| -> Result<()> {
        line.clear();
        let n = r.read_line(line)?;
        if n == 0 {
            return Err(Error::parse("model header", "unexpected end of file"));
        }
        while line.ends_with('\n') || line.ends_with('\r') {
            line.pop();
        }
        Ok(())
    };

    read_line(r, &mut line)?;
    let mut it = line.split_whitespace();
    if it.next() != Some(MODEL_MAGIC) {
        return Err(Error::parse("model header", "bad magic"));
    }
    let version: u32 = it
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::parse("model header", "missing version"))?;
    if version != MODEL_VERSION {
        return Err(Error::Schema(format!("unsupported model version {version}")));
    }

    let mut meta = Vec::new();
    let mut arch_line = None;
    loop {
        read_line(r, &mut line)?;
        if let Some(rest) = line.strip_prefix("meta ") {
            let (k, v) = rest
                .split_once('=')
                .ok_or_else(|| Error::parse("model header", "malformed meta line"))?;
            meta.push((k.to_string(), v.to_string()));
        } else if line.starts_with("arch ") {
            arch_line = Some(line.clone());
            break;
        } else {
            return Err(Error::parse("model header", format!("unexpected line {line:?}")));
        }
    }

    let arch_line = arch_line.unwrap();
    let mut kv = std::collections::BTreeMap::new();
    for tok in arch_line.trim_start_matches("arch ").split_whitespace() {
        let (k, v) = tok
            .split_once('=')
            .ok_or_else(|| Error::parse("model header", "malformed arch token"))?;
        kv.insert(k.to_string(), v.to_string());
    }
    let get_usize = |k: &str| -> Result<usize> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Schema(format!("arch descriptor missing {k}")))
    };
    let get_f64 = |k: &str| -> Result<f64> {
        kv.get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Schema(format!("arch descriptor missing {k}")))
    };
    let spec = MlpSpec {
        input_dim: get_usize("input_dim")?,
        hidden: get_usize("hidden")?,
        attn_bottleneck: get_usize("attn_bottleneck")?,
        res_blocks: get_usize("res_blocks")?,
        output_dim: get_usize("output_dim")?,
        bn_eps: get_f64("bn_eps")?,
        bn_momentum: get_f64("bn_momentum")?,
    };
    if spec.input_dim == 0 || spec.hidden == 0 || spec.output_dim == 0 || spec.attn_bottleneck == 0
    {
        return Err(Error::Schema("arch descriptor has zero-sized dimension".into()));
    }
    // Refuse absurd shapes before allocating.
    let declared: u64 = [spec.input_dim, spec.hidden, spec.output_dim, spec.res_blocks + 1]
        .iter()
        .map(|&v| v as u64)
        .product();
    if declared > 1 << 34 {
        return Err(Error::Schema("arch descriptor implausibly large".into()));
    }

    let mut net = Mlp::zeroed(spec);
    let expected_layout = net.tensor_layout();
    let mut declared_tensors = Vec::with_capacity(expected_layout.len());
    loop {
        read_line(r, &mut line)?;
        if line == "end" {
            break;
        }
        let rest = line
            .strip_prefix("tensor ")
            .ok_or_else(|| Error::parse("model header", format!("unexpected line {line:?}")))?;
        let mut it = rest.split_whitespace();
        let name = it.next().unwrap_or("").to_string();
        let len: usize = it
            .next()
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::parse("model header", "malformed tensor line"))?;
        declared_tensors.push((name, len));
        if declared_tensors.len() > expected_layout.len() {
            return Err(Error::Schema("tensor directory longer than architecture".into()));
        }
    }
    if declared_tensors != expected_layout {
        return Err(Error::Schema(
            "tensor directory does not match architecture descriptor".into(),
        ));
    }

    for slice in net.tensor_slices_mut() {
        let mut buf = vec![0u8; slice.len() * 8];
        r.read_exact(&mut buf).map_err(|e| {
            Error::parse("model payload", format!("short tensor payload: {e}"))
        })?;
        for (v, chunk) in slice.iter_mut().zip(buf.chunks_exact(8)) {
            *v = f64::from_le_bytes(chunk.try_into().unwrap());
        }
        if slice.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("model tensor contains non-finite values".into()));
        }
    }
    if net.bn.running_var.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::Numeric("running variance must be positive".into()));
    }
    Ok((net, meta))
}
