//! Subprocess adapter around a real encoder and quality-metric tool.
//!
//! Command lines are configuration templates, not hardcoded: the encode
//! command sees `{input}`, `{output}` and `{crf}` placeholders, the metric
//! command sees `{reference}` and `{distorted}`. Any CRF-capable encoder and
//! any metric tool that prints a `VMAF score: <value>` line can be plugged
//! in.

use super::{
    check_measure_crf, check_pre_encode_crf, parse_stats_log, ClipMeta, CodecBackend,
    EncodeInput, EncodeResult,
};
use crate::core::CrfGrid;
use crate::error::{Error, Result};
use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

/// Key-value backend configuration.
///
/// ```text
/// # comment
/// encode_cmd = x265 --crf {crf} --input {input} -o {output}
/// pre_encode_cmd = x264 --preset fast --crf {crf} -o {output} {input}
/// metric_cmd = vmaf -r {reference} -d {distorted}
/// workdir = /tmp/rq-encodes
/// timeout_secs = 600
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct BackendConfig {
    pub encode_cmd: String,
    pub pre_encode_cmd: String,
    pub metric_cmd: String,
    pub workdir: PathBuf,
    pub timeout_secs: u64,
}

impl BackendConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut encode_cmd = None;
        let mut pre_encode_cmd = None;
        let mut metric_cmd = None;
        let mut workdir = None;
        let mut timeout_secs = 600u64;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::parse(format!("config line {}", lineno + 1), "expected key = value")
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "encode_cmd" => encode_cmd = Some(value.to_string()),
                "pre_encode_cmd" => pre_encode_cmd = Some(value.to_string()),
                "metric_cmd" => metric_cmd = Some(value.to_string()),
                "workdir" => workdir = Some(PathBuf::from(value)),
                "timeout_secs" => {
                    timeout_secs = value.parse().map_err(|_| {
                        Error::Config(format!("timeout_secs must be an integer, got {value:?}"))
                    })?;
                }
                other => {
                    return Err(Error::Config(format!("unknown config key {other:?}")));
                }
            }
        }
        let encode_cmd =
            encode_cmd.ok_or_else(|| Error::Config("encode_cmd is required".into()))?;
        let metric_cmd =
            metric_cmd.ok_or_else(|| Error::Config("metric_cmd is required".into()))?;
        Ok(BackendConfig {
            pre_encode_cmd: pre_encode_cmd.unwrap_or_else(|| encode_cmd.clone()),
            encode_cmd,
            metric_cmd,
            workdir: workdir.unwrap_or_else(std::env::temp_dir),
            timeout_secs,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }
}

pub struct ExternalBackend {
    config: BackendConfig,
    grid: CrfGrid,
    counter: AtomicU64,
}

impl ExternalBackend {
    pub fn new(config: BackendConfig) -> Self {
        ExternalBackend { config, grid: CrfGrid::standard(), counter: AtomicU64::new(0) }
    }

    fn fresh_output(&self, tag: &str) -> PathBuf {
        let n = self.counter.fetch_add(1, Ordering::Relaxed);
        self.config
            .workdir
            .join(format!("rq-{}-{}-{}.bin", std::process::id(), tag, n))
    }

    fn substitute(template: &str, pairs: &[(&str, &str)]) -> Vec<String> {
        template
            .split_whitespace()
            .map(|tok| {
                let mut t = tok.to_string();
                for (k, v) in pairs {
                    t = t.replace(k, v);
                }
                t
            })
            .collect()
    }

    /// Runs a command with a wall-clock timeout, capturing stdout/stderr.
    fn run(&self, argv: &[String]) -> Result<(String, String)> {
        if argv.is_empty() {
            return Err(Error::Config("empty command template".into()));
        }
        let mut child = Command::new(&argv[0])
            .args(&argv[1..])
            .stdin(Stdio::null())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .map_err(|e| Error::Backend(format!("failed to start {:?}: {e}", argv[0])))?;
        let deadline = Instant::now() + Duration::from_secs(self.config.timeout_secs);
        let status = loop {
            match child.try_wait() {
                Ok(Some(status)) => break status,
                Ok(None) => {
                    if Instant::now() >= deadline {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(Error::Backend(format!(
                            "{:?} timed out after {}s",
                            argv[0], self.config.timeout_secs
                        )));
                    }
                    std::thread::sleep(Duration::from_millis(20));
                }
                Err(e) => return Err(Error::Backend(format!("wait failed: {e}"))),
            }
        };
        let mut stdout = String::new();
        let mut stderr = String::new();
        if let Some(mut s) = child.stdout.take() {
            let _ = s.read_to_string(&mut stdout);
        }
        if let Some(mut s) = child.stderr.take() {
            let _ = s.read_to_string(&mut stderr);
        }
        if !status.success() {
            let tail: String = stderr.lines().rev().take(8).collect::<Vec<_>>().join(" | ");
            return Err(Error::Backend(format!(
                "{:?} exited with {status}: {tail}",
                argv[0]
            )));
        }
        Ok((stdout, stderr))
    }

    fn encode_at(&self, path: &Path, meta: &ClipMeta, crf: f64, template: &str) -> Result<(PathBuf, String)> {
        std::fs::create_dir_all(&self.config.workdir)?;
        let output = self.fresh_output("enc");
        let crf_s = format!("{crf}");
        let argv = Self::substitute(
            template,
            &[
                ("{input}", &path.display().to_string()),
                ("{output}", &output.display().to_string()),
                ("{crf}", &crf_s),
            ],
        );
        let (stdout, stderr) = self.run(&argv)?;
        if !output.exists() {
            return Err(Error::Backend(format!(
                "encoder produced no output file at {}",
                output.display()
            )));
        }
        let _ = meta;
        Ok((output, format!("{stdout}\n{stderr}")))
    }

    fn measure_vmaf(&self, reference: &Path, distorted: &Path) -> Result<f64> {
        let argv = Self::substitute(
            &self.config.metric_cmd,
            &[
                ("{reference}", &reference.display().to_string()),
                ("{distorted}", &distorted.display().to_string()),
            ],
        );
        let (stdout, stderr) = self.run(&argv)?;
        let combined = format!("{stdout}\n{stderr}");
        let mut score = None;
        for line in combined.lines() {
            if let Some(pos) = line.find("VMAF score:") {
                if let Ok(v) = line[pos + "VMAF score:".len()..].trim().parse::<f64>() {
                    score = Some(v);
                }
            }
        }
        score.ok_or_else(|| {
            Error::Backend("metric tool printed no `VMAF score:` line".into())
        })
    }

    fn bitrate_of(&self, output: &Path, meta: &ClipMeta) -> Result<f64> {
        let bytes = std::fs::metadata(output)?.len() as f64;
        let duration = meta.duration_seconds();
        if duration <= 0.0 {
            return Err(Error::Config("clip metadata has zero duration".into()));
        }
        Ok(bytes * 8.0 / 1000.0 / duration)
    }

    fn file_input<'a>(input: &'a EncodeInput) -> Result<(&'a Path, &'a ClipMeta)> {
        match input {
            EncodeInput::File { path, meta } => Ok((path, meta)),
            EncodeInput::Latent(_) => Err(Error::Backend(
                "external backend cannot encode a simulated latent video".into(),
            )),
        }
    }
}

impl CodecBackend for ExternalBackend {
    fn encode_measure(&self, input: &EncodeInput, crf: f64) -> Result<EncodeResult> {
        check_measure_crf(&self.grid, crf)?;
        let (path, meta) = Self::file_input(input)?;
        let (output, log) = self.encode_at(path, meta, crf, &self.config.encode_cmd)?;
        let bitrate = self.bitrate_of(&output, meta)?;
        let vmaf = self.measure_vmaf(path, &output)?;
        let stats = parse_stats_log(&log).ok();
        let _ = std::fs::remove_file(&output);
        let result = EncodeResult { crf, bitrate, vmaf, stats };
        result.validate()?;
        Ok(result)
    }

    fn pre_encode(&self, input: &EncodeInput, crf: f64) -> Result<EncodeResult> {
        check_pre_encode_crf(crf)?;
        let (path, meta) = Self::file_input(input)?;
        let (output, log) = self.encode_at(path, meta, crf, &self.config.pre_encode_cmd)?;
        let bitrate = self.bitrate_of(&output, meta)?;
        let _ = std::fs::remove_file(&output);
        let stats = parse_stats_log(&log).map_err(|e| {
            Error::Backend(format!("pre-encode log not parsable as summary stats: {e}"))
        })?;
        // Pre-encodes skip the metric tool; the quality figure comes from the
        // stats block (SSIM-style score when the encoder reports one).
        let vmaf = (stats.quality_score * 100.0).clamp(0.0, 100.0);
        Ok(EncodeResult { crf, bitrate: bitrate.max(stats.bitrate_kbps), vmaf, stats: Some(stats) })
    }
}
