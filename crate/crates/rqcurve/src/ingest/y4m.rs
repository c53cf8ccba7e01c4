//! Y4M (YUV4MPEG2) reader and writer.
//!
//! The reader follows the public convention: a `YUV4MPEG2` signature line
//! with space-separated parameter tags (`W`, `H`, `F`, `C`, ...), then one
//! `FRAME` line plus planar payload per frame. Only the luma plane is
//! retained; chroma is skipped according to the parsed `C` tag. Parse errors
//! carry the byte offset where the problem was found.

use super::VideoClip;
use crate::error::{Error, Result};
use std::io::{BufRead, Write};

/// Chroma subsampling of the payload; determines how many bytes to skip per
/// frame after the luma plane.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

impl Chroma {
    /// Chroma payload size per frame.
    pub fn chroma_bytes(&self, width: usize, height: usize) -> Result<usize> {
        match self {
            Chroma::C420 => {
                if width % 2 != 0 || height % 2 != 0 {
                    return Err(Error::Schema(format!(
                        "4:2:0 requires even dimensions, got {width}x{height}"
                    )));
                }
                Ok(width / 2 * (height / 2) * 2)
            }
            Chroma::C422 => {
                if width % 2 != 0 {
                    return Err(Error::Schema(format!(
                        "4:2:2 requires even width, got {width}"
                    )));
                }
                Ok(width / 2 * height * 2)
            }
            Chroma::C444 => Ok(width * height * 2),
            Chroma::Mono => Ok(0),
        }
    }

    fn from_tag(tag: &str) -> Result<Chroma> {
        // tags like 420, 420jpeg, 420mpeg2, 420paldv, 422, 444, mono
        let t = tag.to_ascii_lowercase();
        if t.contains("p10") || t.contains("p12") || t.contains("p14") || t.contains("p16") {
            return Err(Error::Schema(format!("unsupported bit depth in colorspace {tag:?}")));
        }
        if t.starts_with("420") {
            Ok(Chroma::C420)
        } else if t.starts_with("422") {
            Ok(Chroma::C422)
        } else if t.starts_with("444") {
            Ok(Chroma::C444)
        } else if t.starts_with("mono") {
            Ok(Chroma::Mono)
        } else {
            Err(Error::Schema(format!("unknown colorspace {tag:?}")))
        }
    }
}

const MAX_HEADER_LEN: usize = 4096;
const MAX_DIM: usize = 1 << 16;

/// Parses a Y4M stream into a clip. The reader is consumed to the end of the
/// last complete frame declared by the stream.
pub fn parse_y4m(reader: &mut impl BufRead) -> Result<VideoClip> {
    let mut offset: usize = 0;
    let mut line = Vec::with_capacity(128);

    read_line_capped(reader, &mut line, &mut offset, "stream header")?;
    let header = std::str::from_utf8(&line)
        .map_err(|_| Error::parse("byte 0", "header is not valid ASCII"))?;
    let mut tags = header.split(' ');
    if tags.next() != Some("YUV4MPEG2") {
        return Err(Error::parse("byte 0", "missing YUV4MPEG2 signature"));
    }
    let mut width = None;
    let mut height = None;
    let mut fps = (30u32, 1u32);
    let mut chroma = Chroma::C420;
    for tag in tags {
        if tag.is_empty() {
            continue;
        }
        let (kind, value) = tag.split_at(1);
        match kind {
            "W" => width = Some(parse_dim(value, "W")?),
            "H" => height = Some(parse_dim(value, "H")?),
            "F" => {
                let (n, d) = value
                    .split_once(':')
                    .ok_or_else(|| Error::parse("header", "F tag must be num:den"))?;
                let n: u32 = n.parse().map_err(|_| Error::parse("header", "bad F numerator"))?;
                let d: u32 = d.parse().map_err(|_| Error::parse("header", "bad F denominator"))?;
                if n == 0 || d == 0 {
                    return Err(Error::parse("header", "frame rate must be positive"));
                }
                fps = (n, d);
            }
            "C" => chroma = Chroma::from_tag(value)?,
            // Interlace, aspect and extension tags do not affect the luma
            // payload; accepted and ignored.
            "I" | "A" | "X" => {}
            _ => {}
        }
    }
    let width = width.ok_or_else(|| Error::parse("header", "missing W tag"))?;
    let height = height.ok_or_else(|| Error::parse("header", "missing H tag"))?;

    let luma_len = width * height;
    let chroma_len = chroma.chroma_bytes(width, height)?;

    let mut frames: Vec<Vec<u8>> = Vec::new();
    loop {
        line.clear();
        let frame_start = offset;
        let n = read_line_opt(reader, &mut line, &mut offset)?;
        if n == 0 {
            break; // clean end of stream
        }
        if !line.starts_with(b"FRAME") {
            return Err(Error::parse(
                format!("byte {frame_start}"),
                format!("expected FRAME marker before frame {}", frames.len()),
            ));
        }
        let mut luma = vec![0u8; luma_len];
        read_exact_at(reader, &mut luma, &mut offset, frames.len())?;
        skip_exact(reader, chroma_len, &mut offset, frames.len())?;
        frames.push(luma);
    }
    if frames.is_empty() {
        return Err(Error::parse(format!("byte {offset}"), "stream contains no frames"));
    }
    VideoClip::new(width, height, fps, frames)
}

fn parse_dim(value: &str, tag: &str) -> Result<usize> {
    let v: usize = value
        .parse()
        .map_err(|_| Error::parse("header", format!("bad {tag} tag {value:?}")))?;
    if v == 0 || v > MAX_DIM {
        return Err(Error::parse("header", format!("{tag} dimension {v} out of range")));
    }
    Ok(v)
}

fn read_line_capped(
    reader: &mut impl BufRead,
    line: &mut Vec<u8>,
    offset: &mut usize,
    what: &str,
) -> Result<()> {
    let n = read_line_opt(reader, line, offset)?;
    if n == 0 {
        return Err(Error::parse(format!("byte {offset}"), format!("truncated {what}")));
    }
    Ok(())
}

/// Reads up to and including `\n`, stripping it; returns bytes consumed.
fn read_line_opt(
    reader: &mut impl BufRead,
    line: &mut Vec<u8>,
    offset: &mut usize,
) -> Result<usize> {
    line.clear();
    let mut consumed = 0;
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            if consumed == 0 {
                return Ok(0);
            }
            return Err(Error::parse(
                format!("byte {}", *offset + consumed),
                "stream ended inside a header line",
            ));
        }
        match buf.iter().position(|&b| b == b'\n') {
            Some(pos) => {
                line.extend_from_slice(&buf[..pos]);
                reader.consume(pos + 1);
                consumed += pos + 1;
                *offset += consumed;
                if line.len() > MAX_HEADER_LEN {
                    return Err(Error::parse(format!("byte {offset}"), "header line too long"));
                }
                return Ok(consumed);
            }
            None => {
                let len = buf.len();
                line.extend_from_slice(buf);
                reader.consume(len);
                consumed += len;
                if line.len() > MAX_HEADER_LEN {
                    return Err(Error::parse(
                        format!("byte {}", *offset + consumed),
                        "header line too long",
                    ));
                }
            }
        }
    }
}

fn read_exact_at(
    reader: &mut impl BufRead,
    buf: &mut [u8],
    offset: &mut usize,
    frame_index: usize,
) -> Result<()> {
    let mut filled = 0;
    while filled < buf.len() {
        let chunk = reader.fill_buf()?;
        if chunk.is_empty() {
            return Err(Error::parse(
                format!("byte {}", *offset + filled),
                format!("truncated payload in frame {frame_index}"),
            ));
        }
        let take = chunk.len().min(buf.len() - filled);
        buf[filled..filled + take].copy_from_slice(&chunk[..take]);
        reader.consume(take);
        filled += take;
    }
    *offset += buf.len();
    Ok(())
}

fn skip_exact(
    reader: &mut impl BufRead,
    mut remaining: usize,
    offset: &mut usize,
    frame_index: usize,
) -> Result<()> {
    let total = remaining;
    while remaining > 0 {
        let chunk = reader.fill_buf()?;
        if chunk.is_empty() {
            return Err(Error::parse(
                format!("byte {}", *offset + (total - remaining)),
                format!("truncated chroma in frame {frame_index}"),
            ));
        }
        let take = chunk.len().min(remaining);
        reader.consume(take);
        remaining -= take;
    }
    *offset += total;
    Ok(())
}

/// Writes a clip as Y4M with 4:2:0 chroma planes filled with the neutral
/// value 128. Luma round-trips bit-exactly through [`parse_y4m`].
pub fn write_y4m(writer: &mut impl Write, clip: &VideoClip) -> Result<()> {
    let (n, d) = clip.fps();
    if clip.width() % 2 != 0 || clip.height() % 2 != 0 {
        return Err(Error::Schema(format!(
            "4:2:0 output requires even dimensions, got {}x{}",
            clip.width(),
            clip.height()
        )));
    }
    write!(writer, "YUV4MPEG2 W{} H{} F{}:{} Ip A1:1 C420jpeg\n", clip.width(), clip.height(), n, d)?;
    let chroma = vec![128u8; clip.width() / 2 * (clip.height() / 2) * 2];
    for i in 0..clip.frame_count() {
        writer.write_all(b"FRAME\n")?;
        writer.write_all(clip.plane(i).data)?;
        writer.write_all(&chroma)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_clip() -> VideoClip {
        let frames: Vec<Vec<u8>> = (0..3)
            .map(|f| (0..32 * 32).map(|i| ((i * 7 + f * 31) % 256) as u8).collect())
            .collect();
        VideoClip::new(32, 32, (25, 1), frames).unwrap()
    }

    #[test]
    fn header_fields_copied() {
        let w = 64;
        let h = 48;
        let mut buf = Vec::new();
        buf.extend_from_slice(b"YUV4MPEG2 W64 H48 F30:1 C420\n");
        for _ in 0..2 {
            buf.extend_from_slice(b"FRAME\n");
            buf.extend(std::iter::repeat(9u8).take(w * h + w * h / 2));
        }
        let clip = parse_y4m(&mut buf.as_slice()).unwrap();
        assert_eq!(clip.width(), 64);
        assert_eq!(clip.height(), 48);
        assert_eq!(clip.frame_count(), 2);
        assert_eq!(clip.fps(), (30, 1));
    }

    #[test]
    fn truncated_second_frame_names_frame_index() {
        let w = 64;
        let h = 48;
        let mut buf = Vec::new();
        buf.extend_from_slice(b"YUV4MPEG2 W64 H48 F30:1 C420\n");
        buf.extend_from_slice(b"FRAME\n");
        buf.extend(std::iter::repeat(9u8).take(w * h + w * h / 2));
        buf.extend_from_slice(b"FRAME\n");
        buf.extend(std::iter::repeat(9u8).take(100));
        let err = parse_y4m(&mut buf.as_slice()).unwrap_err();
        assert!(err.to_string().contains("frame 1"), "{err}");
        assert!(err.to_string().contains("byte"), "{err}");
    }

    #[test]
    fn writer_parser_round_trip_is_bit_exact() {
        let clip = tiny_clip();
        let mut buf = Vec::new();
        write_y4m(&mut buf, &clip).unwrap();
        let parsed = parse_y4m(&mut buf.as_slice()).unwrap();
        assert_eq!(parsed, clip);
    }

    #[test]
    fn high_bit_depth_rejected() {
        let buf = b"YUV4MPEG2 W64 H48 F30:1 C420p10\nFRAME\n".to_vec();
        assert!(parse_y4m(&mut buf.as_slice()).is_err());
    }

    #[test]
    fn missing_signature_rejected() {
        assert!(parse_y4m(&mut b"JUNK W64 H48\n".as_slice()).is_err());
        assert!(parse_y4m(&mut b"".as_slice()).is_err());
    }

    #[test]
    fn chroma_422_and_444_skipped() {
        for (tag, extra) in [("C422", 64 * 48), ("C444", 64 * 48 * 2), ("Cmono", 0usize)] {
            let w = 64;
            let h = 48;
            let mut buf = Vec::new();
            buf.extend_from_slice(format!("YUV4MPEG2 W{w} H{h} F30:1 {tag}\n").as_bytes());
            buf.extend_from_slice(b"FRAME\n");
            buf.extend(std::iter::repeat(1u8).take(w * h));
            buf.extend(std::iter::repeat(2u8).take(extra));
            let clip = parse_y4m(&mut buf.as_slice()).unwrap();
            assert_eq!(clip.frame_count(), 1, "{tag}");
            assert!(clip.frames()[0].iter().all(|&v| v == 1));
        }
    }

    #[test]
    fn frame_params_tolerated() {
        let w = 32;
        let h = 32;
        let mut buf = Vec::new();
        buf.extend_from_slice(b"YUV4MPEG2 W32 H32 F25:1 C420jpeg\n");
        buf.extend_from_slice(b"FRAME Xsomething\n");
        buf.extend(std::iter::repeat(0u8).take(w * h + w * h / 2));
        let clip = parse_y4m(&mut buf.as_slice()).unwrap();
        assert_eq!(clip.frame_count(), 1);
    }
}
