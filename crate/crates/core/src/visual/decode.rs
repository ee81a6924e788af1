use std::io::Write;
use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::VisualError;

const PFV_MAGIC: &[u8; 4] = b"PFV1";
const Y4M_MAGIC: &[u8] = b"YUV4MPEG2 ";

/// Which decoder produced a tensor; stored in cache metadata.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderIdentity {
    pub name: String,
    pub version: String,
}

/// Fully decoded RGB frames at a constant frame rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedVideo {
    pub fps: f64,
    pub frames: Vec<RgbImage>,
}

impl DecodedVideo {
    pub fn duration(&self) -> f64 {
        self.frames.len() as f64 / self.fps
    }
}

pub trait VideoDecoder: Send + Sync {
    fn identity(&self) -> DecoderIdentity;

    fn decode(&self, path: &Path) -> Result<DecodedVideo, VisualError>;
}

fn failure(path: &Path, message: impl Into<String>) -> VisualError {
    VisualError::DecodeFailure {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>, VisualError> {
    std::fs::read(path).map_err(|e| failure(path, e.to_string()))
}

/// Uncompressed RGB24 container: `PFV1`, then little-endian u32 width,
/// height, fps numerator, fps denominator and frame count, then the frames
/// row-major.
#[derive(Debug, Clone, Copy, Default)]
pub struct PfvDecoder;

fn le_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

impl PfvDecoder {
    pub fn parse(path: &Path, bytes: &[u8]) -> Result<DecodedVideo, VisualError> {
        if bytes.len() < 24 || &bytes[..4] != PFV_MAGIC {
            return Err(failure(path, "not a PFV1 stream"));
        }
        let (w, h) = (le_u32(bytes, 4), le_u32(bytes, 8));
        let (num, den) = (le_u32(bytes, 12), le_u32(bytes, 16));
        let count = le_u32(bytes, 20) as usize;
        if w == 0 || h == 0 || num == 0 || den == 0 {
            return Err(failure(path, "zero dimension or frame rate"));
        }
        let frame_bytes = w as usize * h as usize * 3;
        let body = &bytes[24..];
        if body.len() != frame_bytes * count {
            return Err(failure(
                path,
                format!("expected {} frame bytes, found {}", frame_bytes * count, body.len()),
            ));
        }
        let frames = body
            .chunks_exact(frame_bytes)
            .map(|c| RgbImage::from_raw(w, h, c.to_vec()).expect("sized buffer"))
            .collect();
        Ok(DecodedVideo {
            fps: num as f64 / den as f64,
            frames,
        })
    }
}

impl VideoDecoder for PfvDecoder {
    fn identity(&self) -> DecoderIdentity {
        DecoderIdentity {
            name: "pfv".into(),
            version: "1".into(),
        }
    }

    fn decode(&self, path: &Path) -> Result<DecodedVideo, VisualError> {
        Self::parse(path, &read_all(path)?)
    }
}

/// Writes frames of equal size as a PFV1 file at `fps` frames per second.
pub fn write_pfv(path: &Path, fps: u32, frames: &[RgbImage]) -> Result<(), VisualError> {
    let (w, h) = frames.first().map_or((1, 1), |f| f.dimensions());
    if frames.iter().any(|f| f.dimensions() != (w, h)) {
        return Err(VisualError::InvalidConfig("frames differ in size".into()));
    }
    let io = |source| VisualError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    out.write_all(PFV_MAGIC).map_err(io)?;
    for v in [w, h, fps, 1, frames.len() as u32] {
        out.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    for f in frames {
        out.write_all(f.as_raw()).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// YUV4MPEG2 reader for 4:2:0, 4:2:2, 4:4:4 and mono streams, converted
/// with studio-range BT.601 coefficients.
#[derive(Debug, Clone, Copy, Default)]
pub struct Y4mDecoder;

#[derive(Debug, Clone, Copy)]
enum Chroma {
    C420,
    C422,
    C444,
    Mono,
}

fn yuv_to_rgb(y: u8, u: u8, v: u8) -> [u8; 3] {
    let c = 1.164 * (y as f64 - 16.0);
    let d = u as f64 - 128.0;
    let e = v as f64 - 128.0;
    let px = |x: f64| x.round().clamp(0.0, 255.0) as u8;
    [px(c + 1.596 * e), px(c - 0.392 * d - 0.813 * e), px(c + 2.017 * d)]
}

impl Y4mDecoder {
    pub fn parse(path: &Path, bytes: &[u8]) -> Result<DecodedVideo, VisualError> {
        if !bytes.starts_with(Y4M_MAGIC) {
            return Err(failure(path, "not a YUV4MPEG2 stream"));
        }
        let nl = bytes
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| failure(path, "unterminated header"))?;
        let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| failure(path, "header is not ASCII"))?;
        let (mut w, mut h, mut fps, mut chroma) = (0usize, 0usize, 25.0, Chroma::C420);
        for tok in header.split(' ').skip(1) {
            let (tag, val) = tok.split_at(1);
            match tag {
                "W" => w = val.parse().map_err(|_| failure(path, "bad width"))?,
                "H" => h = val.parse().map_err(|_| failure(path, "bad height"))?,
                "F" => {
                    let (n, d) = val.split_once(':').ok_or_else(|| failure(path, "bad frame rate"))?;
                    let n: f64 = n.parse().map_err(|_| failure(path, "bad frame rate"))?;
                    let d: f64 = d.parse().map_err(|_| failure(path, "bad frame rate"))?;
                    fps = n / d;
                }
                "C" => {
                    chroma = match val {
                        v if v.starts_with("420") => Chroma::C420,
                        "422" => Chroma::C422,
                        "444" => Chroma::C444,
                        "mono" => Chroma::Mono,
                        other => return Err(failure(path, format!("unsupported colourspace {other}"))),
                    }
                }
                _ => {}
            }
        }
        if w == 0 || h == 0 || !(fps.is_finite() && fps > 0.0) {
            return Err(failure(path, "missing width, height or frame rate"));
        }
        let (cw, ch) = match chroma {
            Chroma::C420 => (w.div_ceil(2), h.div_ceil(2)),
            Chroma::C422 => (w.div_ceil(2), h),
            Chroma::C444 => (w, h),
            Chroma::Mono => (0, 0),
        };
        let frame_len = w * h + 2 * cw * ch;
        let mut frames = Vec::new();
        let mut pos = nl + 1;
        while pos < bytes.len() {
            let line_end = bytes[pos..]
                .iter()
                .position(|&b| b == b'\n')
                .map(|i| pos + i)
                .ok_or_else(|| failure(path, "truncated frame header"))?;
            if !bytes[pos..line_end].starts_with(b"FRAME") {
                return Err(failure(path, "expected FRAME marker"));
            }
            let data = bytes
                .get(line_end + 1..line_end + 1 + frame_len)
                .ok_or_else(|| failure(path, "truncated frame"))?;
            let (yp, rest) = data.split_at(w * h);
            let (up, vp) = rest.split_at(cw * ch);
            let mut img = RgbImage::new(w as u32, h as u32);
            for row in 0..h {
                for col in 0..w {
                    let y = yp[row * w + col];
                    let (u, v) = match chroma {
                        Chroma::Mono => (128, 128),
                        Chroma::C420 => (up[(row / 2) * cw + col / 2], vp[(row / 2) * cw + col / 2]),
                        Chroma::C422 => (up[row * cw + col / 2], vp[row * cw + col / 2]),
                        Chroma::C444 => (up[row * cw + col], vp[row * cw + col]),
                    };
                    img.put_pixel(col as u32, row as u32, image::Rgb(yuv_to_rgb(y, u, v)));
                }
            }
            frames.push(img);
            pos = line_end + 1 + frame_len;
        }
        Ok(DecodedVideo { fps, frames })
    }
}

impl VideoDecoder for Y4mDecoder {
    fn identity(&self) -> DecoderIdentity {
        DecoderIdentity {
            name: "y4m".into(),
            version: "1".into(),
        }
    }

    fn decode(&self, path: &Path) -> Result<DecodedVideo, VisualError> {
        Self::parse(path, &read_all(path)?)
    }
}

/// Picks PFV or Y4M by the stream's magic bytes.
#[derive(Debug, Clone, Copy, Default)]
pub struct AutoDecoder;

impl VideoDecoder for AutoDecoder {
    fn identity(&self) -> DecoderIdentity {
        DecoderIdentity {
            name: "auto(pfv,y4m)".into(),
            version: "1".into(),
        }
    }

    fn decode(&self, path: &Path) -> Result<DecodedVideo, VisualError> {
        let bytes = read_all(path)?;
        if bytes.starts_with(PFV_MAGIC) {
            PfvDecoder::parse(path, &bytes)
        } else if bytes.starts_with(Y4M_MAGIC) {
            Y4mDecoder::parse(path, &bytes)
        } else {
            Err(failure(path, "unrecognized container"))
        }
    }
}
