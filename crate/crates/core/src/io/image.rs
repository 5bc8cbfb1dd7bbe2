//! Binary PGM/PPM (P5/P6) and PFM (Pf/PF) images as `C x H x W` `f32` tensors.
//!
//! Netpbm samples are scaled to `[0, 1]` by the header maxval; PFM values are raw.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ImageFormat {
    Pgm,
    Ppm,
    Pfm,
}

impl ImageFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        ext.parse()
            .map_err(|_| Error::Invalid(format!("{}: unknown image extension", path.display())))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ImageFormat::Pgm => "pgm",
            ImageFormat::Ppm => "ppm",
            ImageFormat::Pfm => "pfm",
        }
    }
}

impl FromStr for ImageFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pgm" => Ok(ImageFormat::Pgm),
            "ppm" => Ok(ImageFormat::Ppm),
            "pfm" => Ok(ImageFormat::Pfm),
            _ => Err(Error::Invalid(format!("unknown image format {s:?}"))),
        }
    }
}

struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    format: &'static str,
}

impl<'a> Header<'a> {
    fn err(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            format: self.format,
            offset: self.pos,
            reason: reason.into(),
        }
    }

    fn skip_space(&mut self) {
        while let Some(&b) = self.bytes.get(self.pos) {
            if b == b'#' {
                while self.bytes.get(self.pos).is_some_and(|&b| b != b'\n') {
                    self.pos += 1;
                }
            } else if b.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn token(&mut self) -> Result<&'a str> {
        self.skip_space();
        let start = self.pos;
        while self.bytes.get(self.pos).is_some_and(|b| !b.is_ascii_whitespace()) {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("unexpected end of header"));
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Error::Format {
            format: self.format,
            offset: start,
            reason: "non-ASCII header token".into(),
        })
    }

    fn number<N: FromStr>(&mut self, what: &str) -> Result<N> {
        let start = self.pos;
        let tok = self.token()?;
        tok.parse().map_err(|_| Error::Format {
            format: self.format,
            offset: start,
            reason: format!("invalid {what} {tok:?}"),
        })
    }

    /// Exactly one whitespace byte separates the header from the payload.
    fn end(&mut self) -> Result<usize> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => Ok(self.pos + 1),
            _ => Err(self.err("missing whitespace before raster")),
        }
    }
}

fn positive(h: &Header<'_>, v: usize, what: &str) -> Result<usize> {
    if v == 0 {
        Err(h.err(format!("{what} must be positive")))
    } else {
        Ok(v)
    }
}

fn decode_netpbm(bytes: &[u8], channels: usize, format: &'static str) -> Result<Tensor<f32>> {
    let mut h = Header { bytes, pos: 2, format };
    let width: usize = h.number("width")?;
    let width = positive(&h, width, "width")?;
    let height: usize = h.number("height")?;
    let height = positive(&h, height, "height")?;
    let maxval: u32 = h.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return Err(h.err(format!("maxval {maxval} outside 1..=65535")));
    }
    let start = h.end()?;
    let bps = if maxval < 256 { 1 } else { 2 };
    let count = width * height * channels;
    let need = count * bps;
    if bytes.len() < start + need {
        return Err(Error::Format {
            format,
            offset: bytes.len(),
            reason: format!("raster truncated: need {need} bytes after offset {start}"),
        });
    }
    let raster = &bytes[start..start + need];
    let m = maxval as f32;
    let mut data = vec![0.0f32; count];
    let plane = width * height;
    for i in 0..count {
        let v = if bps == 1 {
            raster[i] as u32
        } else {
            u16::from_be_bytes([raster[2 * i], raster[2 * i + 1]]) as u32
        };
        if v > maxval {
            return Err(Error::Format {
                format,
                offset: start + i * bps,
                reason: format!("sample {v} exceeds maxval {maxval}"),
            });
        }
        let (pixel, c) = (i / channels, i % channels);
        data[c * plane + pixel] = v as f32 / m;
    }
    Tensor::from_vec(&[channels, height, width], data)
}

fn decode_pfm(bytes: &[u8], channels: usize) -> Result<Tensor<f32>> {
    let mut h = Header {
        bytes,
        pos: 2,
        format: "pfm",
    };
    let width: usize = h.number("width")?;
    let width = positive(&h, width, "width")?;
    let height: usize = h.number("height")?;
    let height = positive(&h, height, "height")?;
    let scale: f32 = h.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(h.err("scale must be finite and nonzero"));
    }
    let little = scale < 0.0;
    let start = h.end()?;
    let count = width * height * channels;
    if bytes.len() < start + 4 * count {
        return Err(Error::Format {
            format: "pfm",
            offset: bytes.len(),
            reason: format!("raster truncated: need {} bytes after offset {start}", 4 * count),
        });
    }
    let plane = width * height;
    let mut data = vec![0.0f32; count];
    for (i, chunk) in bytes[start..start + 4 * count].chunks_exact(4).enumerate() {
        let raw = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little {
            f32::from_le_bytes(raw)
        } else {
            f32::from_be_bytes(raw)
        };
        let (pixel, c) = (i / channels, i % channels);
        // rows are stored bottom to top
        let (row, col) = (height - 1 - pixel / width, pixel % width);
        data[c * plane + row * width + col] = v;
    }
    Tensor::from_vec(&[channels, height, width], data)
}

/// Decode any supported format, detected from the magic number.
pub fn decode_image(bytes: &[u8]) -> Result<Tensor<f32>> {
    let magic = bytes.get(..2).ok_or(Error::Format {
        format: "image",
        offset: bytes.len(),
        reason: "file shorter than the magic number".into(),
    })?;
    match magic {
        b"P5" => decode_netpbm(bytes, 1, "pgm"),
        b"P6" => decode_netpbm(bytes, 3, "ppm"),
        b"Pf" => decode_pfm(bytes, 1),
        b"PF" => decode_pfm(bytes, 3),
        _ => Err(Error::Format {
            format: "image",
            offset: 0,
            reason: format!("unsupported magic {:?}", String::from_utf8_lossy(magic)),
        }),
    }
}

fn dims(image: &Tensor<f32>, channels: usize, format: &'static str) -> Result<(usize, usize)> {
    let (n, c, h, w) = image.chw()?;
    if n != 1 || c != channels {
        return Err(Error::shape(
            "encode_image",
            "channels",
            format!("{format} needs {channels} channel(s), got {:?}", image.shape()),
        ));
    }
    Ok((h, w))
}

fn interleaved(image: &Tensor<f32>, channels: usize, h: usize, w: usize) -> impl Iterator<Item = f32> + '_ {
    let plane = h * w;
    (0..plane * channels).map(move |i| image.data()[(i % channels) * plane + i / channels])
}

/// Netpbm encoding at the given maxval (16-bit big-endian samples above 255). Values are
/// clamped to `[0, 1]` and rounded to the nearest level.
pub fn encode_netpbm(image: &Tensor<f32>, maxval: u16) -> Result<Vec<u8>> {
    let (_, c, h, w) = image.chw()?;
    let (magic, format) = match c {
        1 => ("P5", "pgm"),
        3 => ("P6", "ppm"),
        _ => return Err(Error::shape("encode_netpbm", "channels", format!("expected 1 or 3, got {c}"))),
    };
    dims(image, c, format)?;
    if maxval == 0 {
        return Err(Error::Invalid("maxval must be positive".into()));
    }
    let mut out = format!("{magic}\n{w} {h}\n{maxval}\n").into_bytes();
    let m = maxval as f32;
    for v in interleaved(image, c, h, w) {
        let q = (v.clamp(0.0, 1.0) * m).round() as u16;
        if maxval < 256 {
            out.push(q as u8);
        } else {
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    Ok(out)
}

/// Little-endian PFM.
pub fn encode_pfm(image: &Tensor<f32>) -> Result<Vec<u8>> {
    let (_, c, h, w) = image.chw()?;
    let magic = match c {
        1 => "Pf",
        3 => "PF",
        _ => return Err(Error::shape("encode_pfm", "channels", format!("expected 1 or 3, got {c}"))),
    };
    let mut out = format!("{magic}\n{w} {h}\n-1.0\n").into_bytes();
    let plane = h * w;
    for row in (0..h).rev() {
        for col in 0..w {
            for ch in 0..c {
                out.extend_from_slice(&image.data()[ch * plane + row * w + col].to_le_bytes());
            }
        }
    }
    Ok(out)
}

pub fn read_image(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Format { format, offset, reason } => Error::Format {
            format,
            offset,
            reason: format!("{reason} (in {})", path.display()),
        },
        other => other,
    })
}

/// Write by format; Netpbm output uses 16-bit samples.
pub fn write_image(path: impl AsRef<Path>, image: &Tensor<f32>, format: ImageFormat) -> Result<()> {
    let path = path.as_ref();
    let bytes = match format {
        ImageFormat::Pfm => encode_pfm(image)?,
        ImageFormat::Pgm => {
            dims(image, 1, "pgm")?;
            encode_netpbm(image, u16::MAX)?
        }
        ImageFormat::Ppm => {
            dims(image, 3, "ppm")?;
            encode_netpbm(image, u16::MAX)?
        }
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_zeros() {
        let mut b = b"P5\n2 2\n255\n".to_vec();
        b.extend([0u8; 4]);
        let t = decode_image(&b).unwrap();
        assert_eq!(t.shape(), &[1, 2, 2]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ppm_channels_are_planar() {
        let mut b = b"P6 2 1 255\n".to_vec();
        b.extend([255, 0, 0, 0, 0, 255]);
        let t = decode_image(&b).unwrap();
        assert_eq!(t.shape(), &[3, 1, 2]);
        assert_eq!(t.data(), &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn pgm_16_bit_is_big_endian() {
        let mut b = b"P5\n1 1\n65535\n".to_vec();
        b.extend([0x80, 0x00]);
        let t = decode_image(&b).unwrap();
        assert_eq!(t.data()[0], 32768.0 / 65535.0);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut b = b"P5\n# made by hand\n1 1 # trailing\n255\n".to_vec();
        b.push(51);
        assert_eq!(decode_image(&b).unwrap().data()[0], 0.2);
    }

    #[test]
    fn truncated_raster_reports_offset() {
        let mut b = b"P5\n2 2\n255\n".to_vec();
        b.extend([1, 2, 3]);
        match decode_image(&b).unwrap_err() {
            Error::Format { offset, .. } => assert_eq!(offset, b.len()),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn bad_width_reports_token_offset() {
        match decode_image(b"P5\nxx 2\n255\n").unwrap_err() {
            Error::Format { offset, reason, .. } => {
                assert_eq!(offset, 2);
                assert!(reason.contains("width"));
            }
            e => panic!("{e}"),
        }
    }

    #[test]
    fn pfm_big_endian_and_bottom_up() {
        let mut b = b"Pf\n1 2\n1.0\n".to_vec();
        b.extend(2.5f32.to_be_bytes());
        b.extend((-1.0f32).to_be_bytes());
        let t = decode_image(&b).unwrap();
        assert_eq!(t.data(), &[-1.0, 2.5]);
    }

    #[test]
    fn pfm_round_trip_is_bit_exact() {
        let t = Tensor::<f32>::from_fn(&[3, 4, 5], |i| (i as f32 * 0.731).sin() * 1e3);
        let back = decode_image(&encode_pfm(&t).unwrap()).unwrap();
        assert_eq!(
            back.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn netpbm_round_trip_at_declared_depth() {
        for maxval in [255u16, 65535] {
            let t = Tensor::<f32>::from_fn(&[1, 3, 7], |i| ((i * 13) % maxval as usize) as f32 / maxval as f32);
            let back = decode_image(&encode_netpbm(&t, maxval).unwrap()).unwrap();
            assert_eq!(back, t);
        }
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(ImageFormat::from_path(Path::new("a/b.PFM")).unwrap(), ImageFormat::Pfm);
        assert!(ImageFormat::from_path(Path::new("a.png")).is_err());
    }
}
