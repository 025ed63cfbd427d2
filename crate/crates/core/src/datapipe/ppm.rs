//! Binary PPM (`P6`, maxval 255) codec.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fsutil;
use crate::tensor::Tensor;

use super::ImageRecord;

struct Header {
    width: usize,
    height: usize,
    data_start: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |msg: &str| Error::Image {
        path: path.to_path_buf(),
        msg: msg.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(err("not a binary PPM (missing P6 magic)"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comments
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(err("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(err("malformed header"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| err("header number out of range"))?;
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(err("missing whitespace after maxval"));
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(err(&format!("unsupported maxval {maxval}, expected 255")));
    }
    if width == 0 || height == 0 {
        return Err(err("zero image dimension"));
    }
    Ok(Header {
        width,
        height,
        data_start: pos + 1,
    })
}

pub fn decode_ppm(bytes: &[u8], id: &str, path: &Path) -> Result<ImageRecord> {
    let h = parse_header(bytes, path)?;
    let n = h.width * h.height;
    let payload = &bytes[h.data_start..];
    if payload.len() < 3 * n {
        return Err(Error::Image {
            path: path.to_path_buf(),
            msg: format!("truncated payload: {} of {} bytes", payload.len(), 3 * n),
        });
    }
    // interleaved RGB -> planar CHW
    let pixels = Tensor::from_fn(&[3, h.height, h.width], |i| {
        let (c, p) = (i / n, i % n);
        f32::from(payload[3 * p + c]) / 255.0
    })?;
    ImageRecord::new(id, pixels)
}

pub fn encode_ppm(record: &ImageRecord) -> Vec<u8> {
    let (w, h) = (record.width, record.height);
    let n = w * h;
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(3 * n);
    let px = record.pixels.data();
    for p in 0..n {
        for c in 0..3 {
            out.push((px[c * n + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    out
}

pub fn read_ppm(path: &Path) -> Result<ImageRecord> {
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_ppm(&fsutil::read(path)?, &id, path)
}

/// Image size from the header alone.
pub fn read_ppm_size(path: &Path) -> Result<(usize, usize)> {
    let bytes = fsutil::read(path)?;
    let h = parse_header(&bytes, path)?;
    Ok((h.width, h.height))
}

pub fn write_ppm(record: &ImageRecord, path: &Path) -> Result<()> {
    fsutil::write_atomic(path, &encode_ppm(record))
}
