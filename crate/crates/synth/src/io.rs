//! Image file formats: 8-bit PNG for RGB and masks, PFM (portable float
//! map, little-endian, scale -1.0) for depth/alpha/canonical maps.
//! PFM rows are stored bottom-to-top per the format convention.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SynthError};

pub fn write_rgb_png(path: &Path, rgb: &[[f64; 3]], height: usize, width: usize) -> Result<()> {
    let mut buf = Vec::with_capacity(height * width * 3);
    for px in rgb {
        for c in px {
            buf.push((c.clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    image::save_buffer(path, &buf, width as u32, height as u32, image::ColorType::Rgb8)
        .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))
}

pub fn read_rgb_png(path: &Path) -> Result<(Vec<[f64; 3]>, usize, usize)> {
    let img = image::open(path)
        .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?
        .to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let rgb = img
        .pixels()
        .map(|p| [p.0[0] as f64 / 255.0, p.0[1] as f64 / 255.0, p.0[2] as f64 / 255.0])
        .collect();
    Ok((rgb, h, w))
}

pub fn write_mask_png(path: &Path, mask: &[bool], height: usize, width: usize) -> Result<()> {
    let buf: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
    image::save_buffer(path, &buf, width as u32, height as u32, image::ColorType::L8)
        .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))
}

pub fn read_mask_png(path: &Path) -> Result<(Vec<bool>, usize, usize)> {
    let img = image::open(path)
        .map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?
        .to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mask = img.pixels().map(|p| p.0[0] >= 128).collect();
    Ok((mask, h, w))
}

/// Writes a 1- or 3-channel float map. `channels` must divide data layout
/// `[h*w*channels]` laid out row-major top-to-bottom (converted on disk).
pub fn write_pfm(path: &Path, data: &[f64], height: usize, width: usize, channels: usize) -> Result<()> {
    if channels != 1 && channels != 3 {
        return Err(SynthError::Io("pfm supports 1 or 3 channels".into()));
    }
    debug_assert_eq!(data.len(), height * width * channels);
    let mut w = BufWriter::new(
        File::create(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?,
    );
    let header = format!("{}\n{} {}\n-1.0\n", if channels == 3 { "PF" } else { "Pf" }, width, height);
    w.write_all(header.as_bytes()).map_err(|e| SynthError::Io(e.to_string()))?;
    for row in (0..height).rev() {
        for col in 0..width {
            for ch in 0..channels {
                let v = data[(row * width + col) * channels + ch] as f32;
                w.write_all(&v.to_le_bytes()).map_err(|e| SynthError::Io(e.to_string()))?;
            }
        }
    }
    w.flush().map_err(|e| SynthError::Io(e.to_string()))
}

pub fn read_pfm(path: &Path) -> Result<(Vec<f64>, usize, usize, usize)> {
    let mut r = BufReader::new(
        File::open(path).map_err(|e| SynthError::Io(format!("{}: {e}", path.display())))?,
    );
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| SynthError::Io(e.to_string()))?;
    let mut pos = 0usize;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(SynthError::Io("truncated pfm header".into()));
        }
        let s = String::from_utf8_lossy(&bytes[start..pos]).to_string();
        pos += 1; // single whitespace after token
        Ok(s)
    };
    let magic = token()?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(SynthError::Io(format!("bad pfm magic '{other}'"))),
    };
    let width: usize = token()?.parse().map_err(|_| SynthError::Io("bad pfm width".into()))?;
    let height: usize = token()?.parse().map_err(|_| SynthError::Io("bad pfm height".into()))?;
    let scale: f64 = token()?.parse().map_err(|_| SynthError::Io("bad pfm scale".into()))?;
    if scale >= 0.0 {
        return Err(SynthError::Io("big-endian pfm not supported".into()));
    }
    let need = height * width * channels * 4;
    if bytes.len() - pos < need {
        return Err(SynthError::Io("truncated pfm payload".into()));
    }
    let mut data = vec![0.0f64; height * width * channels];
    let mut off = pos;
    for row in (0..height).rev() {
        for col in 0..width {
            for ch in 0..channels {
                let v = f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]);
                data[(row * width + col) * channels + ch] = v as f64;
                off += 4;
            }
        }
    }
    Ok((data, height, width, channels))
}
