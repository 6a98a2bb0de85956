//! Binary PGM (P5) channel montages.

use std::fs;
use std::path::Path;

use lgrad_core::{ChannelMatrix, ObserverError};
use ndarray::ArrayView1;

/// Gap between tiles, in pixels.
pub const SEPARATOR: usize = 2;
pub const SEPARATOR_VALUE: u8 = 255;
/// Gray level of a channel with zero range (normalized value 0.5).
pub const FLAT_VALUE: u8 = 128;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Graymap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl Graymap {
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        fs::write(path, self.to_pgm())
    }

    /// Parses a binary PGM with maxval 255.
    pub fn parse(bytes: &[u8]) -> Option<Graymap> {
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            fields.push(std::str::from_utf8(&bytes[start..pos]).ok()?);
        }
        if fields[0] != "P5" || fields[3] != "255" {
            return None;
        }
        let width = fields[1].parse().ok()?;
        let height = fields[2].parse().ok()?;
        let pixels = bytes.get(pos + 1..)?.to_vec();
        (pixels.len() == width * height).then_some(Graymap { width, height, pixels })
    }
}

/// Min-max normalizes one channel to 0..=255.
pub fn tile_pixels(channel: ArrayView1<'_, f64>) -> Vec<u8> {
    let lo = channel.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = channel.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    channel
        .iter()
        .map(|&v| {
            if range > 0.0 {
                (255.0 * (v - lo) / range).round() as u8
            } else {
                FLAT_VALUE
            }
        })
        .collect()
}

/// (rows, columns) of the tile grid: ⌈√n⌉ columns.
pub fn grid_shape(count: usize) -> (usize, usize) {
    let cols = (count as f64).sqrt().ceil().max(1.0) as usize;
    (count.div_ceil(cols), cols)
}

fn check_shape(channels: &ChannelMatrix, height: usize, width: usize) -> Result<(), ObserverError> {
    if height * width != channels.dim() || height == 0 {
        return Err(ObserverError::Validation(format!(
            "channels of {} pixels do not reshape to {height}×{width}",
            channels.dim()
        )));
    }
    Ok(())
}

/// Tiles in row-major channel order; cells past the last channel stay black.
pub fn render_montage(channels: &ChannelMatrix, height: usize, width: usize) -> Result<Graymap, ObserverError> {
    check_shape(channels, height, width)?;
    let count = channels.num_channels();
    let (rows, cols) = grid_shape(count);
    let total_w = cols * width + (cols - 1) * SEPARATOR;
    let total_h = rows * height + (rows.max(1) - 1) * SEPARATOR;
    let mut pixels = vec![SEPARATOR_VALUE; total_w * total_h];
    for cell in 0..rows * cols {
        let (r0, c0) = ((cell / cols) * (height + SEPARATOR), (cell % cols) * (width + SEPARATOR));
        let tile = if cell < count {
            tile_pixels(channels.channel(cell))
        } else {
            vec![0; height * width]
        };
        for y in 0..height {
            let dst = (r0 + y) * total_w + c0;
            pixels[dst..dst + width].copy_from_slice(&tile[y * width..(y + 1) * width]);
        }
    }
    Ok(Graymap {
        width: total_w,
        height: total_h,
        pixels,
    })
}

pub fn emit_channel_montage(channels: &ChannelMatrix, height: usize, width: usize, path: &Path) -> Result<(), ObserverError> {
    render_montage(channels, height, width)?.write(path)?;
    Ok(())
}

/// Single-channel export with the same normalization as the montage tiles.
pub fn emit_channel_image(channels: &ChannelMatrix, index: usize, height: usize, width: usize, path: &Path) -> Result<(), ObserverError> {
    check_shape(channels, height, width)?;
    if index >= channels.num_channels() {
        return Err(ObserverError::Validation(format!("no channel {index}")));
    }
    let map = Graymap {
        width,
        height,
        pixels: tile_pixels(channels.channel(index)),
    };
    map.write(path)?;
    Ok(())
}
