//! Portable Float Map reader and writer.
//!
//! PFM stores linear radiometric data as raw 32-bit floats: a text header
//! of type line ("PF" for 3-channel, "Pf" for 1-channel), dimensions, and
//! a scale whose sign encodes byte order (negative means little-endian),
//! followed by rows bottom-to-top with channels interleaved within a
//! pixel. In memory we keep images channel-major with row 0 at the top,
//! matching the tensor layout used by the networks, so both row order and
//! channel order are converted at the file boundary.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// A decoded float image, channel-major (`data[c * h * w + y * w + x]`),
/// row 0 at the top.
#[derive(Clone, Debug, PartialEq)]
pub struct PfmImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl PfmImage {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            bail!("PFM supports 1 or 3 channels, not {channels}");
        }
        if data.len() != height * width * channels {
            bail!(
                "image data has {} values, expected {} for {}x{}x{}",
                data.len(),
                height * width * channels,
                channels,
                height,
                width
            );
        }
        Ok(PfmImage { height, width, channels, data })
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }
}

/// Pull the next whitespace-delimited token, returning it with the byte
/// offset where it started.
fn next_token(bytes: &[u8], pos: &mut usize) -> Result<(usize, String)> {
    while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        bail!("unexpected end of header at byte {start}");
    }
    let token = core::str::from_utf8(&bytes[start..*pos])
        .with_context(|| format!("non-ASCII header token at byte {start}"))?;
    Ok((start, token.to_owned()))
}

fn parse_pfm(bytes: &[u8]) -> Result<PfmImage> {
    let mut pos = 0usize;
    let (off, magic) = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => bail!("bad magic {other:?} at byte {off}, expected \"PF\" or \"Pf\""),
    };
    let (off, wtok) = next_token(bytes, &mut pos)?;
    let width: usize =
        wtok.parse().with_context(|| format!("bad width {wtok:?} at byte {off}"))?;
    let (off, htok) = next_token(bytes, &mut pos)?;
    let height: usize =
        htok.parse().with_context(|| format!("bad height {htok:?} at byte {off}"))?;
    let (off, stok) = next_token(bytes, &mut pos)?;
    let scale: f32 =
        stok.parse().with_context(|| format!("bad scale {stok:?} at byte {off}"))?;
    if scale == 0.0 || !scale.is_finite() {
        bail!("scale must be finite and nonzero, got {scale} at byte {off}");
    }
    if width == 0 || height == 0 {
        bail!("degenerate dimensions {width}x{height}");
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the scale from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        bail!("missing whitespace after scale at byte {pos}");
    }
    pos += 1;

    let count = width * height * channels;
    let expected = count * 4;
    let available = bytes.len() - pos;
    if available != expected {
        bail!(
            "raster at byte {pos} holds {available} bytes, expected {expected} \
             for {channels}x{height}x{width}"
        );
    }
    let magnitude = scale.abs();
    let hw = height * width;
    let mut data = vec![0.0f32; count];
    for i in 0..count {
        let at = pos + 4 * i;
        let raw: [u8; 4] = bytes[at..at + 4].try_into().unwrap();
        let mut v = if little_endian { f32::from_le_bytes(raw) } else { f32::from_be_bytes(raw) };
        if magnitude != 1.0 {
            v *= magnitude;
        }
        // File order: bottom row first, channels interleaved.
        let pixel = i / channels;
        let c = i % channels;
        let file_row = pixel / width;
        let x = pixel % width;
        let y = height - 1 - file_row;
        data[c * hw + y * width + x] = v;
    }
    PfmImage::new(height, width, channels, data)
}

pub fn read_pfm(path: &Path) -> Result<PfmImage> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    parse_pfm(&bytes).with_context(|| format!("parsing {}", path.display()))
}

/// Write little-endian (scale -1.0), rows bottom-up per the convention.
pub fn write_pfm(path: &Path, image: &PfmImage) -> Result<()> {
    let magic = if image.channels == 3 { "PF" } else { "Pf" };
    let mut bytes =
        format!("{magic}\n{} {}\n-1.0\n", image.width, image.height).into_bytes();
    let hw = image.pixels();
    bytes.reserve(hw * image.channels * 4);
    for file_row in 0..image.height {
        let y = image.height - 1 - file_row;
        for x in 0..image.width {
            for c in 0..image.channels {
                let v = image.data[c * hw + y * image.width + x];
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
