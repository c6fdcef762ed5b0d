//! 8-bit RGB rasters and PNG I/O.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use image::RgbImage;

use crate::error::{Error, Result};

pub const CHANNELS: usize = 3;

/// Interleaved 8-bit RGB image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    samples: Vec<u8>,
}

impl RasterImage {
    pub fn new(width: u32, height: u32, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::invalid(format!("empty image {width}x{height}")));
        }
        let expected = width as usize * height as usize * CHANNELS;
        if samples.len() != expected {
            return Err(Error::invalid(format!(
                "{width}x{height} RGB image needs {expected} samples, got {}",
                samples.len()
            )));
        }
        Ok(RasterImage { width, height, samples })
    }

    /// Build an image from a per-pixel function returning `[r, g, b]`.
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Result<Self> {
        let mut samples = Vec::with_capacity(width as usize * height as usize * CHANNELS);
        for y in 0..height {
            for x in 0..width {
                samples.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Result<Self> {
        Self::from_fn(width, height, |_, _| rgb)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn dimensions(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * CHANNELS;
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    pub fn sample(&self, x: u32, y: u32, c: usize) -> u8 {
        self.samples[(y as usize * self.width as usize + x as usize) * CHANNELS + c]
    }

    /// Copy of the `w`×`h` window whose top-left corner is at (`x0`, `y0`).
    pub fn crop(&self, x0: u32, y0: u32, w: u32, h: u32) -> Result<Self> {
        if x0 + w > self.width || y0 + h > self.height {
            return Err(Error::invalid("crop window exceeds image"));
        }
        Self::from_fn(w, h, |x, y| self.pixel(x0 + x, y0 + y))
    }

    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        let (w, h) = img.dimensions();
        Self::new(w, h, img.into_raw())
    }

    /// Encode as PNG and move into place, so readers never see a partial file.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let img = RgbImage::from_raw(self.width, self.height, self.samples.clone())
            .ok_or_else(|| Error::invalid("sample buffer does not match dimensions"))?;
        let mut buf = std::io::Cursor::new(Vec::new());
        img.write_to(&mut buf, image::ImageFormat::Png)?;
        write_atomic(path, buf.get_ref())
    }
}

static TMP_SEQ: AtomicU64 = AtomicU64::new(0);

/// Write-then-rename within the target directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::invalid(format!("not a file path: {}", path.display())))?;
    let seq = TMP_SEQ.fetch_add(1, Ordering::Relaxed);
    let tmp = dir.join(format!(".{}.{}-{seq}.tmp", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
