//! Boosted stimulus preparation: centered 2x zoom with Lanczos resampling
//! and per-channel artifact amplification against the source.
//!
//! Flicker is a presentation effect and lives in the client, not here.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{RasterImage, CHANNELS};
use crate::stimulus::{Stimulus, StimulusKey, StimulusStore, Variant, SOURCE_CODEC};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoostConfig {
    pub amplification_factor: f64,
    pub zoom_enabled: bool,
    pub lanczos_taps: u32,
}

impl Default for BoostConfig {
    fn default() -> Self {
        BoostConfig {
            amplification_factor: 2.0,
            zoom_enabled: true,
            lanczos_taps: 3,
        }
    }
}

impl BoostConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.amplification_factor.is_finite() && self.amplification_factor >= 1.0) {
            return Err(Error::invalid(format!(
                "amplification factor must be >= 1, got {}",
                self.amplification_factor
            )));
        }
        if self.lanczos_taps == 0 {
            return Err(Error::invalid("lanczos_taps must be positive"));
        }
        Ok(())
    }
}

/// Quantize to 8 bits: round half away from zero, then clamp.
#[inline]
pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// `clamp(source + factor * (distorted - source))` on every sample.
pub fn amplify_artifacts(source: &RasterImage, distorted: &RasterImage, factor: f64) -> Result<RasterImage> {
    if source.dimensions() != distorted.dimensions() {
        return Err(Error::invalid(format!(
            "dimension mismatch: source {:?} vs distorted {:?}",
            source.dimensions(),
            distorted.dimensions()
        )));
    }
    if !factor.is_finite() {
        return Err(Error::invalid("amplification factor must be finite"));
    }
    let samples = source
        .samples()
        .iter()
        .zip(distorted.samples())
        .map(|(&s, &d)| {
            let s = f64::from(s);
            quantize(s + factor * (f64::from(d) - s))
        })
        .collect();
    RasterImage::new(source.width(), source.height(), samples)
}

/// Lanczos window of half-width `a`.
pub fn lanczos_kernel(x: f64, a: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else if x.abs() >= a {
        0.0
    } else {
        let px = PI * x;
        a * px.sin() * (px / a).sin() / (px * px)
    }
}

/// Normalized taps for one output coordinate: (source index, weight).
fn taps_for(out: u32, scale: f64, len: u32, a: u32) -> Vec<(u32, f64)> {
    // pixel centers: output (o + 0.5) maps to input (o + 0.5) / scale
    let center = (f64::from(out) + 0.5) / scale - 0.5;
    let base = center.floor() as i64;
    let a = i64::from(a);
    let mut taps: Vec<(u32, f64)> = (base - a + 1..=base + a)
        .filter_map(|j| {
            let w = lanczos_kernel(center - j as f64, a as f64);
            (w != 0.0).then(|| (j.clamp(0, i64::from(len) - 1) as u32, w))
        })
        .collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    for t in &mut taps {
        t.1 /= total;
    }
    taps
}

/// Separable Lanczos resize with edge replication.
pub fn lanczos_resize(img: &RasterImage, width: u32, height: u32, taps: u32) -> Result<RasterImage> {
    if width == 0 || height == 0 {
        return Err(Error::invalid("target size must be positive"));
    }
    let sx = f64::from(width) / f64::from(img.width());
    let sy = f64::from(height) / f64::from(img.height());
    // downscaling would need a stretched kernel; only upscaling is used here
    if sx < 1.0 || sy < 1.0 {
        return Err(Error::invalid("lanczos_resize only supports upscaling"));
    }
    let xt: Vec<_> = (0..width).map(|x| taps_for(x, sx, img.width(), taps)).collect();
    let yt: Vec<_> = (0..height).map(|y| taps_for(y, sy, img.height(), taps)).collect();

    // horizontal pass, kept in f64
    let iw = img.width() as usize;
    let mut tmp = vec![0.0f64; width as usize * img.height() as usize * CHANNELS];
    for y in 0..img.height() as usize {
        let row = &img.samples()[y * iw * CHANNELS..(y + 1) * iw * CHANNELS];
        for (x, taps) in xt.iter().enumerate() {
            let out = &mut tmp[(y * width as usize + x) * CHANNELS..][..CHANNELS];
            for &(j, w) in taps {
                for c in 0..CHANNELS {
                    out[c] += w * f64::from(row[j as usize * CHANNELS + c]);
                }
            }
        }
    }

    let mut samples = vec![0u8; width as usize * height as usize * CHANNELS];
    samples
        .par_chunks_mut(width as usize * CHANNELS)
        .zip(yt.par_iter())
        .for_each(|(row, taps)| {
            for x in 0..width as usize {
                for c in 0..CHANNELS {
                    let v: f64 = taps
                        .iter()
                        .map(|&(j, w)| w * tmp[(j as usize * width as usize + x) * CHANNELS + c])
                        .sum();
                    row[x * CHANNELS + c] = quantize(v);
                }
            }
        });
    RasterImage::new(width, height, samples)
}

/// Centered half-size crop upscaled back to the input size.
pub fn zoom_boost(image: &RasterImage, taps: u32) -> Result<RasterImage> {
    let (w, h) = image.dimensions();
    if w % 2 != 0 || h % 2 != 0 {
        return Err(Error::invalid(format!("zoom needs even dimensions, got {w}x{h}")));
    }
    let (cw, ch) = (w / 2, h / 2);
    let crop = image.crop((w - cw) / 2, (h - ch) / 2, cw, ch)?;
    lanczos_resize(&crop, w, h, taps)
}

/// Pure pixel path of boosting: returns (boosted distorted, zoomed source).
pub fn boost_pair(
    source: &RasterImage,
    distorted: &RasterImage,
    config: &BoostConfig,
) -> Result<(RasterImage, RasterImage)> {
    config.validate()?;
    if source.dimensions() != distorted.dimensions() {
        return Err(Error::invalid("source and distorted sizes differ"));
    }
    let (src, dist) = if config.zoom_enabled {
        (
            zoom_boost(source, config.lanczos_taps)?,
            zoom_boost(distorted, config.lanczos_taps)?,
        )
    } else {
        (source.clone(), distorted.clone())
    };
    let boosted = amplify_artifacts(&src, &dist, config.amplification_factor)?;
    Ok((boosted, src))
}

/// Boost `distorted` against `source` and write the results into `store`.
///
/// Image paths of the inputs are resolved against `store`'s root when relative.
pub fn prepare_boosted_stimulus(
    source: &Stimulus,
    distorted: &Stimulus,
    config: &BoostConfig,
    store: &StimulusStore,
) -> Result<Stimulus> {
    if source.source_id != distorted.source_id {
        return Err(Error::invalid(format!(
            "source ids differ: {} vs {}",
            source.source_id, distorted.source_id
        )));
    }
    if source.level != 0 || source.codec_id != SOURCE_CODEC {
        return Err(Error::invalid("first stimulus must be the level-0 source"));
    }
    distorted.validate()?;
    let src_img = RasterImage::load_png(&store.resolve(source))?;
    let dist_img = RasterImage::load_png(&store.resolve(distorted))?;
    let (boosted, zoomed_src) = boost_pair(&src_img, &dist_img, config)?;

    let key = distorted.key();
    zoomed_src.save_png(&store.zoomed_source_path(&key.source_id))?;
    let rel = StimulusStore::relative_path(&key, Variant::Boosted);
    boosted.save_png(&store.root().join(&rel))?;
    Ok(Stimulus::from_key(&key, rel, true))
}

/// Prepare a whole stimulus store from a directory of decoded images laid out
/// as `<src_dir>/<source_id>/<codec_id>/<level>.png`, with the reference at
/// `<src_dir>/<source_id>/source/0.png`.
///
/// Writes plain copies, boosted versions and the zoomed reference for every
/// stimulus and returns the boosted stimuli, sorted by key.
pub fn prepare_store(src_dir: &Path, out_dir: &Path, config: &BoostConfig) -> Result<Vec<Stimulus>> {
    config.validate()?;
    let store = StimulusStore::new(out_dir);
    let inputs = scan_decoded(src_dir)?;
    if inputs.is_empty() {
        return Err(Error::invalid(format!("no decoded images under {}", src_dir.display())));
    }
    // plain copies first so the boosting step can read everything from the store
    inputs.par_iter().try_for_each(|(key, path)| -> Result<()> {
        let img = RasterImage::load_png(path)?;
        img.save_png(&store.path(key, Variant::Plain))
    })?;
    let mut out: Vec<Stimulus> = inputs
        .par_iter()
        .map(|(key, _)| {
            let src_key = StimulusKey::source(&key.source_id);
            let source = Stimulus::from_key(&src_key, StimulusStore::relative_path(&src_key, Variant::Plain), false);
            let distorted = Stimulus::from_key(key, StimulusStore::relative_path(key, Variant::Plain), false);
            prepare_boosted_stimulus(&source, &distorted, config, &store)
        })
        .collect::<Result<_>>()?;
    out.sort_by_key(Stimulus::key);
    Ok(out)
}

fn scan_decoded(src_dir: &Path) -> Result<Vec<(StimulusKey, PathBuf)>> {
    let mut found = Vec::new();
    for source in sorted_dirs(src_dir)? {
        let source_id = dir_name(&source)?;
        if !source.join(SOURCE_CODEC).join("0.png").is_file() {
            return Err(Error::invalid(format!("missing reference {}/source/0.png", source.display())));
        }
        for codec in sorted_dirs(&source)? {
            let codec_id = dir_name(&codec)?;
            for entry in fs::read_dir(&codec)? {
                let path = entry?.path();
                if path.extension().and_then(|e| e.to_str()) != Some("png") {
                    continue;
                }
                let level: u8 = path
                    .file_stem()
                    .and_then(|s| s.to_str())
                    .and_then(|s| s.parse().ok())
                    .ok_or_else(|| Error::invalid(format!("unexpected file name {}", path.display())))?;
                found.push((StimulusKey::new(&source_id, &codec_id, level)?, path));
            }
        }
    }
    found.sort();
    Ok(found)
}

fn sorted_dirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    for entry in fs::read_dir(dir)? {
        let path = entry?.path();
        if path.is_dir() {
            dirs.push(path);
        }
    }
    dirs.sort();
    Ok(dirs)
}

fn dir_name(path: &Path) -> Result<String> {
    path.file_name()
        .and_then(|n| n.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::invalid(format!("bad directory name {}", path.display())))
}
