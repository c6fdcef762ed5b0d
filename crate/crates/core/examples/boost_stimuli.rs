//! Boost a synthetic distorted image: zoom both images, then amplify the
//! difference. Writes PNGs to the directory given as the first argument.
//!
//!     cargo run --example boost_stimuli -- /tmp/boosted

use std::path::PathBuf;

use aic3::boost::{amplify_artifacts, boost_pair, BoostConfig};
use aic3::raster::RasterImage;

fn main() -> aic3::Result<()> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("aic3-boost"));

    let source = RasterImage::from_fn(64, 48, |x, y| [(x * 4) as u8, (y * 5) as u8, 128])?;
    // blocky compression-like error on the distorted copy
    let distorted = RasterImage::from_fn(64, 48, |x, y| {
        let p = source.pixel(x, y);
        let e = if (x / 8 + y / 8) % 2 == 0 { 6 } else { -6i16 };
        p.map(|v| (i16::from(v) + e).clamp(0, 255) as u8)
    })?;

    let plain = amplify_artifacts(&source, &distorted, 2.0)?;
    println!("amplified pixel (10, 10): {:?} -> {:?}", distorted.pixel(10, 10), plain.pixel(10, 10));

    let (boosted, zoomed_source) = boost_pair(&source, &distorted, &BoostConfig::default())?;
    let max_diff = boosted
        .samples()
        .iter()
        .zip(zoomed_source.samples())
        .map(|(a, b)| a.abs_diff(*b))
        .max()
        .unwrap_or(0);
    println!("boosted {:?}, largest difference to zoomed source: {max_diff}", boosted.dimensions());

    source.save_png(&out.join("source.png"))?;
    distorted.save_png(&out.join("distorted.png"))?;
    zoomed_source.save_png(&out.join("zoomed_source.png"))?;
    boosted.save_png(&out.join("boosted.png"))?;
    println!("wrote {}", out.display());
    Ok(())
}
