use std::io::Write;
use std::path::Path;

use super::Map2d;
use crate::error::{Error, Result};

/// 8-bit pixels, top image row first, with map row 0 on the bottom.
///
/// Values are mapped linearly from `[min, max]` to `[0, 255]` and rounded; a
/// constant map becomes uniform 128.
pub fn quantize(map: &Map2d) -> Result<Vec<u8>> {
    if let Some(i) = map.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidParam(format!("non-finite map value at {i}")));
    }
    let (lo, hi) = map
        .data
        .iter()
        .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let (lo, range) = (f64::from(lo), f64::from(hi) - f64::from(lo));
    let mut pixels = Vec::with_capacity(map.data.len());
    for r in (0..map.rows).rev() {
        pixels.extend(map.row(r).iter().map(|&v| {
            if range > 0.0 {
                ((f64::from(v) - lo) / range * 255.0).round() as u8
            } else {
                128
            }
        }));
    }
    Ok(pixels)
}

fn write_png<W: Write>(out: W, map: &Map2d) -> Result<()> {
    let pixels = quantize(map)?;
    let mut encoder = png::Encoder::new(out, map.cols as u32, map.rows as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&pixels)?;
    writer.finish()?;
    Ok(())
}

pub fn encode_png(map: &Map2d) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    write_png(&mut bytes, map)?;
    Ok(bytes)
}

/// Writes `map` as an 8-bit grayscale PNG.
pub fn render_png(map: &Map2d, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_png(map)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_quantization() {
        let map = Map2d::new(2, 2, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        // Row 1 of the map is the top row of the image.
        assert_eq!(quantize(&map).unwrap(), vec![170, 255, 0, 85]);
    }

    #[test]
    fn constant_is_mid_gray() {
        let map = Map2d::new(3, 4, vec![-2.5; 12]).unwrap();
        assert!(quantize(&map).unwrap().iter().all(|&p| p == 128));
    }

    #[test]
    fn non_finite_rejected() {
        let map = Map2d::new(1, 2, vec![0.0, f32::NAN]).unwrap();
        assert!(quantize(&map).is_err());
    }
}
