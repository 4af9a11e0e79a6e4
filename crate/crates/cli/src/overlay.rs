//! Heatmap overlays: a fixed color ramp blended over the RGB frame.

use msafnet_core::data::{Image, PixelFormat};

/// Weight of the heatmap in the blend.
pub const OVERLAY_ALPHA: f64 = 0.5;

/// Ramp stops from cold to hot: blue, cyan, green, yellow, red.
const RAMP: [[f64; 3]; 5] = [[0.0, 0.0, 255.0], [0.0, 255.0, 255.0], [0.0, 255.0, 0.0], [255.0, 255.0, 0.0], [255.0, 0.0, 0.0]];

/// Piecewise-linear color for a value in [0, 1]; values outside are clamped.
pub fn ramp_color(value: f64) -> [f64; 3] {
    let v = value.clamp(0.0, 1.0) * (RAMP.len() - 1) as f64;
    let lo = (v.floor() as usize).min(RAMP.len() - 2);
    let t = v - lo as f64;
    std::array::from_fn(|c| RAMP[lo][c] * (1.0 - t) + RAMP[lo + 1][c] * t)
}

/// Blends the ramp color of each heat value over `frame`.
pub fn overlay(frame: &Image, heat: &[f64]) -> msafnet_core::Result<Image> {
    assert_eq!(frame.format, PixelFormat::Rgb, "overlay needs an RGB frame");
    assert_eq!(heat.len(), frame.width * frame.height, "heatmap size differs from frame");
    let mut data = Vec::with_capacity(frame.data.len());
    for (px, &h) in frame.data.chunks_exact(3).zip(heat) {
        let color = ramp_color(h);
        for c in 0..3 {
            let v = (1.0 - OVERLAY_ALPHA) * px[c] as f64 + OVERLAY_ALPHA * color[c];
            data.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Image::rgb(frame.width, frame.height, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ramp_endpoints_and_midpoint() {
        assert_eq!(ramp_color(0.0), [0.0, 0.0, 255.0]);
        assert_eq!(ramp_color(0.5), [0.0, 255.0, 0.0]);
        assert_eq!(ramp_color(1.0), [255.0, 0.0, 0.0]);
        assert_eq!(ramp_color(2.0), ramp_color(1.0));
        assert_eq!(ramp_color(0.125), [0.0, 127.5, 255.0]);
    }

    #[test]
    fn blend_is_half_and_half() {
        let frame = Image::rgb(2, 1, vec![100, 100, 100, 0, 0, 0]).unwrap();
        let out = overlay(&frame, &[1.0, 0.0]).unwrap();
        assert_eq!(out.format, PixelFormat::Rgb);
        assert_eq!(out.data, vec![178, 50, 50, 0, 0, 128]);
    }
}
