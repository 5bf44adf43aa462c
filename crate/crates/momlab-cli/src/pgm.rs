//! Binary PGM (P5) heatmap writer: zero-dependency grayscale images with
//! one pixel per sweep cell.

use std::io::Write;

/// Write a P5 image. `pixels` is row-major, `width * height` bytes.
pub fn write_pgm(
    out: &mut dyn Write,
    width: usize,
    height: usize,
    pixels: &[u8],
) -> std::io::Result<()> {
    assert_eq!(pixels.len(), width * height, "pixel buffer shape mismatch");
    write!(out, "P5\n{width} {height}\n255\n")?;
    out.write_all(pixels)
}

/// Map a convergence rate to intensity: brighter means faster, so the
/// pixel value is `255 (1 - rate)` with rates clipped to `[0, 1]`.
/// Missing or divergent cells map to black.
pub fn rate_pixel(rate: Option<f64>) -> u8 {
    match rate {
        Some(r) if r.is_finite() => {
            let clipped = r.clamp(0.0, 1.0);
            (255.0 * (1.0 - clipped)).round() as u8
        }
        _ => 0,
    }
}

/// Map a nonnegative magnitude to intensity relative to the grid maximum:
/// brighter means smaller. Missing cells map to black.
pub fn magnitude_pixel(value: Option<f64>, max: f64) -> u8 {
    match value {
        Some(v) if v.is_finite() && max > 0.0 => {
            let clipped = (v / max).clamp(0.0, 1.0);
            (255.0 * (1.0 - clipped)).round() as u8
        }
        _ => 0,
    }
}
