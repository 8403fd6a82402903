//! Synthetic camera: a soft-edged white disc on a black background.

use std::io::{Read, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of grey levels in the 16-bit image encoding.
const LEVELS: f64 = 65535.0;

/// Axis-aligned rectangle of positions shown by the camera.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Window {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Window {
    /// Square window of half-width `half` around the origin.
    pub fn centered(half: f64) -> Self {
        Self { x_min: -half, x_max: half, y_min: -half, y_max: half }
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.x_min + self.x_max), 0.5 * (self.y_min + self.y_max))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleSceneConfig {
    pub width: usize,
    pub height: usize,
    pub window: Window,
    /// Disc radius in pixels.
    pub radius: f64,
    /// Width of the Gaussian skirt outside the disc, in pixels.
    pub blur_sigma: f64,
}

impl Default for CircleSceneConfig {
    fn default() -> Self {
        Self { width: 64, height: 64, window: Window::centered(1000.0), radius: 6.0, blur_sigma: 2.0 }
    }
}

impl CircleSceneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 8 || self.height < 8 {
            return Err(Error::InvalidArgument(format!("image must be at least 8x8, got {}x{}", self.width, self.height)));
        }
        if !(self.radius > 0.0 && self.blur_sigma > 0.0) {
            return Err(Error::InvalidArgument("radius and blur_sigma must be positive".into()));
        }
        let w = &self.window;
        if !(w.x_max > w.x_min && w.y_max > w.y_min) {
            return Err(Error::InvalidArgument("degenerate world window".into()));
        }
        Ok(())
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// Pixels per position unit along x and y.
    pub fn pixels_per_unit(&self) -> (f64, f64) {
        let w = &self.window;
        (self.width as f64 / (w.x_max - w.x_min), self.height as f64 / (w.y_max - w.y_min))
    }

    /// Image coordinates (column, row) of a position; rows grow downward.
    pub fn to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        let w = &self.window;
        let col = (x - w.x_min) / (w.x_max - w.x_min) * self.width as f64;
        let row = (w.y_max - y) / (w.y_max - w.y_min) * self.height as f64;
        (col, row)
    }
}

/// Row-major grey image with intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f64>,
}

impl Image {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// Writes a binary 16-bit PGM.
    pub fn write_pgm(&self, w: &mut impl Write) -> Result<()> {
        write!(w, "P5\n{} {}\n65535\n", self.width, self.height)?;
        let mut buf = Vec::with_capacity(2 * self.pixels.len());
        for &p in &self.pixels {
            buf.extend_from_slice(&((p * LEVELS).round() as u16).to_be_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_pgm(r: &mut impl Read) -> Result<Image> {
        let mut data = Vec::new();
        r.read_to_end(&mut data)?;
        let bad = |m: &str| Error::InvalidArgument(format!("malformed PGM: {m}"));
        // Header: magic, width, height, maxval, each separated by whitespace.
        let mut fields = Vec::new();
        let mut pos = 0;
        while fields.len() < 4 {
            while pos < data.len() && data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            let start = pos;
            while pos < data.len() && !data[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(bad("truncated header"));
            }
            fields.push(String::from_utf8_lossy(&data[start..pos]).into_owned());
        }
        pos += 1;
        if fields[0] != "P5" || fields[3] != "65535" {
            return Err(bad("expected a 16-bit P5 image"));
        }
        let width: usize = fields[1].parse().map_err(|_| bad("width"))?;
        let height: usize = fields[2].parse().map_err(|_| bad("height"))?;
        let body = data.get(pos..).ok_or_else(|| bad("missing pixel data"))?;
        if body.len() != 2 * width * height {
            return Err(bad("pixel data length"));
        }
        let pixels = body.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / LEVELS).collect();
        Ok(Image { width, height, pixels })
    }
}

/// Renders the disc centred at `position` (a 2-vector in world units).
///
/// A pixel whose centre lies at distance `d` outside the disc boundary has
/// intensity `exp(-d^2 / (2 sigma^2))`; pixels inside the disc are 1.
/// Intensities are rounded to 16-bit grey levels so that an image survives
/// a PGM round trip bit for bit.
pub fn render_circle(position: &DVector<f64>, cfg: &CircleSceneConfig) -> Image {
    let (cx, cy) = cfg.to_pixel(position[0], position[1]);
    let two_var = 2.0 * cfg.blur_sigma * cfg.blur_sigma;
    let mut pixels = Vec::with_capacity(cfg.pixel_count());
    for row in 0..cfg.height {
        let dy = row as f64 + 0.5 - cy;
        for col in 0..cfg.width {
            let dx = col as f64 + 0.5 - cx;
            let d = ((dx * dx + dy * dy).sqrt() - cfg.radius).max(0.0);
            let v = (-d * d / two_var).exp().clamp(0.0, 1.0);
            pixels.push((v * LEVELS).round() / LEVELS);
        }
    }
    Image { width: cfg.width, height: cfg.height, pixels }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pos(x: f64, y: f64) -> DVector<f64> {
        DVector::from_vec(vec![x, y])
    }

    #[test]
    fn centred_disc_is_bright_in_the_middle() {
        let cfg = CircleSceneConfig::default();
        let img = render_circle(&pos(0.0, 0.0), &cfg);
        assert_eq!(img.get(31, 31), 1.0);
        assert_eq!(img.get(32, 32), 1.0);
        assert!(img.get(0, 0) < img.get(31, 31));
        let max = img.pixels.iter().cloned().fold(0.0, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn mirrored_positions_give_rotated_images() {
        let cfg = CircleSceneConfig::default();
        let a = render_circle(&pos(0.37, -0.81), &cfg);
        let b = render_circle(&pos(-0.37, 0.81), &cfg);
        for r in 0..cfg.height {
            for c in 0..cfg.width {
                assert_eq!(a.get(r, c), b.get(cfg.height - 1 - r, cfg.width - 1 - c));
            }
        }
    }

    #[test]
    fn far_outside_window_is_dark() {
        let cfg = CircleSceneConfig::default();
        // one window width (64 px) past the right edge
        let w = cfg.window.x_max - cfg.window.x_min;
        let img = render_circle(&pos(cfg.window.x_max + w, 0.0), &cfg);
        assert!(img.pixels.iter().all(|&p| p < 1e-6));
    }

    #[test]
    fn pgm_round_trip_is_exact() {
        let cfg = CircleSceneConfig::default();
        let img = render_circle(&pos(0.3, 0.2), &cfg);
        let mut buf = Vec::new();
        img.write_pgm(&mut buf).unwrap();
        let back = Image::read_pgm(&mut buf.as_slice()).unwrap();
        assert_eq!(back, img);
        assert!(Image::read_pgm(&mut &b"P2\n1 1\n255\n0"[..]).is_err());
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut cfg = CircleSceneConfig::default();
        cfg.width = 4;
        assert!(cfg.validate().is_err());
        let mut cfg = CircleSceneConfig::default();
        cfg.window.x_max = cfg.window.x_min;
        assert!(cfg.validate().is_err());
        assert!(CircleSceneConfig::default().validate().is_ok());
    }
}
