//! Minimal RGB raster with lines, rectangles and bitmap text.

use jutepest_core::RgbImage;

use super::font::{GLYPHS, GLYPH_HEIGHT, GLYPH_WIDTH};

pub type Color = [u8; 3];

pub const WHITE: Color = [255, 255, 255];
pub const BLACK: Color = [0, 0, 0];
pub const GRID: Color = [225, 225, 225];
pub const GRAY: Color = [120, 120, 120];

/// Matplotlib's `tab20`, reordered so the first ten are the strong shades.
pub const PALETTE: [Color; 20] = [
    [31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189],
    [140, 86, 75], [227, 119, 194], [127, 127, 127], [188, 189, 34], [23, 190, 207],
    [174, 199, 232], [255, 187, 120], [152, 223, 138], [255, 152, 150], [197, 176, 213],
    [196, 156, 148], [247, 182, 210], [199, 199, 199], [219, 219, 141], [158, 218, 229],
];

pub struct Canvas {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, background: Color) -> Self {
        let data = background.iter().copied().cycle().take((width * height * 3) as usize).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn set(&mut self, x: i64, y: i64, c: Color) {
        if x >= 0 && y >= 0 && (x as u32) < self.width && (y as u32) < self.height {
            let i = ((y as u32 * self.width + x as u32) * 3) as usize;
            self.data[i..i + 3].copy_from_slice(&c);
        }
    }

    pub fn fill_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Color) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.set(x, y, c);
            }
        }
    }

    pub fn stroke_rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Color) {
        self.fill_rect(x0, y0, x1, y0, c);
        self.fill_rect(x0, y1, x1, y1, c);
        self.fill_rect(x0, y0, x0, y1, c);
        self.fill_rect(x1, y0, x1, y1, c);
    }

    /// Line of the given width; `dash` is (on, off) in pixels.
    pub fn line(&mut self, from: (f64, f64), to: (f64, f64), c: Color, width: f64, dash: Option<(f64, f64)>) {
        let (dx, dy) = (to.0 - from.0, to.1 - from.1);
        let len = (dx * dx + dy * dy).sqrt();
        let steps = (len * 3.0).ceil().max(1.0) as usize;
        let r = (width / 2.0).max(0.5);
        for s in 0..=steps {
            let t = s as f64 / steps as f64;
            if let Some((on, off)) = dash {
                if (t * len) % (on + off) >= on {
                    continue;
                }
            }
            self.dot(from.0 + dx * t, from.1 + dy * t, r, c);
        }
    }

    pub fn dot(&mut self, cx: f64, cy: f64, r: f64, c: Color) {
        let (x0, x1) = ((cx - r).round() as i64, (cx + r).round() as i64);
        let (y0, y1) = ((cy - r).round() as i64, (cy + r).round() as i64);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let (ex, ey) = (x as f64 - cx, y as f64 - cy);
                if ex * ex + ey * ey <= r * r + 0.25 {
                    self.set(x, y, c);
                }
            }
        }
    }

    pub fn text_width(s: &str) -> i64 {
        (s.chars().count() as u32 * GLYPH_WIDTH) as i64
    }

    pub const TEXT_HEIGHT: i64 = GLYPH_HEIGHT as i64;

    /// Draws `s` with its top-left corner at `(x, y)`; characters outside
    /// printable ASCII render as `?`.
    pub fn text(&mut self, x: i64, y: i64, s: &str, c: Color) {
        for (i, ch) in s.chars().enumerate() {
            let glyph = glyph(ch);
            let ox = x + i as i64 * GLYPH_WIDTH as i64;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..GLYPH_WIDTH {
                    if bits >> col & 1 == 1 {
                        self.set(ox + col as i64, y + row as i64, c);
                    }
                }
            }
        }
    }

    /// Text rotated a quarter turn counter-clockwise; `(x, y)` is the
    /// bottom-left corner of the first character.
    pub fn text_up(&mut self, x: i64, y: i64, s: &str, c: Color) {
        for (i, ch) in s.chars().enumerate() {
            let glyph = glyph(ch);
            let oy = y - i as i64 * GLYPH_WIDTH as i64;
            for (row, bits) in glyph.iter().enumerate() {
                for col in 0..GLYPH_WIDTH {
                    if bits >> col & 1 == 1 {
                        self.set(x + row as i64, oy - col as i64, c);
                    }
                }
            }
        }
    }

    pub fn text_centered(&mut self, cx: i64, y: i64, s: &str, c: Color) {
        self.text(cx - Self::text_width(s) / 2, y, s, c);
    }

    pub fn into_image(self) -> RgbImage {
        RgbImage::new(self.width, self.height, self.data).expect("canvas buffer matches its size")
    }
}

fn glyph(ch: char) -> &'static [u8; 13] {
    let code = ch as u32;
    let i = if (0x20..=0x7e).contains(&code) { code - 0x20 } else { '?' as u32 - 0x20 };
    &GLYPHS[i as usize]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_inks_pixels_inside_its_box() {
        let mut c = Canvas::new(40, 20, WHITE);
        c.text(2, 2, "Ab", BLACK);
        let img = c.into_image();
        let mut inked = 0;
        for y in 0..20 {
            for x in 0..40 {
                if img.pixel(x, y) == BLACK {
                    inked += 1;
                    assert!((2..16).contains(&x) && (2..15).contains(&y));
                }
            }
        }
        assert!(inked > 10);
    }

    #[test]
    fn lines_stay_in_bounds() {
        let mut c = Canvas::new(10, 10, WHITE);
        c.line((-5.0, -5.0), (20.0, 20.0), BLACK, 3.0, Some((2.0, 2.0)));
        assert_eq!(c.into_image().data().len(), 300);
    }
}
