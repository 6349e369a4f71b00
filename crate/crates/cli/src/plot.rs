//! Static raster plots written as PNG.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use xdloc::geometry::io::write_png_bytes;
use xdloc::retrieval::DistanceMatrix;
use xdloc::training::LossRow;
use xdloc::{Error, Result};

const MAX_SIDE: usize = 512;
const WHITE: [u8; 3] = [255, 255, 255];
const GRAY: [u8; 3] = [170, 170, 170];
const BLACK: [u8; 3] = [0, 0, 0];

struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize, bg: [u8; 3]) -> Self {
        Canvas {
            width,
            height,
            rgb: bg.repeat(width * height),
        }
    }

    fn put(&mut self, x: i64, y: i64, c: [u8; 3]) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            let i = 3 * (y as usize * self.width + x as usize);
            self.rgb[i..i + 3].copy_from_slice(&c);
        }
    }

    fn rect(&mut self, x0: usize, y0: usize, w: usize, h: usize, c: [u8; 3]) {
        for y in y0..y0 + h {
            for x in x0..x0 + w {
                self.put(x as i64, y as i64, c);
            }
        }
    }

    fn frame(&mut self, x0: usize, y0: usize, w: usize, h: usize, c: [u8; 3]) {
        let (x1, y1) = ((x0 + w - 1) as i64, (y0 + h - 1) as i64);
        self.line(x0 as i64, y0 as i64, x1, y0 as i64, c);
        self.line(x0 as i64, y1, x1, y1, c);
        self.line(x0 as i64, y0 as i64, x0 as i64, y1, c);
        self.line(x1, y0 as i64, x1, y1, c);
    }

    /// Bresenham segment.
    fn line(&mut self, mut x0: i64, mut y0: i64, x1: i64, y1: i64, c: [u8; 3]) {
        let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
        let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
        let mut err = dx + dy;
        loop {
            self.put(x0, y0, c);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        write_png_bytes(BufWriter::new(File::create(path)?), self.width, self.height, true, &self.rgb)
    }
}

/// Dark blue through teal and green to yellow for `t` in [0, 1].
fn colormap(t: f64) -> [u8; 3] {
    const STOPS: [[f64; 3]; 4] = [[0.27, 0.0, 0.33], [0.13, 0.56, 0.55], [0.37, 0.79, 0.38], [0.99, 0.91, 0.14]];
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 } * 3.0;
    let i = (t.floor() as usize).min(2);
    let f = t - i as f64;
    let mut out = [0u8; 3];
    for (k, o) in out.iter_mut().enumerate() {
        *o = ((STOPS[i][k] * (1.0 - f) + STOPS[i + 1][k] * f) * 255.0).round() as u8;
    }
    out
}

/// Query-by-database distances, darker for closer pairs. Large matrices are
/// reduced by taking the minimum over blocks.
pub fn distance_matrix(m: &DistanceMatrix, path: &Path) -> Result<()> {
    if m.rows == 0 || m.cols == 0 {
        return Err(Error::Data("empty distance matrix".into()));
    }
    let (h, w) = (m.rows.min(MAX_SIDE), m.cols.min(MAX_SIDE));
    let (lo, hi) = m.data.iter().fold((f32::INFINITY, f32::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if hi > lo { (hi - lo) as f64 } else { 1.0 };
    let mut canvas = Canvas::new(w, h, BLACK);
    for y in 0..h {
        let (r0, r1) = (y * m.rows / h, ((y + 1) * m.rows / h).max(y * m.rows / h + 1));
        for x in 0..w {
            let (c0, c1) = (x * m.cols / w, ((x + 1) * m.cols / w).max(x * m.cols / w + 1));
            let mut v = f32::INFINITY;
            for r in r0..r1 {
                for c in c0..c1 {
                    v = v.min(m.get(r, c));
                }
            }
            canvas.put(x as i64, y as i64, colormap((v - lo) as f64 / span));
        }
    }
    canvas.save(path)
}

const LOSS_COLORS: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [23, 190, 207],
];

/// One panel per non-constant loss component, each scaled to its own range.
pub fn loss_curves(rows: &[LossRow], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Data("empty loss log".into()));
    }
    let names: Vec<&str> = rows[0].components().iter().map(|(n, _)| *n).collect();
    let series: Vec<(usize, Vec<f64>)> = (0..names.len())
        .map(|k| (k, rows.iter().map(|r| r.components()[k].1).collect::<Vec<f64>>()))
        .filter(|(_, v)| v.iter().any(|x| *x != v[0]))
        .collect();
    let (pw, ph, pad) = (640usize, 100usize, 8usize);
    let panels = series.len().max(1);
    let mut canvas = Canvas::new(pw + 2 * pad, panels * (ph + pad) + pad, WHITE);
    for (p, (k, v)) in series.iter().enumerate() {
        let y0 = pad + p * (ph + pad);
        canvas.frame(pad, y0, pw, ph, GRAY);
        let (lo, hi) = v.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = v.len().max(2) - 1;
        let point = |i: usize| {
            let x = pad + 1 + i * (pw - 3) / n;
            let y = y0 + 1 + ((hi - v[i]) / span * (ph - 3) as f64).round() as usize;
            (x as i64, y as i64)
        };
        let color = LOSS_COLORS[k % LOSS_COLORS.len()];
        let mut prev = point(0);
        for i in 1..v.len() {
            let next = point(i);
            canvas.line(prev.0, prev.1, next.0, next.1, color);
            prev = next;
        }
        // color key: one swatch per component index
        canvas.rect(pad + pw - 12 * (names.len() - k), y0 + 3, 8, 8, color);
    }
    canvas.save(path)
}

/// Grid of recall values: one column per yaw angle, rows for recall@1% and
/// recall@1, brighter for higher recall.
pub fn rotation_grid(rows: &[(f64, f64, f64)], path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::Data("empty rotation sweep".into()));
    }
    let cell = 40;
    let mut canvas = Canvas::new(rows.len() * cell + 1, 2 * cell + 1, BLACK);
    for (c, &(_, top_pct, top1)) in rows.iter().enumerate() {
        for (r, v) in [top_pct, top1].into_iter().enumerate() {
            canvas.rect(c * cell + 1, r * cell + 1, cell - 1, cell - 1, colormap(v));
        }
    }
    canvas.save(path)
}
