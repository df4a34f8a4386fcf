//! Minimal PNG chart rendering: training curves and channel-score bars.
//!
//! Hand-rolled on an RGB buffer with a 5x7 bitmap font; enough for the
//! metrics curves and bar charts without pulling in a plotting stack.

use image::{Rgb, RgbImage};

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const FG: Rgb<u8> = Rgb([20, 20, 20]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const TRAIN: Rgb<u8> = Rgb([31, 119, 180]);
const VAL: Rgb<u8> = Rgb([214, 39, 40]);
const BAR: Rgb<u8> = Rgb([31, 119, 180]);

/// 5x7 glyphs, one u8 per row, low 5 bits used.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        '.' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C],
        ',' => [0x00, 0x00, 0x00, 0x00, 0x0C, 0x04, 0x08],
        '-' => [0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00],
        '_' => [0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x1F],
        ':' => [0x00, 0x0C, 0x0C, 0x00, 0x0C, 0x0C, 0x00],
        '/' => [0x01, 0x01, 0x02, 0x04, 0x08, 0x10, 0x10],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        _ => [0x00; 7],
    }
}

fn draw_text(img: &mut RgbImage, x: i32, y: i32, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for c in text.chars() {
        let rows = glyph(c);
        for (ry, row) in rows.iter().enumerate() {
            for rx in 0..5 {
                if row & (0x10 >> rx) != 0 {
                    put(img, cx + rx, y + ry as i32, color);
                }
            }
        }
        cx += 6;
    }
}

fn text_width(text: &str) -> i32 {
    text.chars().count() as i32 * 6 - 1
}

fn put(img: &mut RgbImage, x: i32, y: i32, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn draw_line(img: &mut RgbImage, x0: i32, y0: i32, x1: i32, y1: i32, color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

fn fill_rect(img: &mut RgbImage, x: i32, y: i32, w: i32, h: i32, color: Rgb<u8>) {
    for yy in y..y + h {
        for xx in x..x + w {
            put(img, xx, yy, color);
        }
    }
}

/// One chart panel with data-space to pixel-space mapping.
struct Panel {
    x0: i32,
    y0: i32,
    width: i32,
    height: i32,
    xmin: f64,
    xmax: f64,
    ymin: f64,
    ymax: f64,
}

impl Panel {
    fn px(&self, x: f64) -> i32 {
        let t = (x - self.xmin) / (self.xmax - self.xmin).max(1e-12);
        self.x0 + (t * self.width as f64).round() as i32
    }

    fn py(&self, y: f64) -> i32 {
        let t = (y - self.ymin) / (self.ymax - self.ymin).max(1e-12);
        self.y0 + self.height - (t * self.height as f64).round() as i32
    }

    fn frame(&self, img: &mut RgbImage, title: &str) {
        draw_line(img, self.x0, self.y0, self.x0, self.y0 + self.height, FG);
        draw_line(
            img,
            self.x0,
            self.y0 + self.height,
            self.x0 + self.width,
            self.y0 + self.height,
            FG,
        );
        draw_text(
            img,
            self.x0 + (self.width - text_width(title)) / 2,
            self.y0 - 14,
            title,
            FG,
        );
    }

    fn y_ticks(&self, img: &mut RgbImage, count: usize) {
        for i in 0..=count {
            let v = self.ymin + (self.ymax - self.ymin) * i as f64 / count as f64;
            let y = self.py(v);
            draw_line(img, self.x0, y, self.x0 + self.width, y, GRID);
            draw_line(img, self.x0 - 3, y, self.x0, y, FG);
            let label = format!("{v:.2}");
            draw_text(img, self.x0 - 6 - text_width(&label), y - 3, &label, FG);
        }
    }

    fn x_ticks_int(&self, img: &mut RgbImage) {
        let span = (self.xmax - self.xmin).max(1.0);
        let step = (span / 10.0).ceil().max(1.0);
        let mut v = self.xmin;
        while v <= self.xmax + 1e-9 {
            let x = self.px(v);
            draw_line(img, x, self.y0 + self.height, x, self.y0 + self.height + 3, FG);
            let label = format!("{}", v as i64);
            draw_text(
                img,
                x - text_width(&label) / 2,
                self.y0 + self.height + 6,
                &label,
                FG,
            );
            v += step;
        }
    }

    fn polyline(&self, img: &mut RgbImage, points: &[(f64, f64)], color: Rgb<u8>) {
        for pair in points.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            draw_line(img, self.px(a.0), self.py(a.1), self.px(b.0), self.py(b.1), color);
        }
    }

    fn legend(&self, img: &mut RgbImage, entries: &[(&str, Rgb<u8>)]) {
        let mut x = self.x0 + 8;
        let y = self.y0 + 6;
        for (label, color) in entries {
            fill_rect(img, x, y, 8, 8, *color);
            draw_text(img, x + 12, y, label, FG);
            x += 12 + text_width(label) + 14;
        }
    }
}

/// Parsed metrics rows: (epoch, train_acc, train_loss, val_acc, val_loss).
pub type MetricsRow = (f64, f64, f64, f64, f64);

/// Render train/validation accuracy and loss curves side by side.
pub fn render_metrics(rows: &[MetricsRow]) -> RgbImage {
    let mut img = RgbImage::from_pixel(900, 380, BG);
    let (xmin, xmax) = (rows.first().map(|r| r.0).unwrap_or(0.0), rows.last().map(|r| r.0).unwrap_or(1.0));
    let loss_max = rows
        .iter()
        .flat_map(|r| [r.2, r.4])
        .fold(0.0f64, f64::max)
        .max(1e-6);

    let accuracy = Panel {
        x0: 60,
        y0: 40,
        width: 350,
        height: 280,
        xmin,
        xmax: xmax.max(xmin + 1.0),
        ymin: 0.0,
        ymax: 1.0,
    };
    accuracy.frame(&mut img, "ACCURACY");
    accuracy.y_ticks(&mut img, 5);
    accuracy.x_ticks_int(&mut img);
    accuracy.polyline(&mut img, &rows.iter().map(|r| (r.0, r.1)).collect::<Vec<_>>(), TRAIN);
    accuracy.polyline(&mut img, &rows.iter().map(|r| (r.0, r.3)).collect::<Vec<_>>(), VAL);
    accuracy.legend(&mut img, &[("TRAIN", TRAIN), ("VAL", VAL)]);

    let loss = Panel {
        x0: 520,
        y0: 40,
        width: 350,
        height: 280,
        xmin,
        xmax: xmax.max(xmin + 1.0),
        ymin: 0.0,
        ymax: loss_max * 1.05,
    };
    loss.frame(&mut img, "LOSS");
    loss.y_ticks(&mut img, 5);
    loss.x_ticks_int(&mut img);
    loss.polyline(&mut img, &rows.iter().map(|r| (r.0, r.2)).collect::<Vec<_>>(), TRAIN);
    loss.polyline(&mut img, &rows.iter().map(|r| (r.0, r.4)).collect::<Vec<_>>(), VAL);
    loss.legend(&mut img, &[("TRAIN", TRAIN), ("VAL", VAL)]);

    draw_text(&mut img, 60, 355, "EPOCH", FG);
    img
}

/// Render one bar per label (channel scores).
pub fn render_bars(labels: &[String], values: &[f64], title: &str) -> RgbImage {
    let mut img = RgbImage::from_pixel(760, 360, BG);
    let ymax = values.iter().copied().fold(0.0f64, f64::max).max(1e-6) * 1.1;
    let panel = Panel {
        x0: 60,
        y0: 40,
        width: 660,
        height: 240,
        xmin: 0.0,
        xmax: labels.len() as f64,
        ymin: 0.0,
        ymax,
    };
    panel.frame(&mut img, title);
    panel.y_ticks(&mut img, 5);
    let slot = 660.0 / labels.len() as f64;
    for (i, (&value, label)) in values.iter().zip(labels).enumerate() {
        let x = panel.x0 + (i as f64 * slot + slot * 0.15) as i32;
        let w = (slot * 0.7) as i32;
        let top = panel.py(value);
        fill_rect(&mut img, x, top, w, panel.y0 + panel.height - top, BAR);
        // vertical-ish label: stack characters
        let lx = x + w / 2 - 2;
        for (j, c) in label.chars().take(12).enumerate() {
            draw_text(&mut img, lx, panel.y0 + panel.height + 6 + j as i32 * 8, &c.to_string(), FG);
        }
    }
    img
}
