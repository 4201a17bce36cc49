//! Tiny grayscale rasterizer and image moments.
//!
//! Images are row-major `size × size` buffers in `[0, 1]`, row 0 at the top.
//! Drawing coordinates put the origin at the bottom-left corner with `y`
//! pointing up, one unit per pixel.

/// Distance from `p` to the segment `a`–`b`.
fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Anti-aliased thick segment, combined with existing pixels by `max`.
pub fn draw_segment(img: &mut [f64], size: usize, a: (f64, f64), b: (f64, f64), half_width: f64) {
    draw_segment_valued(img, size, a, b, half_width, 1.0);
}

/// Filled anti-aliased disc.
pub fn draw_disc(img: &mut [f64], size: usize, c: (f64, f64), radius: f64, value: f64) {
    draw_segment_valued(img, size, c, c, radius, value);
}

/// Filled axis-aligned rectangle given by its bottom-left and top-right corners.
pub fn fill_rect(img: &mut [f64], size: usize, lo: (f64, f64), hi: (f64, f64), value: f64) {
    for i in 0..size {
        let y = size as f64 - (i as f64 + 0.5);
        for j in 0..size {
            let x = j as f64 + 0.5;
            if x >= lo.0 && x <= hi.0 && y >= lo.1 && y <= hi.1 {
                let px = &mut img[i * size + j];
                *px = px.max(value);
            }
        }
    }
}

fn draw_segment_valued(
    img: &mut [f64],
    size: usize,
    a: (f64, f64),
    b: (f64, f64),
    half_width: f64,
    value: f64,
) {
    for i in 0..size {
        let y = size as f64 - (i as f64 + 0.5);
        for j in 0..size {
            let x = j as f64 + 0.5;
            let d = segment_distance((x, y), a, b);
            let v = value * (half_width + 0.5 - d).clamp(0.0, 1.0);
            let px = &mut img[i * size + j];
            *px = px.max(v);
        }
    }
}

/// Orientation in `[0, π)` of the principal axis of the intensity mass,
/// measured about the image center, counter-clockwise from the +x axis.
/// Returns `None` for an empty image.
pub fn orientation(img: &[f64], size: usize) -> Option<f64> {
    let c = size as f64 / 2.0;
    let (mut sxx, mut syy, mut sxy, mut mass) = (0.0, 0.0, 0.0, 0.0);
    for i in 0..size {
        let y = size as f64 - (i as f64 + 0.5) - c;
        for j in 0..size {
            let x = j as f64 + 0.5 - c;
            let w = img[i * size + j].max(0.0);
            sxx += w * x * x;
            syy += w * y * y;
            sxy += w * x * y;
            mass += w;
        }
    }
    if mass <= 0.0 {
        return None;
    }
    let a = 0.5 * (2.0 * sxy).atan2(sxx - syy);
    Some(a.rem_euclid(std::f64::consts::PI))
}

/// Distance between two orientations modulo π.
pub fn orientation_gap(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(std::f64::consts::PI);
    d.min(std::f64::consts::PI - d)
}

/// Encode as a binary portable graymap (P5, maxval 255).
pub fn to_pgm(img: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        img.iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}
