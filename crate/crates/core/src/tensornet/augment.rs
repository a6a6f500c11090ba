use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::image::FundusImage;
use crate::rng;

/// Augmentation ranges. The color jitters run in the fixed order brightness,
/// saturation, hue, contrast, after the optional flips; every op clamps back
/// to [0,1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentRanges {
    pub flip_vertical: bool,
    pub flip_horizontal: bool,
    pub brightness_max_delta: f64,
    pub saturation: (f64, f64),
    pub hue_max_delta: f64,
    pub contrast: (f64, f64),
}

impl Default for AugmentRanges {
    fn default() -> Self {
        AugmentRanges {
            flip_vertical: true,
            flip_horizontal: true,
            brightness_max_delta: 0.1147528,
            saturation: (0.5597273, 1.2748845),
            hue_max_delta: 0.0251488,
            contrast: (0.9996807, 1.7704824),
        }
    }
}

impl AugmentRanges {
    /// Degenerate ranges: augment becomes the identity.
    pub fn identity() -> Self {
        AugmentRanges {
            flip_vertical: false,
            flip_horizontal: false,
            brightness_max_delta: 0.0,
            saturation: (1.0, 1.0),
            hue_max_delta: 0.0,
            contrast: (1.0, 1.0),
        }
    }
}

pub fn flip_vertical(img: &mut FundusImage) {
    let s = img.side();
    for c in 0..3 {
        for y in 0..s / 2 {
            for x in 0..s {
                let a = img.get(c, y, x);
                let b = img.get(c, s - 1 - y, x);
                img.set(c, y, x, b);
                img.set(c, s - 1 - y, x, a);
            }
        }
    }
}

pub fn flip_horizontal(img: &mut FundusImage) {
    let s = img.side();
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s / 2 {
                let a = img.get(c, y, x);
                let b = img.get(c, y, s - 1 - x);
                img.set(c, y, x, b);
                img.set(c, y, s - 1 - x, a);
            }
        }
    }
}

fn rgb_to_hsv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let d = max - min;
    let v = max;
    let s = if max > 0.0 { d / max } else { 0.0 };
    let h = if d == 0.0 {
        0.0
    } else if max == r {
        (((g - b) / d).rem_euclid(6.0)) / 6.0
    } else if max == g {
        ((b - r) / d + 2.0) / 6.0
    } else {
        ((r - g) / d + 4.0) / 6.0
    };
    (h, s, v)
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let i = h6.floor() as usize % 6;
    let f = h6 - h6.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    match i {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn map_hsv(img: &mut FundusImage, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) {
    let s = img.side();
    for y in 0..s {
        for x in 0..s {
            let (h, sa, v) = rgb_to_hsv(img.get(0, y, x), img.get(1, y, x), img.get(2, y, x));
            let (h, sa, v) = f(h, sa, v);
            let (r, g, b) = hsv_to_rgb(h, sa.clamp(0.0, 1.0), v);
            img.set(0, y, x, r.clamp(0.0, 1.0));
            img.set(1, y, x, g.clamp(0.0, 1.0));
            img.set(2, y, x, b.clamp(0.0, 1.0));
        }
    }
}

fn clamp_all(img: &mut FundusImage) {
    for v in img.data_mut() {
        *v = v.clamp(0.0, 1.0);
    }
}

/// Randomly augment one image. Degenerate ranges skip their op entirely, so
/// an all-identity config returns the input bit for bit.
pub fn augment(img: &FundusImage, ranges: &AugmentRanges, stream: &mut rng::Stream) -> FundusImage {
    let mut out = img.clone();
    if ranges.flip_vertical && stream.random_bool(0.5) {
        flip_vertical(&mut out);
    }
    if ranges.flip_horizontal && stream.random_bool(0.5) {
        flip_horizontal(&mut out);
    }
    if ranges.brightness_max_delta > 0.0 {
        let d = ranges.brightness_max_delta;
        let delta = stream.random_range(-d..d);
        for v in out.data_mut() {
            *v = (*v + delta).clamp(0.0, 1.0);
        }
    }
    {
        let (lo, hi) = ranges.saturation;
        let scale = if lo == hi {
            lo
        } else {
            stream.random_range(lo..hi)
        };
        if scale != 1.0 {
            map_hsv(&mut out, |h, s, v| (h, s * scale, v));
        }
    }
    if ranges.hue_max_delta > 0.0 {
        let d = ranges.hue_max_delta;
        let delta = stream.random_range(-d..d);
        map_hsv(&mut out, |h, s, v| ((h + delta).rem_euclid(1.0), s, v));
    }
    {
        let (lo, hi) = ranges.contrast;
        let scale = if lo == hi {
            lo
        } else {
            stream.random_range(lo..hi)
        };
        if scale != 1.0 {
            let s = out.side();
            let n = (s * s) as f64;
            for c in 0..3 {
                let mean = out.channel(c).iter().sum::<f64>() / n;
                for v in out.channel_mut(c) {
                    *v = ((*v - mean) * scale + mean).clamp(0.0, 1.0);
                }
            }
        }
    }
    clamp_all(&mut out);
    out
}
