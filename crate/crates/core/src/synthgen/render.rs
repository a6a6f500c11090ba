use rand::Rng;
use rand_distr::StandardNormal;

use crate::cohort::Eye;
use crate::image::FundusImage;
use crate::rng;
use crate::synthgen::{GeneratorConfig, VisitLatent};

const RETINA_R: f64 = 0.47;
const BASE_COLOR: [f64; 3] = [0.80, 0.46, 0.26];
const DISC_COLOR: [f64; 3] = [0.96, 0.90, 0.64];
const VIGNETTE: f64 = 0.18;
const DITHER_AMP: f64 = 0.02;
const MACULA_DEPTH: f64 = 0.22;
const MACULA_R: f64 = 0.09;
const DISC_A: f64 = 0.055;
const DISC_B: f64 = 0.062;
const DISC_CX: f64 = 0.27;
const RIM_SD: f64 = 0.08;
const RIM_LOBES: f64 = 8.0;
// vessel centerlines stay inside the central 20% stripe (plus stroke width)
const VESSEL_Y_LO: f64 = 0.42;
const VESSEL_Y_HI: f64 = 0.57;
const VESSEL_W0: f64 = 0.028;
const VESSEL_L0: f64 = 0.16;
const VESSEL_DEPTH: usize = 3;

/// Geometry-only pixel masks of one rendered image; independent of
/// hemoglobin, so two renders of the same latent at different hb values share
/// their masks.
#[derive(Debug, Clone)]
pub struct RenderMasks {
    pub side: usize,
    pub retina: Vec<bool>,
    pub vessel: Vec<bool>,
    pub rim: Vec<bool>,
}

/// Fixed sensor-style texture so that flat regions straddle several 8-bit
/// quantization levels instead of collapsing onto one.
fn dither(x: usize, y: usize) -> f64 {
    let h = (x as u32)
        .wrapping_mul(0x9E37_79B1)
        .wrapping_add((y as u32).wrapping_mul(0x85EB_CA77));
    let h = (h ^ (h >> 13)).wrapping_mul(0xC2B2_AE3D);
    let h = h ^ (h >> 16);
    ((h & 0xFFFF) as f64 / 65535.0 - 0.5) * DITHER_AMP
}

struct Seg {
    x0: f64,
    y0: f64,
    x1: f64,
    y1: f64,
    w: f64,
}

#[allow(clippy::too_many_arguments)]
fn grow(
    stream: &mut rng::Stream,
    segs: &mut Vec<Seg>,
    x: f64,
    y: f64,
    mut angle: f64,
    len: f64,
    w: f64,
    depth: usize,
) {
    let mut x1 = x + len * angle.cos();
    let mut y1 = y + len * angle.sin();
    if !(VESSEL_Y_LO..=VESSEL_Y_HI).contains(&y1) {
        angle = -angle;
        x1 = x + len * angle.cos();
        y1 = (y + len * angle.sin()).clamp(VESSEL_Y_LO, VESSEL_Y_HI);
    }
    if ((x1 - 0.5).powi(2) + (y1 - 0.5).powi(2)).sqrt() > 0.45 {
        return;
    }
    segs.push(Seg {
        x0: x,
        y0: y,
        x1,
        y1,
        w,
    });
    if depth == 0 {
        return;
    }
    for side in [-1.0, 1.0] {
        let dangle: f64 = stream.random_range(-0.09..0.09);
        let dlen: f64 = stream.random_range(0.9..1.1);
        grow(
            stream,
            segs,
            x1,
            y1,
            angle + side * 0.24 + dangle,
            len * 0.78 * dlen,
            w * 0.75,
            depth - 1,
        );
    }
}

/// Render one eye. Deterministic given the latent's jitter seed; the image is
/// quantized to the 8-bit grid, so writing it as PPM and reading it back is
/// lossless.
pub fn render_fundus(latent: &VisitLatent, config: &GeneratorConfig) -> FundusImage {
    render_fundus_with_masks(latent, config).0
}

pub fn render_fundus_with_masks(
    latent: &VisitLatent,
    config: &GeneratorConfig,
) -> (FundusImage, RenderMasks) {
    let s = config.image_side;
    let hb_enc = latent.true_hb + latent.nuisance;
    let mut geom = rng::stream(latent.jitter_seed, "render/geom");

    // geometry jitter, drawn in fixed order
    let dcx = DISC_CX + geom.random_range(-0.008..0.008);
    let dcy = 0.5 + geom.random_range(-0.008..0.008);
    let axis_scale = 1.0 + geom.random_range(-0.03..0.03);
    let (a, b) = (DISC_A * axis_scale, DISC_B * axis_scale);
    let mac_x = 0.5 + geom.random_range(-0.008..0.008);
    let mac_y = 0.5 + geom.random_range(-0.008..0.008);
    let rim_phase = geom.random_range(0.0..std::f64::consts::TAU);

    let mut segs = Vec::new();
    for base_angle in [-0.61, -0.21, 0.21, 0.61] {
        let jitter: f64 = geom.random_range(-0.07..0.07);
        grow(
            &mut geom,
            &mut segs,
            dcx,
            dcy,
            base_angle + jitter,
            VESSEL_L0,
            VESSEL_W0,
            VESSEL_DEPTH,
        );
    }

    // the left eye is the mirror image of the canonical right-eye layout
    let mirror = latent.eye == Eye::Left;
    let flip = |u: f64| if mirror { 1.0 - u } else { u };
    let dcx = flip(dcx);
    let mac_x = flip(mac_x);

    // rasterize vessel coverage
    let mut cov = vec![0.0f64; s * s];
    for seg in &segs {
        let (x0, x1) = (flip(seg.x0), flip(seg.x1));
        let (fx0, fy0) = (x0 * s as f64 - 0.5, seg.y0 * s as f64 - 0.5);
        let (fx1, fy1) = (x1 * s as f64 - 0.5, seg.y1 * s as f64 - 0.5);
        let w_px = seg.w * s as f64;
        let len_px = ((fx1 - fx0).powi(2) + (fy1 - fy0).powi(2)).sqrt();
        let steps = (len_px / 0.35).ceil().max(1.0) as usize;
        let reach = w_px / 2.0 + 1.0;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let px = fx0 + t * (fx1 - fx0);
            let py = fy0 + t * (fy1 - fy0);
            let x_lo = (px - reach).floor().max(0.0) as usize;
            let x_hi = ((px + reach).ceil() as usize).min(s - 1);
            let y_lo = (py - reach).floor().max(0.0) as usize;
            let y_hi = ((py + reach).ceil() as usize).min(s - 1);
            for yy in y_lo..=y_hi {
                for xx in x_lo..=x_hi {
                    let d = ((xx as f64 - px).powi(2) + (yy as f64 - py).powi(2)).sqrt();
                    let c = (w_px / 2.0 + 0.5 - d).clamp(0.0, 1.0);
                    let cell = &mut cov[yy * s + xx];
                    if c > *cell {
                        *cell = c;
                    }
                }
            }
        }
    }

    let bright = 1.0 + config.pallor_gain * (config.reference_hb - hb_enc);
    let vessel_dark = (config.vessel_gain * hb_enc).clamp(0.0, 0.95);
    let rim_amp = (config.disc_gain * hb_enc).clamp(0.0, 0.9);

    let mut img = FundusImage::new(s);
    let mut masks = RenderMasks {
        side: s,
        retina: vec![false; s * s],
        vessel: vec![false; s * s],
        rim: vec![false; s * s],
    };
    let mut noise = if config.noise_sd > 0.0 {
        Some(rng::stream(latent.jitter_seed, "render/noise"))
    } else {
        None
    };

    for y in 0..s {
        for x in 0..s {
            let u = (x as f64 + 0.5) / s as f64;
            let v = (y as f64 + 0.5) / s as f64;
            let d = ((u - 0.5).powi(2) + (v - 0.5).powi(2)).sqrt();
            if d > RETINA_R {
                continue;
            }
            masks.retina[y * s + x] = true;
            let vig = 1.0 - VIGNETTE * (d / RETINA_R).powi(2);
            let dm = ((u - mac_x).powi(2) + (v - mac_y).powi(2)).sqrt();
            let macula = 1.0 - MACULA_DEPTH * (-(dm / MACULA_R).powi(2)).exp();
            let eu = (u - dcx) / a;
            let ev = (v - dcy) / b;
            let e = (eu * eu + ev * ev).sqrt();
            let disc_w = ((1.0 - e) / 0.12).clamp(0.0, 1.0);
            let rim_window = (-((e - 1.0) / RIM_SD).powi(2)).exp();
            let rim_dark = if rim_window > 1e-4 {
                let theta = ev.atan2(eu);
                let pat = 0.5 + 0.5 * (RIM_LOBES * theta + rim_phase).cos();
                masks.rim[y * s + x] = rim_window > 0.3;
                rim_amp * rim_window * pat
            } else {
                0.0
            };
            let vessel = cov[y * s + x];
            masks.vessel[y * s + x] = vessel > 0.5;
            let dith = dither(x, y);
            for c in 0..3 {
                let body = BASE_COLOR[c] * macula * (1.0 - disc_w) + DISC_COLOR[c] * disc_w;
                let mut val = body * bright * vig + dith;
                val *= 1.0 - vessel * vessel_dark;
                val *= 1.0 - rim_dark;
                if let Some(n) = noise.as_mut() {
                    let z: f64 = n.sample(StandardNormal);
                    val += config.noise_sd * z;
                }
                img.set(c, y, x, val);
            }
        }
    }
    img.quantize();
    (img, masks)
}

/// Mean pixel value over the whole image.
pub fn mean_brightness(img: &FundusImage) -> f64 {
    img.mean()
}

/// Mean background level minus mean vessel level; grows with vessel darkness.
pub fn vessel_contrast(img: &FundusImage, masks: &RenderMasks) -> f64 {
    let s = masks.side;
    let (mut bg, mut nbg, mut ve, mut nve) = (0.0, 0usize, 0.0, 0usize);
    for y in 0..s {
        for x in 0..s {
            if !masks.retina[y * s + x] {
                continue;
            }
            let m = (img.get(0, y, x) + img.get(1, y, x) + img.get(2, y, x)) / 3.0;
            if masks.vessel[y * s + x] {
                ve += m;
                nve += 1;
            } else {
                bg += m;
                nbg += 1;
            }
        }
    }
    bg / nbg.max(1) as f64 - ve / nve.max(1) as f64
}

/// Pixel variance inside the disc-rim ring, summed over channels; grows with
/// the rim detail amplitude.
pub fn disc_rim_energy(img: &FundusImage, masks: &RenderMasks) -> f64 {
    let s = masks.side;
    let mut total = 0.0;
    for c in 0..3 {
        let mut sum = 0.0;
        let mut n = 0usize;
        for y in 0..s {
            for x in 0..s {
                if masks.rim[y * s + x] {
                    sum += img.get(c, y, x);
                    n += 1;
                }
            }
        }
        if n == 0 {
            continue;
        }
        let mean = sum / n as f64;
        for y in 0..s {
            for x in 0..s {
                if masks.rim[y * s + x] {
                    total += (img.get(c, y, x) - mean).powi(2);
                }
            }
        }
    }
    total
}

/// Row range `[start, end)` of the central horizontal stripe covering 20% of
/// the image area.
pub fn stripe_bounds(side: usize) -> (usize, usize) {
    let h = (0.2 * side as f64).round() as usize;
    let start = (side - h) / 2;
    (start, start + h)
}

/// Squared pixel difference between renders at two hemoglobin values, split
/// into (inside stripe, outside stripe). Uses a noise-free render so the
/// difference is pure signal.
pub fn signal_energy_split(config: &GeneratorConfig, hb_lo: f64, hb_hi: f64) -> (f64, f64) {
    let mut quiet = config.clone();
    quiet.noise_sd = 0.0;
    let probe = |hb: f64| {
        render_fundus(
            &VisitLatent {
                true_hb: hb,
                nuisance: 0.0,
                eye: Eye::Right,
                jitter_seed: rng::derive_u64(config.seed, "energy-probe"),
            },
            &quiet,
        )
    };
    let lo = probe(hb_lo);
    let hi = probe(hb_hi);
    let s = config.image_side;
    let (row_lo, row_hi) = stripe_bounds(s);
    let (mut inside, mut outside) = (0.0, 0.0);
    for c in 0..3 {
        for y in 0..s {
            for x in 0..s {
                let d = lo.get(c, y, x) - hi.get(c, y, x);
                if (row_lo..row_hi).contains(&y) {
                    inside += d * d;
                } else {
                    outside += d * d;
                }
            }
        }
    }
    (inside, outside)
}
