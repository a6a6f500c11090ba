use crate::image::FundusImage;

/// Blur sigmas are quoted at this image side; smaller renders scale the
/// effective sigma down proportionally so the blur covers the same anatomy.
pub const REFERENCE_SIDE: f64 = 587.0;

pub fn effective_sigma(sigma: f64, side: usize) -> f64 {
    sigma * side as f64 / REFERENCE_SIDE
}

fn kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut weights = Vec::with_capacity(2 * radius as usize + 1);
    for k in -radius..=radius {
        weights.push((-(k as f64).powi(2) / (2.0 * sigma * sigma)).exp());
    }
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    weights
}

/// Separable Gaussian blur with clamp-to-edge boundaries. `sigma` is quoted
/// at the reference resolution; zero sigma is the exact identity.
pub fn gaussian_blur(img: &FundusImage, sigma: f64) -> FundusImage {
    let s = img.side();
    let sig = effective_sigma(sigma, s);
    if sig <= 0.0 {
        return img.clone();
    }
    let weights = kernel(sig);
    let radius = (weights.len() as i64 - 1) / 2;
    let clamp = |i: i64| i.clamp(0, s as i64 - 1) as usize;

    let mut tmp = img.clone();
    for c in 0..3 {
        let src = img.channel(c);
        let dst = tmp.channel_mut(c);
        for y in 0..s {
            for x in 0..s {
                let mut acc = 0.0;
                for (w, k) in weights.iter().zip(-radius..=radius) {
                    acc += w * src[y * s + clamp(x as i64 + k)];
                }
                dst[y * s + x] = acc;
            }
        }
    }
    let mut out = tmp.clone();
    for c in 0..3 {
        let src = tmp.channel(c);
        let dst = out.channel_mut(c);
        for y in 0..s {
            for x in 0..s {
                let mut acc = 0.0;
                for (w, k) in weights.iter().zip(-radius..=radius) {
                    acc += w * src[clamp(y as i64 + k) * s + x];
                }
                dst[y * s + x] = acc;
            }
        }
    }
    out
}
