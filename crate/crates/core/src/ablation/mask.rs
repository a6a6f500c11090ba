use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::FundusImage;

/// Masked pixels take this value: the network input space subtracts 0.5, so
/// masked regions read as exactly zero there.
pub const MASK_FILL: f64 = 0.5;

/// One ablation arm. Mask fractions give the masked share of image AREA, in
/// [0,1); blur strength is a Gaussian sigma quoted at the 587-pixel reference
/// resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AblationSpec {
    None,
    /// Two equal horizontal bands at the top and bottom edges.
    TopBottom { fraction: f64 },
    /// One horizontal band centered vertically.
    CenterStripe { fraction: f64 },
    /// Everything outside a centered circle.
    OuterRim { fraction: f64 },
    /// Everything inside a centered circle.
    CentralCore { fraction: f64 },
    GaussianBlur { sigma: f64 },
}

impl AblationSpec {
    pub fn kind_str(&self) -> &'static str {
        match self {
            AblationSpec::None => "none",
            AblationSpec::TopBottom { .. } => "top_bottom",
            AblationSpec::CenterStripe { .. } => "center_stripe",
            AblationSpec::OuterRim { .. } => "outer_rim",
            AblationSpec::CentralCore { .. } => "central_core",
            AblationSpec::GaussianBlur { .. } => "gaussian_blur",
        }
    }

    pub fn param(&self) -> f64 {
        match *self {
            AblationSpec::None => 0.0,
            AblationSpec::TopBottom { fraction }
            | AblationSpec::CenterStripe { fraction }
            | AblationSpec::OuterRim { fraction }
            | AblationSpec::CentralCore { fraction } => fraction,
            AblationSpec::GaussianBlur { sigma } => sigma,
        }
    }

    /// Grid token, `kind` or `kind:param`; [`AblationSpec::parse`] inverts it.
    pub fn token(&self) -> String {
        match self {
            AblationSpec::None => "none".to_string(),
            _ => format!("{}:{}", self.kind_str(), self.param()),
        }
    }

    pub fn parse(token: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidConfig(format!("ablation {token:?}: {msg}"));
        let (kind, param) = match token.split_once(':') {
            Some((kind, raw)) => {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| bad(format!("bad parameter {raw:?}")))?;
                (kind, Some(v))
            }
            None => (token, None),
        };
        let spec = match (kind, param) {
            ("none", None) => AblationSpec::None,
            ("top_bottom", Some(fraction)) => AblationSpec::TopBottom { fraction },
            ("center_stripe", Some(fraction)) => AblationSpec::CenterStripe { fraction },
            ("outer_rim", Some(fraction)) => AblationSpec::OuterRim { fraction },
            ("central_core", Some(fraction)) => AblationSpec::CentralCore { fraction },
            ("gaussian_blur", Some(sigma)) => AblationSpec::GaussianBlur { sigma },
            ("none", Some(_)) => return Err(bad("none takes no parameter".into())),
            (_, None) => return Err(bad("missing :parameter".into())),
            _ => return Err(bad("unknown kind".into())),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            AblationSpec::None => Ok(()),
            AblationSpec::TopBottom { fraction }
            | AblationSpec::CenterStripe { fraction }
            | AblationSpec::OuterRim { fraction }
            | AblationSpec::CentralCore { fraction } => {
                if fraction.is_finite() && (0.0..1.0).contains(&fraction) {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "mask fraction {fraction} outside [0,1)"
                    )))
                }
            }
            AblationSpec::GaussianBlur { sigma } => {
                if sigma.is_finite() && sigma >= 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidConfig(format!(
                        "blur sigma {sigma} must be finite and non-negative"
                    )))
                }
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, AblationSpec::None)
    }

    /// Apply this ablation to an image. Masks overwrite whole pixels with
    /// [`MASK_FILL`]; blur preserves local brightness. Idempotent for masks
    /// and the identity arms.
    pub fn apply(&self, img: &FundusImage) -> FundusImage {
        match *self {
            AblationSpec::None => img.clone(),
            AblationSpec::TopBottom { fraction } => {
                let s = img.side();
                let total = (fraction * s as f64).round() as usize;
                let top = (fraction * s as f64 / 2.0).round() as usize;
                let bottom = total.saturating_sub(top);
                mask_where(img, |y, _| y < top || y >= s - bottom.min(s))
            }
            AblationSpec::CenterStripe { fraction } => {
                let s = img.side();
                let h = (fraction * s as f64).round() as usize;
                let start = (s - h.min(s)) / 2;
                mask_where(img, |y, _| y >= start && y < start + h)
            }
            AblationSpec::OuterRim { fraction } => {
                let s = img.side();
                let r2 = radius_for_kept_area(s, (1.0 - fraction) * (s * s) as f64).powi(2);
                mask_where(img, |y, x| dist2(s, y, x) > r2)
            }
            AblationSpec::CentralCore { fraction } => {
                let s = img.side();
                let r2 = radius_for_kept_area(s, fraction * (s * s) as f64).powi(2);
                mask_where(img, |y, x| dist2(s, y, x) <= r2)
            }
            AblationSpec::GaussianBlur { sigma } => super::blur::gaussian_blur(img, sigma),
        }
    }
}

/// Parse a comma-separated grid of tokens, e.g.
/// `none,center_stripe:0.2,gaussian_blur:4`.
pub fn parse_grid(grid: &str) -> Result<Vec<AblationSpec>> {
    if grid.trim().is_empty() {
        return Err(Error::InvalidConfig("empty ablation grid".into()));
    }
    grid.split(',')
        .map(|token| AblationSpec::parse(token.trim()))
        .collect()
}

/// Squared distance from pixel (y, x)'s center to the image center.
fn dist2(side: usize, y: usize, x: usize) -> f64 {
    let c = side as f64 / 2.0;
    let dy = y as f64 + 0.5 - c;
    let dx = x as f64 + 0.5 - c;
    dy * dy + dx * dx
}

/// Area of a circle of radius `r` centered on a side-`s` square, clipped to
/// the square.
fn clipped_circle_area(s: f64, r: f64) -> f64 {
    let half = s / 2.0;
    if r <= half {
        return std::f64::consts::PI * r * r;
    }
    let full = std::f64::consts::PI * r * r;
    if r * r >= 2.0 * half * half {
        return s * s;
    }
    // Four circular segments poke past the sides.
    let seg = r * r * (half / r).acos() - half * (r * r - half * half).sqrt();
    full - 4.0 * seg
}

/// Radius whose clipped circle covers `target` square pixels of area.
/// Needed because at extreme fractions the equal-area circle pokes past the
/// square, so the naive `sqrt(area/pi)` undershoots the clipped coverage.
fn radius_for_kept_area(side: usize, target: f64) -> f64 {
    let s = side as f64;
    let target = target.clamp(0.0, s * s);
    let (mut lo, mut hi) = (0.0, s / std::f64::consts::SQRT_2);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if clipped_circle_area(s, mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn mask_where(img: &FundusImage, pred: impl Fn(usize, usize) -> bool) -> FundusImage {
    let s = img.side();
    let mut out = img.clone();
    for y in 0..s {
        for x in 0..s {
            if pred(y, x) {
                for c in 0..3 {
                    out.set(c, y, x, MASK_FILL);
                }
            }
        }
    }
    out
}

/// Measured masked-area fraction: the share of pixels an arm overwrites in a
/// fully lit image. Blur and `none` mask nothing.
pub fn masked_fraction(spec: &AblationSpec, side: usize) -> f64 {
    let mut img = FundusImage::new(side);
    img.data_mut().fill(1.0);
    let masked = spec.apply(&img);
    let hit = masked
        .channel(0)
        .iter()
        .filter(|&&v| v == MASK_FILL)
        .count();
    hit as f64 / (side * side) as f64
}
