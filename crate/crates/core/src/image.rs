//! Square RGB raster images and the binary PPM (P6) codec used to store them.
//!
//! Pixel values live in [0,1] as f64. Images written to disk are quantized to
//! the 8-bit grid; the renderer quantizes at the end of rendering so that a
//! write/read round trip is bit-exact.

use std::path::Path;

use crate::error::{Error, Result};

/// Square RGB image, planar channel layout (`[c][y][x]`, c = 0..3), values in [0,1].
#[derive(Debug, Clone, PartialEq)]
pub struct FundusImage {
    side: usize,
    data: Vec<f64>,
}

impl FundusImage {
    pub fn new(side: usize) -> Self {
        FundusImage {
            side,
            data: vec![0.0; 3 * side * side],
        }
    }

    pub fn from_data(side: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != 3 * side * side {
            return Err(Error::ShapeMismatch(format!(
                "image buffer has {} values, expected {} for side {}",
                data.len(),
                3 * side * side,
                side
            )));
        }
        Ok(FundusImage { side, data })
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.side + y) * self.side + x]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, v: f64) {
        self.data[(c * self.side + y) * self.side + x] = v;
    }

    /// One channel plane as a contiguous slice.
    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.side * self.side;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.side * self.side;
        &mut self.data[c * n..(c + 1) * n]
    }

    /// Mean over all channels and pixels.
    pub fn mean(&self) -> f64 {
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    /// Snap every value to the nearest 8-bit level k/255.
    pub fn quantize(&mut self) {
        for v in &mut self.data {
            let q = (v.clamp(0.0, 1.0) * 255.0).round();
            *v = q / 255.0;
        }
    }

    /// Serialize as binary PPM (P6, maxval 255).
    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32 + 3 * self.side * self.side);
        out.extend_from_slice(format!("P6\n{} {}\n255\n", self.side, self.side).as_bytes());
        for y in 0..self.side {
            for x in 0..self.side {
                for c in 0..3 {
                    let v = (self.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                    out.push(v);
                }
            }
        }
        out
    }

    /// Parse binary PPM. Only P6 with maxval 255 and square dimensions are accepted.
    pub fn from_ppm_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let err = |msg: String| Error::PpmFormat {
            path: path.to_path_buf(),
            msg,
        };
        let mut pos = 0usize;
        let next_token = |pos: &mut usize| -> Result<String> {
            // skip whitespace and '#' comments between header tokens
            loop {
                while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
                    *pos += 1;
                }
                if *pos < bytes.len() && bytes[*pos] == b'#' {
                    while *pos < bytes.len() && bytes[*pos] != b'\n' {
                        *pos += 1;
                    }
                    continue;
                }
                break;
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            if start == *pos {
                return Err(err("unexpected end of header".into()));
            }
            Ok(String::from_utf8_lossy(&bytes[start..*pos]).into_owned())
        };

        let magic = next_token(&mut pos)?;
        if magic != "P6" {
            return Err(err(format!("unsupported magic {magic:?}, expected P6")));
        }
        let width: usize = next_token(&mut pos)?
            .parse()
            .map_err(|e| err(format!("bad width: {e}")))?;
        let height: usize = next_token(&mut pos)?
            .parse()
            .map_err(|e| err(format!("bad height: {e}")))?;
        let maxval: usize = next_token(&mut pos)?
            .parse()
            .map_err(|e| err(format!("bad maxval: {e}")))?;
        if maxval != 255 {
            return Err(err(format!("unsupported maxval {maxval}, only 255")));
        }
        if width != height {
            return Err(err(format!("image is {width}x{height}, expected square")));
        }
        // exactly one whitespace byte separates the header from pixel data
        if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
            return Err(err("missing separator before pixel data".into()));
        }
        pos += 1;
        let need = 3 * width * height;
        let pixels = &bytes[pos..];
        if pixels.len() != need {
            return Err(err(format!(
                "expected {need} pixel bytes, found {}",
                pixels.len()
            )));
        }
        let side = width;
        let mut img = FundusImage::new(side);
        for y in 0..side {
            for x in 0..side {
                for c in 0..3 {
                    let v = pixels[(y * side + x) * 3 + c] as f64 / 255.0;
                    img.set(c, y, x, v);
                }
            }
        }
        Ok(img)
    }

    pub fn write_ppm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ppm_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read_ppm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_ppm_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::path::PathBuf;

    #[test]
    fn ppm_round_trip_is_bit_exact() {
        let mut img = FundusImage::new(5);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i % 256) as f64 / 255.0;
        }
        img.quantize();
        let bytes = img.to_ppm_bytes();
        let back = FundusImage::from_ppm_bytes(&bytes, &PathBuf::from("mem.ppm")).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn rejects_16_bit_maxval() {
        let bytes = b"P6\n2 2\n65535\n".to_vec();
        let e = FundusImage::from_ppm_bytes(&bytes, &PathBuf::from("deep.ppm")).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("65535"), "{msg}");
        assert!(msg.contains("deep.ppm"), "{msg}");
    }

    #[test]
    fn rejects_truncated_pixels() {
        let mut bytes = b"P6\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3]);
        assert!(FundusImage::from_ppm_bytes(&bytes, &PathBuf::from("t.ppm")).is_err());
    }

    #[test]
    fn rejects_non_square() {
        let mut bytes = b"P6\n3 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 18]);
        assert!(FundusImage::from_ppm_bytes(&bytes, &PathBuf::from("r.ppm")).is_err());
    }
}
