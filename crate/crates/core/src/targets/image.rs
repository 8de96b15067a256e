//! Gray-scale image intensities as 2d target densities, with bilinear
//! interpolation between pixel centers. Supports plain PGM (P2 ASCII and
//! P5 binary, 8- or 16-bit) so test fixtures stay bit-exact.

use super::{Target, LOG_FLOOR};
use crate::error::{Error, Result};
use std::path::Path;

pub struct ImageDensity {
    grid: Vec<f64>, // row-major, H×W
    height: usize,
    width: usize,
    domain_box: Vec<(f64, f64)>, // [(x lo, hi), (y lo, hi)]
}

impl ImageDensity {
    pub fn new(grid: Vec<f64>, height: usize, width: usize, domain_box: [(f64, f64); 2]) -> Result<Self> {
        if height < 2 || width < 2 {
            return Err(Error::invalid("image grid must be at least 2x2"));
        }
        if grid.len() != height * width {
            return Err(Error::invalid("grid length does not match H*W"));
        }
        if !grid.iter().any(|&v| v > 0.0) {
            return Err(Error::invalid("image has no strictly positive pixel"));
        }
        if grid.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::invalid("image intensities must be finite and non-negative"));
        }
        Ok(ImageDensity {
            grid,
            height,
            width,
            domain_box: domain_box.to_vec(),
        })
    }

    pub fn from_pgm(path: &Path, domain_box: [(f64, f64); 2]) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let (grid, h, w) = parse_pgm(&bytes)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        ImageDensity::new(grid, h, w, domain_box)
    }

    fn px(&self, row: usize, col: usize) -> f64 {
        self.grid[row * self.width + col]
    }

    /// Log-density and its gradient. Outside the domain box this is the
    /// floor with a zero gradient. Row 0 of the image is the top of the
    /// domain (image convention), so the y axis is flipped.
    pub fn eval(&self, x: &[f64]) -> (f64, [f64; 2]) {
        assert_eq!(x.len(), 2);
        let (x0, x1) = self.domain_box[0];
        let (y0, y1) = self.domain_box[1];
        if x[0] < x0 || x[0] > x1 || x[1] < y0 || x[1] > y1 {
            return (LOG_FLOOR, [0.0, 0.0]);
        }
        let sx = (self.width - 1) as f64 / (x1 - x0);
        let sy = (self.height - 1) as f64 / (y1 - y0);
        let u = (x[0] - x0) * sx;
        let v = (y1 - x[1]) * sy;
        let ci = (u.floor() as usize).min(self.width - 2);
        let ri = (v.floor() as usize).min(self.height - 2);
        let fu = u - ci as f64;
        let fv = v - ri as f64;
        let (p00, p01) = (self.px(ri, ci), self.px(ri, ci + 1));
        let (p10, p11) = (self.px(ri + 1, ci), self.px(ri + 1, ci + 1));
        let val = p00 * (1.0 - fu) * (1.0 - fv)
            + p01 * fu * (1.0 - fv)
            + p10 * (1.0 - fu) * fv
            + p11 * fu * fv;
        let dval_du = (p01 - p00) * (1.0 - fv) + (p11 - p10) * fv;
        let dval_dv = (p10 - p00) * (1.0 - fu) + (p11 - p01) * fu;
        if val <= 0.0 || val.ln() < LOG_FLOOR {
            return (LOG_FLOOR, [0.0, 0.0]);
        }
        // chain rule: d log val / dx, with the y axis flip
        let g = [dval_du * sx / val, -dval_dv * sy / val];
        (val.ln(), g)
    }
}

impl Target for ImageDensity {
    fn dim(&self) -> usize {
        2
    }

    fn prior_box(&self) -> &[(f64, f64)] {
        &self.domain_box
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.eval(x).0
    }

    // gradient_available stays false: the image path is the gradient-free
    // direct-diffusion route; the bilinear patch gradient is exposed via
    // eval() for diagnostics only.
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<(Vec<f64>, usize, usize), String> {
    let mut pos = 0usize;
    let mut token = || -> std::result::Result<String, String> {
        // skip whitespace and '#' comments
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
            } else {
                break;
            }
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("unexpected end of PGM header".into());
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let w: usize = token()?.parse().map_err(|_| "bad width")?;
    let h: usize = token()?.parse().map_err(|_| "bad height")?;
    let maxval: u32 = token()?.parse().map_err(|_| "bad maxval")?;
    if maxval == 0 {
        return Err("maxval must be positive".into());
    }
    let mut grid = Vec::with_capacity(w * h);
    match magic.as_str() {
        "P2" => {
            for _ in 0..w * h {
                grid.push(token()?.parse::<f64>().map_err(|_| "bad pixel")?);
            }
        }
        "P5" => {
            pos += 1; // single whitespace after maxval
            let wide = maxval > 255;
            let need = w * h * if wide { 2 } else { 1 };
            if bytes.len() < pos + need {
                return Err("truncated P5 payload".into());
            }
            for i in 0..w * h {
                let v = if wide {
                    u16::from_be_bytes([bytes[pos + 2 * i], bytes[pos + 2 * i + 1]]) as f64
                } else {
                    bytes[pos + i] as f64
                };
                grid.push(v);
            }
        }
        other => return Err(format!("unsupported PGM magic `{other}`")),
    }
    Ok((grid, h, w))
}
