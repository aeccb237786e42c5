//! Low-resolution greyscale images, patch normalization, horizontal NCC
//! registration and binary greymap (P5) I/O.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("expected a {expected_w}x{expected_h} image, got {w}x{h}")]
    Dimensions {
        expected_w: usize,
        expected_h: usize,
        w: usize,
        h: usize,
    },
    #[error("image data length {len} does not match {w}x{h}")]
    DataLength { len: usize, w: usize, h: usize },
    #[error("patch size must be positive")]
    ZeroPatch,
    #[error("malformed greymap {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// Camera image geometry and normalization patch size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGeometry {
    pub width: usize,
    pub height: usize,
    pub patch: usize,
}

impl Default for ImageGeometry {
    fn default() -> Self {
        Self {
            width: 115,
            height: 44,
            patch: 9,
        }
    }
}

/// 8-bit greyscale image, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::DataLength {
                len: data.len(),
                w: width,
                h: height,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.data[row * self.width + col]
    }

    pub fn to_float(&self) -> Image {
        Image {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f64::from(v)).collect(),
        }
    }

    /// Encodes as a binary portable greymap.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_pgm(bytes: &[u8], path: &Path) -> Result<Self, ImageError> {
        let fail = |reason: &str| ImageError::Format {
            path: path.to_path_buf(),
            reason: reason.to_string(),
        };
        let mut pos = 0;
        let mut fields = [0usize; 3];
        let next_token = |pos: &mut usize| -> Option<&[u8]> {
            while *pos < bytes.len() {
                match bytes[*pos] {
                    b'#' => {
                        while *pos < bytes.len() && bytes[*pos] != b'\n' {
                            *pos += 1;
                        }
                    }
                    b if b.is_ascii_whitespace() => *pos += 1,
                    _ => break,
                }
            }
            let start = *pos;
            while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
                *pos += 1;
            }
            (*pos > start).then(|| &bytes[start..*pos])
        };
        if next_token(&mut pos) != Some(b"P5".as_slice()) {
            return Err(fail("missing P5 magic"));
        }
        for field in &mut fields {
            let token = next_token(&mut pos).ok_or_else(|| fail("truncated header"))?;
            *field = std::str::from_utf8(token)
                .ok()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| fail("non-numeric header field"))?;
        }
        let [width, height, maxval] = fields;
        if maxval != 255 {
            return Err(fail("only 8-bit greymaps are supported"));
        }
        // Exactly one whitespace byte separates the header from the raster.
        pos += 1;
        let expected = width * height;
        let raster = bytes.get(pos..).unwrap_or_default();
        if raster.len() < expected {
            return Err(fail(&format!(
                "raster truncated: {} of {expected} bytes",
                raster.len()
            )));
        }
        if raster.len() > expected {
            return Err(fail("trailing bytes after raster"));
        }
        Self::new(width, height, raster.to_vec())
    }

    pub fn save_pgm(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        fs::write(path, self.to_pgm()).map_err(|source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load_pgm(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| ImageError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_pgm(&bytes, path)
    }
}

/// Floating-point image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self, ImageError> {
        if data.len() != width * height {
            return Err(ImageError::DataLength {
                len: data.len(),
                w: width,
                h: height,
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for row in 0..height {
            for col in 0..width {
                data.push(f(col, row));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.data[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.width..(row + 1) * self.width]
    }

    /// Circular column shift: `out[c] = self[(c − shift) mod width]`.
    pub fn roll_columns(&self, shift: i64) -> Self {
        let w = self.width as i64;
        Self::from_fn(self.width, self.height, |c, r| {
            self.get((c as i64 - shift).rem_euclid(w) as usize, r)
        })
    }
}

/// Per-tile zero-mean, unit-variance normalization over non-overlapping
/// `patch × patch` tiles. Border tiles are truncated to the in-bounds pixels;
/// tiles with variance below `1e-12` become zero.
pub fn patch_normalize(image: &Image, geometry: &ImageGeometry) -> Result<Image, ImageError> {
    if image.width != geometry.width || image.height != geometry.height {
        return Err(ImageError::Dimensions {
            expected_w: geometry.width,
            expected_h: geometry.height,
            w: image.width,
            h: image.height,
        });
    }
    if geometry.patch == 0 {
        return Err(ImageError::ZeroPatch);
    }
    let p = geometry.patch;
    let mut out = vec![0.0; image.data.len()];
    for r0 in (0..image.height).step_by(p) {
        for c0 in (0..image.width).step_by(p) {
            let rows = r0..(r0 + p).min(image.height);
            let cols = c0..(c0 + p).min(image.width);
            let n = (rows.len() * cols.len()) as f64;
            let mut sum = 0.0;
            for r in rows.clone() {
                sum += image.row(r)[cols.clone()].iter().sum::<f64>();
            }
            let mean = sum / n;
            let mut var = 0.0;
            for r in rows.clone() {
                var += image.row(r)[cols.clone()]
                    .iter()
                    .map(|v| (v - mean) * (v - mean))
                    .sum::<f64>();
            }
            var /= n;
            if var < 1e-12 {
                continue;
            }
            let inv = 1.0 / var.sqrt();
            for r in rows {
                for c in cols.clone() {
                    out[r * image.width + c] = (image.data[r * image.width + c] - mean) * inv;
                }
            }
        }
    }
    Image::new(image.width, image.height, out)
}

/// Peak of a horizontal registration search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NccMatch {
    /// Shift `d` such that `query[c]` best matches `reference[c + d]`.
    pub offset: i64,
    /// Normalized cross-correlation at the peak, in `[−1, 1]`.
    pub rho: f64,
}

impl NccMatch {
    pub const NONE: Self = Self { offset: 0, rho: 0.0 };
}

/// Column sums and squared-column sums as prefix arrays.
struct ColumnStats {
    sum: Vec<f64>,
    sq: Vec<f64>,
}

impl ColumnStats {
    fn new(image: &Image) -> Self {
        let mut sum = vec![0.0; image.width + 1];
        let mut sq = vec![0.0; image.width + 1];
        let mut col_sum = vec![0.0; image.width];
        let mut col_sq = vec![0.0; image.width];
        for r in 0..image.height {
            for (c, v) in image.row(r).iter().enumerate() {
                col_sum[c] += v;
                col_sq[c] += v * v;
            }
        }
        for c in 0..image.width {
            sum[c + 1] = sum[c] + col_sum[c];
            sq[c + 1] = sq[c] + col_sq[c];
        }
        Self { sum, sq }
    }

    fn range(&self, lo: usize, hi: usize) -> (f64, f64) {
        (self.sum[hi] - self.sum[lo], self.sq[hi] - self.sq[lo])
    }
}

/// Pearson correlation of `query[c]` against `reference[c + d]` over their
/// overlapping columns.
fn correlation_at(query: &Image, reference: &Image, qs: &ColumnStats, rs: &ColumnStats, d: i64) -> f64 {
    let w = query.width as i64;
    let lo = (-d).max(0);
    let hi = w.min(w - d);
    if hi - lo < 1 {
        return 0.0;
    }
    let (lo, hi) = (lo as usize, hi as usize);
    let (rlo, rhi) = ((lo as i64 + d) as usize, (hi as i64 + d) as usize);
    let n = ((hi - lo) * query.height) as f64;
    let (sq_sum, sq_sq) = qs.range(lo, hi);
    let (sr_sum, sr_sq) = rs.range(rlo, rhi);
    let mut dot = 0.0;
    for r in 0..query.height {
        let a = &query.row(r)[lo..hi];
        let b = &reference.row(r)[rlo..rhi];
        dot += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    }
    let var_q = sq_sq - sq_sum * sq_sum / n;
    let var_r = sr_sq - sr_sum * sr_sum / n;
    if var_q <= 1e-12 * n || var_r <= 1e-12 * n {
        return 0.0;
    }
    ((dot - sq_sum * sr_sum / n) / (var_q * var_r).sqrt()).clamp(-1.0, 1.0)
}

/// Integer shift in `[−max_shift, max_shift]` (limited to the image width)
/// with the highest NCC. Ties (within `1e-12`) resolve toward smaller `|d|`,
/// then positive `d`.
pub fn ncc_offset(query: &Image, reference: &Image, max_shift: usize) -> NccMatch {
    ncc_offset_window(query, reference, 0, max_shift)
}

/// As [`ncc_offset`], restricted to `center ± radius`.
pub fn ncc_offset_window(query: &Image, reference: &Image, center: i64, radius: usize) -> NccMatch {
    if query.width != reference.width || query.height != reference.height || query.width == 0 {
        return NccMatch::NONE;
    }
    let qs = ColumnStats::new(query);
    let rs = ColumnStats::new(reference);
    let limit = query.width as i64 - 1;
    let mut best = NccMatch {
        offset: 0,
        rho: f64::NEG_INFINITY,
    };
    for k in 0..=2 * radius as i64 {
        // 0, +1, −1, +2, −2, …
        let step = if k % 2 == 1 { (k + 1) / 2 } else { -(k / 2) };
        let d = center + step;
        if d.abs() > limit {
            continue;
        }
        let rho = correlation_at(query, reference, &qs, &rs, d);
        if rho > best.rho + 1e-12 {
            best = NccMatch { offset: d, rho };
        }
    }
    if best.rho.is_finite() {
        best
    } else {
        NccMatch::NONE
    }
}
