//! Texture statistics of a grayscale block.
//!
//! Histogram features (entropy, non-zero bin rate, moments) work on `levels`
//! quantized gray levels. Edge fractions threshold the raw 0..=255 kernel
//! response.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Number of components in a [`FeatureVector`].
pub const FEATURE_DIM: usize = 8;

/// Smallest patch side accepted by [`extract_features`].
pub const MIN_PATCH_SIDE: usize = 8;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("quantization levels {0} must divide 256")]
    InvalidLevels(u32),
    #[error("patch {width}x{height} is smaller than the required {min_w}x{min_h}")]
    PatchTooSmall {
        width: usize,
        height: usize,
        min_w: usize,
        min_h: usize,
    },
    #[error("pixel buffer holds {got} values, expected {expected}")]
    BufferSize { got: usize, expected: usize },
    #[error("each class needs at least 2 samples (got {0} and {1})")]
    TooFewSamples(usize, usize),
    #[error("both classes are constant with the same value")]
    Degenerate,
    #[error("invalid feature vector: {0}")]
    Parse(String),
}

/// A rectangular block of 8-bit gray levels, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Patch {
    pixels: Vec<u8>,
    width: usize,
    height: usize,
}

impl Patch {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Self, FeatureError> {
        if pixels.len() != width * height {
            return Err(FeatureError::BufferSize {
                got: pixels.len(),
                expected: width * height,
            });
        }
        Ok(Self {
            pixels,
            width,
            height,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            pixels: vec![value; width * height],
            width,
            height,
        }
    }

    /// Copies a `width` x `height` region at (`x`, `y`) out of a row-major
    /// image that is `stride` pixels wide.
    pub fn crop(image: &[u8], stride: usize, x: usize, y: usize, width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for row in y..y + height {
            let start = row * stride + x;
            pixels.extend_from_slice(&image[start..start + width]);
        }
        Self {
            pixels,
            width,
            height,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.pixels[y * self.width + x]
    }

    fn require(&self, min_w: usize, min_h: usize) -> Result<(), FeatureError> {
        if self.width < min_w || self.height < min_h {
            return Err(FeatureError::PatchTooSmall {
                width: self.width,
                height: self.height,
                min_w,
                min_h,
            });
        }
        Ok(())
    }
}

/// Gray-level histogram over quantized levels. `counts[i]` holds level `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Histogram {
    pub counts: Vec<u32>,
    pub total: u32,
}

impl Histogram {
    pub fn levels(&self) -> usize {
        self.counts.len()
    }

    pub fn probabilities(&self) -> impl Iterator<Item = f64> + '_ {
        let total = self.total as f64;
        self.counts.iter().map(move |&c| c as f64 / total)
    }
}

fn bin_width(levels: u32) -> Result<u32, FeatureError> {
    if levels == 0 || levels > 256 || 256 % levels != 0 {
        return Err(FeatureError::InvalidLevels(levels));
    }
    Ok(256 / levels)
}

pub fn quantize_histogram(patch: &Patch, levels: u32) -> Result<Histogram, FeatureError> {
    let width = bin_width(levels)?;
    let mut counts = vec![0u32; levels as usize];
    for &p in &patch.pixels {
        counts[(p as u32 / width) as usize] += 1;
    }
    Ok(Histogram {
        counts,
        total: patch.pixels.len() as u32,
    })
}

/// Shannon entropy in bits of a count vector. Empty bins contribute nothing.
pub(crate) fn entropy_of_counts(counts: &[u32], total: u32) -> f64 {
    let total = total as f64;
    let mut e = 0.0;
    for &c in counts {
        if c > 0 {
            let p = c as f64 / total;
            e -= p * p.log2();
        }
    }
    e
}

pub fn entropy(hist: &Histogram) -> f64 {
    entropy_of_counts(&hist.counts, hist.total)
}

/// Largest entropy of any fully interior `(2*half_w+1)` x `(2*half_h+1)`
/// window of the patch.
pub fn max_local_entropy(
    patch: &Patch,
    half_w: usize,
    half_h: usize,
    levels: u32,
) -> Result<f64, FeatureError> {
    let bw = bin_width(levels)?;
    let (win_w, win_h) = (2 * half_w + 1, 2 * half_h + 1);
    patch.require(win_w, win_h)?;
    let area = (win_w * win_h) as u32;
    let bin = |x: usize, y: usize| (patch.get(x, y) as u32 / bw) as usize;

    let mut best = 0.0f64;
    let mut counts = vec![0u32; levels as usize];
    for top in 0..=patch.height - win_h {
        counts.iter_mut().for_each(|c| *c = 0);
        for y in top..top + win_h {
            for x in 0..win_w {
                counts[bin(x, y)] += 1;
            }
        }
        best = best.max(entropy_of_counts(&counts, area));
        for left in 1..=patch.width - win_w {
            for y in top..top + win_h {
                counts[bin(left - 1, y)] -= 1;
                counts[bin(left + win_w - 1, y)] += 1;
            }
            best = best.max(entropy_of_counts(&counts, area));
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelId {
    H1,
    H2,
    H3,
    H4,
}

/// 3x3 edge detector. All built-in kernels sum to zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EdgeKernel {
    pub id: KernelId,
    pub coeffs: [[i32; 3]; 3],
}

impl EdgeKernel {
    /// Sobel, responds to intensity change along y (horizontal edges).
    pub const H1: EdgeKernel = EdgeKernel {
        id: KernelId::H1,
        coeffs: [[-1, -2, -1], [0, 0, 0], [1, 2, 1]],
    };
    /// Sobel, responds to intensity change along x (vertical edges).
    pub const H2: EdgeKernel = EdgeKernel {
        id: KernelId::H2,
        coeffs: [[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]],
    };
    /// Left diagonal.
    pub const H3: EdgeKernel = EdgeKernel {
        id: KernelId::H3,
        coeffs: [[0, -1, -1], [1, 0, -1], [1, 1, 0]],
    };
    /// Right diagonal.
    pub const H4: EdgeKernel = EdgeKernel {
        id: KernelId::H4,
        coeffs: [[-1, -1, 0], [-1, 0, 1], [0, 1, 1]],
    };

    pub const ALL: [EdgeKernel; 4] = [Self::H1, Self::H2, Self::H3, Self::H4];

    pub fn coefficient_sum(&self) -> i32 {
        self.coeffs.iter().flatten().sum()
    }
}

/// Fraction of valid 3x3 positions whose absolute kernel response exceeds
/// `threshold`.
pub fn edge_fraction(patch: &Patch, kernel: &EdgeKernel, threshold: i32) -> Result<f64, FeatureError> {
    patch.require(3, 3)?;
    let (w, h) = (patch.width, patch.height);
    let px = &patch.pixels;
    let k = &kernel.coeffs;
    let mut hits = 0usize;
    for y in 0..h - 2 {
        let rows = [&px[y * w..], &px[(y + 1) * w..], &px[(y + 2) * w..]];
        for x in 0..w - 2 {
            let mut r = 0i32;
            for (krow, row) in k.iter().zip(rows) {
                r += krow[0] * row[x] as i32 + krow[1] * row[x + 1] as i32 + krow[2] * row[x + 2] as i32;
            }
            if r.abs() > threshold {
                hits += 1;
            }
        }
    }
    Ok(hits as f64 / ((w - 2) * (h - 2)) as f64)
}

pub fn nonzero_bin_rate(hist: &Histogram) -> f64 {
    hist.counts.iter().filter(|&&c| c > 0).count() as f64 / hist.levels() as f64
}

/// Mean quantized level (1-based) divided by the number of levels.
pub fn first_moment(hist: &Histogram) -> f64 {
    raw_mean(hist) / hist.levels() as f64
}

fn raw_mean(hist: &Histogram) -> f64 {
    hist.probabilities()
        .enumerate()
        .map(|(i, p)| (i + 1) as f64 * p)
        .sum()
}

/// Variance of the quantized level scaled by its upper bound `(L-1)^2 / 4`.
pub fn second_moment_normalized(hist: &Histogram) -> f64 {
    let levels = hist.levels() as f64;
    if levels < 2.0 {
        return 0.0;
    }
    let mean = raw_mean(hist);
    let square: f64 = hist
        .probabilities()
        .enumerate()
        .map(|(i, p)| ((i + 1) as f64).powi(2) * p)
        .sum();
    let m2 = 4.0 / (levels - 1.0).powi(2) * (square - mean * mean);
    // Cancellation can leave a tiny negative residue for single-bin histograms.
    m2.clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureParams {
    pub levels: u32,
    pub half_w: usize,
    pub half_h: usize,
    pub edge_threshold: i32,
}

impl Default for FeatureParams {
    fn default() -> Self {
        Self {
            levels: 32,
            half_w: 2,
            half_h: 2,
            edge_threshold: 30,
        }
    }
}

/// Normalized texture statistics of one block, every component in `[0, 1]`.
///
/// | slot | feature |
/// |------|---------|
/// | 0 | max local entropy / log2(levels) |
/// | 1 | non-zero bin rate |
/// | 2 | normalized second moment |
/// | 3 | edge fraction, right diagonal (h4) |
/// | 4 | edge fraction, left diagonal (h3) |
/// | 5 | first moment |
/// | 6 | edge fraction, vertical edges (h2) |
/// | 7 | edge fraction, horizontal edges (h1) |
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

impl FeatureVector {
    pub const ENTROPY: usize = 0;
    pub const NONZERO_BINS: usize = 1;
    pub const SECOND_MOMENT: usize = 2;
    pub const EDGE_H4: usize = 3;
    pub const EDGE_H3: usize = 4;
    pub const FIRST_MOMENT: usize = 5;
    pub const EDGE_H2: usize = 6;
    pub const EDGE_H1: usize = 7;

    /// `(symbol, meaning)` per slot.
    pub const NAMES: [(&'static str, &'static str); FEATURE_DIM] = [
        ("E", "Max local entropy"),
        ("B", "Non-zero histogram bins"),
        ("M2", "Second central moment"),
        ("G(h4)", "Right diagonal edge"),
        ("G(h3)", "Left diagonal edge"),
        ("M1", "First moment (mean)"),
        ("G(h2)", "Vertical edge"),
        ("G(h1)", "Horizontal edge"),
    ];

    pub fn splat(v: f64) -> Self {
        Self([v; FEATURE_DIM])
    }

    pub fn as_array(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

impl std::ops::Index<usize> for FeatureVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl std::ops::IndexMut<usize> for FeatureVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl From<[f64; FEATURE_DIM]> for FeatureVector {
    fn from(v: [f64; FEATURE_DIM]) -> Self {
        Self(v)
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v:?}")?;
        }
        Ok(())
    }
}

impl FromStr for FeatureVector {
    type Err = FeatureError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let fields: Vec<&str> = s.trim().split(',').collect();
        if fields.len() != FEATURE_DIM {
            return Err(FeatureError::Parse(format!(
                "expected {FEATURE_DIM} values, got {}",
                fields.len()
            )));
        }
        let mut out = [0.0; FEATURE_DIM];
        for (slot, field) in out.iter_mut().zip(fields) {
            *slot = field
                .trim()
                .parse()
                .map_err(|_| FeatureError::Parse(format!("bad number `{field}`")))?;
        }
        Ok(Self(out))
    }
}

pub fn extract_features(patch: &Patch, params: &FeatureParams) -> Result<FeatureVector, FeatureError> {
    patch.require(MIN_PATCH_SIDE, MIN_PATCH_SIDE)?;
    let hist = quantize_histogram(patch, params.levels)?;
    let local = max_local_entropy(patch, params.half_w, params.half_h, params.levels)?;
    let edge = |k: &EdgeKernel| edge_fraction(patch, k, params.edge_threshold);
    let max_entropy = (params.levels as f64).log2();
    let entropy_norm = if max_entropy > 0.0 { local / max_entropy } else { 0.0 };
    Ok(FeatureVector([
        entropy_norm,
        nonzero_bin_rate(&hist),
        second_moment_normalized(&hist),
        edge(&EdgeKernel::H4)?,
        edge(&EdgeKernel::H3)?,
        first_moment(&hist),
        edge(&EdgeKernel::H2)?,
        edge(&EdgeKernel::H1)?,
    ]))
}

fn mean_and_population_variance(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var)
}

/// Fisher's separability `(mu_a - mu_b)^2 / (var_a + var_b)` with population
/// variances. Two constant classes at different values score `+inf`.
pub fn fisher_score(class_a: &[f64], class_b: &[f64]) -> Result<f64, FeatureError> {
    if class_a.len() < 2 || class_b.len() < 2 {
        return Err(FeatureError::TooFewSamples(class_a.len(), class_b.len()));
    }
    let (mu_a, var_a) = mean_and_population_variance(class_a);
    let (mu_b, var_b) = mean_and_population_variance(class_b);
    let spread = var_a + var_b;
    let gap = (mu_a - mu_b).powi(2);
    if spread > 0.0 {
        Ok(gap / spread)
    } else if gap > 0.0 {
        Ok(f64::INFINITY)
    } else {
        Err(FeatureError::Degenerate)
    }
}
