//! Heatmap targets and landmark extraction.
//!
//! Every expectation operator first suppresses negative activations with
//! `max(H, 0)` and then returns a weighted centroid. The operators are
//! generic over [`Scalar`] so the same code yields values and derivatives.

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;
use crate::vec2::Vec2;

/// Denominator regularizer for all centroids.
pub const EPS: f64 = 1e-8;

/// Half-width of the coarse-to-fine refinement window.
pub const DEFAULT_WINDOW_RADIUS: usize = 3;

/// Output resolution of a heatmap relative to the 224 px image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scale {
    S56,
    S112,
    S224,
}

impl Scale {
    pub const ALL: [Scale; 3] = [Scale::S56, Scale::S112, Scale::S224];

    /// Nominal side length on the reference 224 px image.
    pub fn size(self) -> usize {
        match self {
            Scale::S56 => 56,
            Scale::S112 => 112,
            Scale::S224 => 224,
        }
    }

    /// Factor `a` mapping heatmap coordinates to image coordinates.
    pub fn factor(self) -> usize {
        match self {
            Scale::S56 => 4,
            Scale::S112 => 2,
            Scale::S224 => 1,
        }
    }

    /// Operator used for the `B` landmark at this scale.
    pub fn operator(self) -> ExpectationOperator {
        match self {
            Scale::S56 => ExpectationOperator::CoarseToFine,
            Scale::S112 => ExpectationOperator::Biquadratic,
            Scale::S224 => ExpectationOperator::Bicubic,
        }
    }

    /// Default target width: 2 px at full resolution, shrinking with the grid.
    pub fn default_sigma_t(self) -> f64 {
        2.0 * self.size() as f64 / 224.0
    }
}

impl std::fmt::Display for Scale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.size())
    }
}

/// Row-major activation grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap<T = f64> {
    pub width: usize,
    pub height: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> Heatmap<T> {
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Self {
        assert_eq!(values.len(), width * height, "heatmap buffer size");
        Heatmap {
            width,
            height,
            values,
        }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Heatmap::new(width, height, vec![T::cst(0.0); width * height])
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn to_values(&self) -> Heatmap<f64> {
        Heatmap::new(
            self.width,
            self.height,
            self.values.iter().map(|v| v.value()).collect(),
        )
    }

    fn rectified(&self) -> Vec<T> {
        self.values.iter().map(|v| v.relu()).collect()
    }
}

/// Unit-peak isotropic Gaussian centered on `center`.
pub fn gaussian_target(center: Vec2, width: usize, height: usize, sigma_t: f64) -> Heatmap {
    let inv = 1.0 / (2.0 * sigma_t * sigma_t);
    let mut values = Vec::with_capacity(width * height);
    for i in 0..height {
        let dy = i as f64 - center.y;
        for j in 0..width {
            let dx = j as f64 - center.x;
            values.push((-(dx * dx + dy * dy) * inv).exp());
        }
    }
    Heatmap::new(width, height, values)
}

/// `(col, row)` of the largest value; ties go to the smallest flattened index.
pub fn hard_argmax<T: Scalar>(h: &Heatmap<T>) -> (usize, usize) {
    let mut best = 0;
    for (k, v) in h.values.iter().enumerate() {
        if v.value() > h.values[best].value() {
            best = k;
        }
    }
    (best % h.width, best / h.width)
}

pub fn hard_argmax_landmark<T: Scalar>(h: &Heatmap<T>) -> Vec2 {
    let (x, y) = hard_argmax(h);
    Vec2::new(x as f64, y as f64)
}

/// Weighted centroid of `rect` over the rectangle `[c0, c1) x [r0, r1)`,
/// with per-pixel weights from `weight(row, col)`.
fn windowed_centroid<T: Scalar>(
    rect: &[T],
    width: usize,
    rows: (usize, usize),
    cols: (usize, usize),
    weight: impl Fn(usize, usize) -> T,
) -> Vec2<T> {
    let zero = T::cst(0.0);
    let (mut sx, mut sy, mut total) = (zero, zero, zero);
    for i in rows.0..rows.1 {
        let fi = T::cst(i as f64);
        for j in cols.0..cols.1 {
            let m = weight(i, j) * rect[i * width + j];
            sx += m * T::cst(j as f64);
            sy += m * fi;
            total += m;
        }
    }
    let denom = total + T::cst(EPS);
    Vec2::new(sx / denom, sy / denom)
}

fn centroid_of<T: Scalar>(rect: &[T], width: usize, height: usize) -> Vec2<T> {
    windowed_centroid(rect, width, (0, height), (0, width), |_, _| T::cst(1.0))
}

/// Global weighted centroid.
pub fn bilinear_expectation<T: Scalar>(h: &Heatmap<T>) -> Vec2<T> {
    centroid_of(&h.rectified(), h.width, h.height)
}

/// Centroid restricted to a `(2 r_w + 1)²` window around the hard argmax,
/// clipped at the grid border. The window position carries no derivative.
pub fn coarse_to_fine_expectation<T: Scalar>(h: &Heatmap<T>, r_w: usize) -> Vec2<T> {
    let rect = h.rectified();
    let (xc, yc) = hard_argmax(h);
    let rows = (yc.saturating_sub(r_w), (yc + r_w + 1).min(h.height));
    let cols = (xc.saturating_sub(r_w), (xc + r_w + 1).min(h.width));
    windowed_centroid(&rect, h.width, rows, cols, |_, _| T::cst(1.0))
}

/// Index range `[lo, hi)` of grid cells within `radius` of `c`.
fn support(c: f64, radius: f64, n: usize) -> (usize, usize) {
    let lo = (c - radius).floor().max(0.0) as usize;
    let hi = ((c + radius).ceil() + 1.0).clamp(0.0, n as f64) as usize;
    (lo.min(n), hi)
}

/// Second pass weights `max(1 - d²/4, 0)` around the global centroid.
pub fn biquadratic_weight<T: Scalar>(dx: T, dy: T) -> T {
    (T::cst(1.0) - (dx * dx + dy * dy) / T::cst(4.0)).relu()
}

/// Separable weight `max(1 - |d|³/8, 0)` per axis.
pub fn cubic_weight<T: Scalar>(d: T) -> T {
    let a = d.abs();
    (T::cst(1.0) - a * a * a / T::cst(8.0)).relu()
}

pub fn biquadratic_expectation<T: Scalar>(h: &Heatmap<T>) -> Vec2<T> {
    let rect = h.rectified();
    let c = centroid_of(&rect, h.width, h.height);
    let cv = c.value();
    // Weights vanish for |d| >= 2, so only the surrounding 5x5 block matters.
    let rows = support(cv.y, 2.0, h.height);
    let cols = support(cv.x, 2.0, h.width);
    windowed_centroid(&rect, h.width, rows, cols, |i, j| {
        biquadratic_weight(T::cst(j as f64) - c.x, T::cst(i as f64) - c.y)
    })
}

pub fn bicubic_expectation<T: Scalar>(h: &Heatmap<T>) -> Vec2<T> {
    let rect = h.rectified();
    let c = centroid_of(&rect, h.width, h.height);
    let cv = c.value();
    let rows = support(cv.y, 2.0, h.height);
    let cols = support(cv.x, 2.0, h.width);
    windowed_centroid(&rect, h.width, rows, cols, |i, j| {
        cubic_weight(T::cst(j as f64) - c.x) * cubic_weight(T::cst(i as f64) - c.y)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectationOperator {
    Bilinear,
    CoarseToFine,
    Biquadratic,
    Bicubic,
}

impl ExpectationOperator {
    pub const ALL: [ExpectationOperator; 4] = [
        ExpectationOperator::Bilinear,
        ExpectationOperator::CoarseToFine,
        ExpectationOperator::Biquadratic,
        ExpectationOperator::Bicubic,
    ];

    pub fn apply<T: Scalar>(self, h: &Heatmap<T>) -> Vec2<T> {
        match self {
            ExpectationOperator::Bilinear => bilinear_expectation(h),
            ExpectationOperator::CoarseToFine => {
                coarse_to_fine_expectation(h, DEFAULT_WINDOW_RADIUS)
            }
            ExpectationOperator::Biquadratic => biquadratic_expectation(h),
            ExpectationOperator::Bicubic => bicubic_expectation(h),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ExpectationOperator::Bilinear => "bilinear",
            ExpectationOperator::CoarseToFine => "coarse-to-fine",
            ExpectationOperator::Biquadratic => "biquadratic",
            ExpectationOperator::Bicubic => "bicubic",
        }
    }
}
