//! Forward-mode differentiation with dual numbers, and a central-difference
//! oracle to check it against.
//!
//! Numeric kernels in this crate are written once, generic over [`Scalar`].
//! Evaluating them on `f64` gives values; evaluating them on [`Dual`] carries
//! a tangent alongside every value. Branches go through [`Scalar::select`],
//! which keeps the tangent of the branch actually taken.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn abs(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    fn select(cond: bool, a: Self, b: Self) -> Self {
        if cond {
            a
        } else {
            b
        }
    }

    /// `max(self, 0)`; the tangent is zero on the clipped side.
    fn relu(self) -> Self {
        Self::select(self.value() > 0.0, self, Self::cst(0.0))
    }

    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        let v = self.value();
        if v < lo {
            Self::cst(lo)
        } else if v > hi {
            Self::cst(hi)
        } else {
            self
        }
    }

    fn square(self) -> Self {
        self * self
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(v: f64) -> Self {
        v
    }
    #[inline]
    fn value(self) -> f64 {
        self
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn exp(self) -> Self {
        f64::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        f64::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// A value with one directional derivative.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual {
    pub value: f64,
    pub tangent: f64,
}

impl Dual {
    pub const fn new(value: f64, tangent: f64) -> Self {
        Dual { value, tangent }
    }

    pub const fn variable(value: f64) -> Self {
        Dual { value, tangent: 1.0 }
    }
}

impl Add for Dual {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Dual::new(self.value + o.value, self.tangent + o.tangent)
    }
}

impl AddAssign for Dual {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.value += o.value;
        self.tangent += o.tangent;
    }
}

impl Sub for Dual {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Dual::new(self.value - o.value, self.tangent - o.tangent)
    }
}

impl Mul for Dual {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Dual::new(
            self.value * o.value,
            self.value * o.tangent + self.tangent * o.value,
        )
    }
}

impl Div for Dual {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        Dual::new(
            self.value * inv,
            (self.tangent * o.value - self.value * o.tangent) * inv * inv,
        )
    }
}

impl Neg for Dual {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Dual::new(-self.value, -self.tangent)
    }
}

impl Scalar for Dual {
    #[inline]
    fn cst(v: f64) -> Self {
        Dual::new(v, 0.0)
    }
    #[inline]
    fn value(self) -> f64 {
        self.value
    }
    /// Subgradient 0 at the kink.
    #[inline]
    fn abs(self) -> Self {
        let s = if self.value > 0.0 {
            1.0
        } else if self.value < 0.0 {
            -1.0
        } else {
            0.0
        };
        Dual::new(self.value.abs(), s * self.tangent)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = self.value.exp();
        Dual::new(e, e * self.tangent)
    }
    #[inline]
    fn ln(self) -> Self {
        Dual::new(self.value.ln(), self.tangent / self.value)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = self.value.sqrt();
        Dual::new(s, self.tangent / (2.0 * s))
    }
}

/// A vector function `R^n -> R^m` that can be evaluated on any [`Scalar`].
pub trait VectorFn {
    fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T>;
}

/// Dense row-major `rows x cols` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Jacobian {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Jacobian {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    /// `max |a - b| / max(1, |b|)` over all entries, with `b` as reference.
    pub fn max_relative_error(&self, reference: &Jacobian) -> f64 {
        assert_eq!((self.rows, self.cols), (reference.rows, reference.cols));
        self.data
            .iter()
            .zip(&reference.data)
            .map(|(a, b)| (a - b).abs() / b.abs().max(1.0))
            .fold(0.0, f64::max)
    }
}

/// Full Jacobian by seeding each input in turn.
pub fn jacobian_forward<F: VectorFn>(f: &F, x: &[f64]) -> Jacobian {
    let cols: Vec<usize> = (0..x.len()).collect();
    jacobian_forward_columns(f, x, &cols)
}

/// Jacobian restricted to the listed input columns, in the listed order.
pub fn jacobian_forward_columns<F: VectorFn>(f: &F, x: &[f64], cols: &[usize]) -> Jacobian {
    let mut seeded: Vec<Dual> = x.iter().map(|&v| Dual::new(v, 0.0)).collect();
    let mut jac: Option<Jacobian> = None;
    for (k, &c) in cols.iter().enumerate() {
        seeded[c].tangent = 1.0;
        let out = f.eval(&seeded);
        seeded[c].tangent = 0.0;
        let j = jac.get_or_insert_with(|| Jacobian::zeros(out.len(), cols.len()));
        for (r, d) in out.iter().enumerate() {
            j.set(r, k, d.tangent);
        }
    }
    jac.unwrap_or_else(|| Jacobian::zeros(f.eval(x).len(), 0))
}

/// Central differences `(f(x + h e_j) - f(x - h e_j)) / 2h`.
pub fn jacobian_fd<F: VectorFn>(f: &F, x: &[f64], h: f64) -> Jacobian {
    let cols: Vec<usize> = (0..x.len()).collect();
    jacobian_fd_columns(f, x, &cols, h)
}

pub fn jacobian_fd_columns<F: VectorFn>(f: &F, x: &[f64], cols: &[usize], h: f64) -> Jacobian {
    let mut probe = x.to_vec();
    let m = f.eval(x).len();
    let mut jac = Jacobian::zeros(m, cols.len());
    for (k, &c) in cols.iter().enumerate() {
        probe[c] = x[c] + h;
        let plus = f.eval(&probe);
        probe[c] = x[c] - h;
        let minus = f.eval(&probe);
        probe[c] = x[c];
        for r in 0..m {
            jac.set(r, k, (plus[r] - minus[r]) / (2.0 * h));
        }
    }
    jac
}

pub const DEFAULT_FD_STEP: f64 = 1e-4;

#[cfg(test)]
mod tests {
    use super::*;

    struct Square;
    impl VectorFn for Square {
        fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            vec![x[0] * x[0]]
        }
    }

    struct Mixed;
    impl VectorFn for Mixed {
        fn eval<T: Scalar>(&self, x: &[T]) -> Vec<T> {
            vec![
                x[0] * x[1].exp() / (x[2] + T::cst(3.0)),
                (x[0] * x[0] + x[1].square()).sqrt() - x[2].ln(),
            ]
        }
    }

    #[test]
    fn square_at_three() {
        let j = jacobian_forward(&Square, &[3.0]);
        assert_eq!(j.get(0, 0), 6.0);
        let fd = jacobian_fd(&Square, &[3.0], DEFAULT_FD_STEP);
        assert!((fd.get(0, 0) - 6.0).abs() < 1e-7);
    }

    #[test]
    fn mixed_function_agrees_with_differences() {
        let x = [0.7, -0.3, 1.9];
        let fwd = jacobian_forward(&Mixed, &x);
        let fd = jacobian_fd(&Mixed, &x, DEFAULT_FD_STEP);
        assert!(fwd.max_relative_error(&fd) < 1e-7);
    }

    #[test]
    fn select_keeps_taken_branch_tangent() {
        let a = Dual::new(1.0, 2.0);
        let b = Dual::new(5.0, -3.0);
        assert_eq!(Dual::select(true, a, b).tangent, 2.0);
        assert_eq!(Dual::select(false, a, b).tangent, -3.0);
        assert_eq!(Dual::new(-1.0, 4.0).relu(), Dual::cst(0.0));
        assert_eq!(Dual::new(-1.0, 4.0).abs().tangent, -4.0);
        assert_eq!(Dual::new(0.0, 4.0).abs().tangent, 0.0);
    }

    #[test]
    fn column_subset_matches_full() {
        let x = [0.7, -0.3, 1.9];
        let full = jacobian_forward(&Mixed, &x);
        let sub = jacobian_forward_columns(&Mixed, &x, &[2, 0]);
        for r in 0..2 {
            assert_eq!(sub.get(r, 0), full.get(r, 2));
            assert_eq!(sub.get(r, 1), full.get(r, 0));
        }
    }
}
