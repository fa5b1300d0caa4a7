use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::autodiff::Scalar;

/// A 2-D point or vector. `x` grows to the right, `y` grows downward.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec2<T = f64> {
    pub x: T,
    pub y: T,
}

impl<T> Vec2<T> {
    pub const fn new(x: T, y: T) -> Self {
        Vec2 { x, y }
    }
}

impl<T: Scalar> Vec2<T> {
    pub fn constant(p: Vec2<f64>) -> Self {
        Vec2::new(T::cst(p.x), T::cst(p.y))
    }

    pub fn value(self) -> Vec2<f64> {
        Vec2::new(self.x.value(), self.y.value())
    }

    pub fn scale(self, k: f64) -> Self {
        Vec2::new(self.x * T::cst(k), self.y * T::cst(k))
    }

    /// L1 norm `|x| + |y|`.
    pub fn l1(self) -> T {
        self.x.abs() + self.y.abs()
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Vec2::new(self.x + rhs.x, self.y + rhs.y)
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, rhs: Self) -> Self {
        Vec2::new(self.x - rhs.x, self.y - rhs.y)
    }
}

impl<T: Scalar> Mul<T> for Vec2<T> {
    type Output = Self;
    fn mul(self, k: T) -> Self {
        Vec2::new(self.x * k, self.y * k)
    }
}
