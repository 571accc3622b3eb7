//! Fixed-dimension Euclidean vectors.
//!
//! Positions, velocities, and accelerations are all `Vector<D>` with `D` = 2
//! or 3. Keeping the dimension in the type lets the simulation, costs, and
//! solvers share one implementation across the planar and spatial models.

use core::iter::Sum;
use core::ops::{Add, AddAssign, Div, Index, IndexMut, Mul, Neg, Sub, SubAssign};

#[allow(unused_imports)]
use num_traits::Float;

/// A `D`-dimensional vector of `f64` components.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Vector<const D: usize>(pub [f64; D]);

impl<const D: usize> Default for Vector<D> {
    fn default() -> Self {
        Self::ZERO
    }
}

impl<const D: usize> Vector<D> {
    pub const ZERO: Self = Vector([0.0; D]);

    /// Unit vector along the first axis.
    pub fn unit_x() -> Self {
        let mut v = [0.0; D];
        v[0] = 1.0;
        Vector(v)
    }

    pub fn dot(&self, other: &Self) -> f64 {
        let mut acc = 0.0;
        for i in 0..D {
            acc += self.0[i] * other.0[i];
        }
        acc
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        (*self - *other).norm()
    }

    /// Rescales to magnitude `bound` when `|self| > bound`; direction is
    /// preserved and vectors already within the bound pass through unchanged.
    pub fn clamp_norm(&self, bound: f64) -> Self {
        debug_assert!(bound > 0.0);
        let n = self.norm();
        if n <= bound {
            *self
        } else {
            *self * (bound / n)
        }
    }

    /// Unit vector in the same direction, or zero for the zero vector.
    pub fn unit_or_zero(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            Self::ZERO
        } else {
            *self / n
        }
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl<const D: usize> From<[f64; D]> for Vector<D> {
    fn from(v: [f64; D]) -> Self {
        Vector(v)
    }
}

impl<const D: usize> Index<usize> for Vector<D> {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

impl<const D: usize> IndexMut<usize> for Vector<D> {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.0[i]
    }
}

impl<const D: usize> Add for Vector<D> {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl<const D: usize> AddAssign for Vector<D> {
    fn add_assign(&mut self, rhs: Self) {
        for i in 0..D {
            self.0[i] += rhs.0[i];
        }
    }
}

impl<const D: usize> Sub for Vector<D> {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl<const D: usize> SubAssign for Vector<D> {
    fn sub_assign(&mut self, rhs: Self) {
        for i in 0..D {
            self.0[i] -= rhs.0[i];
        }
    }
}

impl<const D: usize> Mul<f64> for Vector<D> {
    type Output = Self;
    fn mul(mut self, rhs: f64) -> Self {
        for c in self.0.iter_mut() {
            *c *= rhs;
        }
        self
    }
}

impl<const D: usize> Div<f64> for Vector<D> {
    type Output = Self;
    fn div(self, rhs: f64) -> Self {
        self * (1.0 / rhs)
    }
}

impl<const D: usize> Neg for Vector<D> {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

impl<const D: usize> Sum for Vector<D> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |acc, v| acc + v)
    }
}
