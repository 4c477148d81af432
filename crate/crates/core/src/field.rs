//! Structured 2-D storage indexed `(i, j)`, `i` circumferential (periodic),
//! `j` wall-normal.

use std::ops::{Index, IndexMut};

use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Field2<T> {
    ni: usize,
    nj: usize,
    data: Vec<T>,
}

impl<T: Copy> Field2<T> {
    pub fn filled(ni: usize, nj: usize, v: T) -> Self {
        Field2 {
            ni,
            nj,
            data: vec![v; ni * nj],
        }
    }

    pub fn from_fn(ni: usize, nj: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(ni * nj);
        for j in 0..nj {
            for i in 0..ni {
                data.push(f(i, j));
            }
        }
        Field2 { ni, nj, data }
    }

    pub fn map<U: Copy>(&self, f: impl Fn(T) -> U) -> Field2<U> {
        Field2 {
            ni: self.ni,
            nj: self.nj,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    #[inline]
    pub fn ni(&self) -> usize {
        self.ni
    }

    #[inline]
    pub fn nj(&self) -> usize {
        self.nj
    }

    #[inline]
    pub fn flat(&self, i: usize, j: usize) -> usize {
        j * self.ni + i
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, j: usize) -> &[T] {
        &self.data[j * self.ni..(j + 1) * self.ni]
    }

    pub fn row_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.ni..(j + 1) * self.ni]
    }

    /// Periodic neighbour index in `i`.
    #[inline]
    pub fn wrap(&self, i: isize) -> usize {
        i.rem_euclid(self.ni as isize) as usize
    }
}

impl<T: Real> Field2<T> {
    /// Value at a possibly out-of-range column. Crossing the seam adds
    /// `shift` per wrap, so periodic-up-to-a-jump data (a channel, or a
    /// potential with a linear far field) can share the O-grid stencils.
    #[inline]
    pub fn periodic(&self, i: isize, j: usize, shift: f64) -> T {
        let n = self.ni as isize;
        if i < 0 {
            self[((i + n) as usize, j)] - shift
        } else if i >= n {
            self[((i - n) as usize, j)] + shift
        } else {
            self[(i as usize, j)]
        }
    }
}

impl Field2<f64> {
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

impl<T> Index<(usize, usize)> for Field2<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[j * self.ni + i]
    }
}

impl<T> IndexMut<(usize, usize)> for Field2<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[j * self.ni + i]
    }
}

/// Periodic index arithmetic on `0..n`.
#[inline]
pub fn ip(i: usize, n: usize) -> usize {
    if i + 1 == n {
        0
    } else {
        i + 1
    }
}

#[inline]
pub fn im(i: usize, n: usize) -> usize {
    if i == 0 {
        n - 1
    } else {
        i - 1
    }
}
