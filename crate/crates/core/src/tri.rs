//! Packed lower-triangular storage for tables indexed by `0 <= j <= i <= m`.

use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct TriMatrix<S> {
    m: usize,
    data: Vec<S>,
}

#[inline]
fn offset(i: usize) -> usize {
    i * (i + 1) / 2
}

impl<S: Real> TriMatrix<S> {
    /// Table over rows `0..=m`.
    pub fn zeros(m: usize) -> Self {
        TriMatrix {
            m,
            data: vec![S::zero(); offset(m + 1)],
        }
    }

    pub fn from_fn(m: usize, mut f: impl FnMut(usize, usize) -> S) -> Self {
        let mut data = Vec::with_capacity(offset(m + 1));
        for i in 0..=m {
            for j in 0..=i {
                data.push(f(i, j));
            }
        }
        TriMatrix { m, data }
    }

    /// Index of the last row.
    pub fn size(&self) -> usize {
        self.m
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> S {
        debug_assert!(j <= i && i <= self.m);
        self.data[offset(i) + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: S) {
        debug_assert!(j <= i && i <= self.m);
        self.data[offset(i) + j] = v;
    }

    /// Entries `(i, 0..=i)`.
    pub fn row(&self, i: usize) -> &[S] {
        &self.data[offset(i)..offset(i + 1)]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [S] {
        &mut self.data[offset(i)..offset(i + 1)]
    }

    pub fn values(&self) -> &[S] {
        &self.data
    }

    pub fn max_abs(&self) -> S {
        crate::scalar::sup_abs(&self.data)
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Self {
        TriMatrix {
            m: self.m,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest absolute entrywise difference.
    pub fn max_diff(&self, other: &Self) -> S {
        assert_eq!(self.m, other.m, "triangle sizes differ");
        self.data
            .iter()
            .zip(&other.data)
            .fold(S::zero(), |acc, (&a, &b)| acc.max((a - b).abs()))
    }
}
