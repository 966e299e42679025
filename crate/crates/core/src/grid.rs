//! Uniform grids on `(R/2πZ)^d` and their dual integer lattices.

use crate::error::{validation, Result};
use std::f64::consts::PI;

/// Uniform `N^d` grid, `d ∈ {1,2}`, `N` even and at least 8.
///
/// Coefficients are stored in FFT order: index `i` along an axis carries frequency `i`
/// for `i < N/2` and `i − N` otherwise, so every component lies in `[−N/2, N/2)`.
/// For `d = 2` the flat index is `i0 * N + i1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return validation(format!("dimension must be 1 or 2, got {dim}"));
        }
        if n < 8 || !n.is_multiple_of(2) {
            return validation(format!("N must be even and >= 8, got {n}"));
        }
        Ok(Self { dim, n })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of grid points, equal to the number of dual lattice points.
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.n as f64
    }

    #[inline]
    pub fn axis_freq(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Dual lattice point of a flat index; the unused component is 0 when `d = 1`.
    #[inline]
    pub fn freq(&self, idx: usize) -> [i64; 2] {
        if self.dim == 1 {
            [self.axis_freq(idx), 0]
        } else {
            [self.axis_freq(idx / self.n), self.axis_freq(idx % self.n)]
        }
    }

    /// Flat index of a frequency in `[−N/2, N/2)^d`, or `None` outside the lattice.
    #[inline]
    pub fn index(&self, f: [i64; 2]) -> Option<usize> {
        let h = (self.n / 2) as i64;
        let ok = |c: i64| (-h..h).contains(&c);
        if !ok(f[0]) || (self.dim == 2 && !ok(f[1])) || (self.dim == 1 && f[1] != 0) {
            return None;
        }
        Some(self.wrap_index(f))
    }

    /// Flat index of a frequency reduced modulo `N` (aliasing).
    #[inline]
    pub fn wrap_index(&self, f: [i64; 2]) -> usize {
        let n = self.n as i64;
        let a = f[0].rem_euclid(n) as usize;
        if self.dim == 1 {
            a
        } else {
            a * self.n + f[1].rem_euclid(n) as usize
        }
    }

    /// Index of `−k` modulo `N`; maps the Nyquist component to itself.
    #[inline]
    pub fn neg_index(&self, idx: usize) -> usize {
        let f = self.freq(idx);
        self.wrap_index([-f[0], -f[1]])
    }

    #[inline]
    pub fn freq_sq(&self, idx: usize) -> f64 {
        let f = self.freq(idx);
        (f[0] * f[0] + f[1] * f[1]) as f64
    }

    /// Japanese bracket `⟨j⟩ = √(1+|j|²)`.
    #[inline]
    pub fn bracket(&self, idx: usize) -> f64 {
        (1.0 + self.freq_sq(idx)).sqrt()
    }

    /// True when some component equals `−N/2`.
    #[inline]
    pub fn is_nyquist(&self, idx: usize) -> bool {
        let h = -((self.n / 2) as i64);
        let f = self.freq(idx);
        f[0] == h || (self.dim == 2 && f[1] == h)
    }

    /// Spatial coordinates of a grid point, each in `[0, 2π)`.
    pub fn point(&self, idx: usize) -> [f64; 2] {
        let h = self.spacing();
        if self.dim == 1 {
            [idx as f64 * h, 0.0]
        } else {
            [(idx / self.n) as f64 * h, (idx % self.n) as f64 * h]
        }
    }

    /// Position of flat index `idx` when the lattice is listed in ascending frequency
    /// order (row-major over `[−N/2, N/2)^d`), the order used by field dumps.
    pub fn sorted_position(&self, idx: usize) -> usize {
        let h = (self.n / 2) as i64;
        let f = self.freq(idx);
        let a = (f[0] + h) as usize;
        if self.dim == 1 {
            a
        } else {
            a * self.n + (f[1] + h) as usize
        }
    }
}

/// Subset of the dual lattice on which an evolution acts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Projection {
    /// Every lattice point.
    Full,
    /// Drop modes with a Nyquist component.
    Nyquist,
    /// 2/3-rule: keep `|k_l| ≤ N/3` in every component.
    TwoThirds,
}

impl Projection {
    #[inline]
    pub fn keeps(&self, grid: &TorusGrid, idx: usize) -> bool {
        match self {
            Projection::Full => true,
            Projection::Nyquist => !grid.is_nyquist(idx),
            Projection::TwoThirds => {
                let f = grid.freq(idx);
                let c = (grid.n() / 3) as i64;
                f[0].abs() <= c && f[1].abs() <= c
            }
        }
    }

    /// Flat indices kept by the projection, ascending.
    pub fn indices(&self, grid: &TorusGrid) -> Vec<usize> {
        (0..grid.len()).filter(|&i| self.keeps(grid, i)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_sizes() {
        assert!(TorusGrid::new(2, 6).is_err());
        assert!(TorusGrid::new(2, 9).is_err());
        assert!(TorusGrid::new(3, 8).is_err());
        assert!(TorusGrid::new(1, 8).is_ok());
    }

    #[test]
    fn index_roundtrip_and_range() {
        let g = TorusGrid::new(2, 8).unwrap();
        for idx in 0..g.len() {
            let f = g.freq(idx);
            assert!(f.iter().all(|&c| (-4..4).contains(&c)));
            assert_eq!(g.index(f), Some(idx));
            assert!(g.bracket(idx) >= 1.0);
        }
        assert_eq!(g.index([4, 0]), None);
        assert_eq!(g.freq(g.neg_index(g.index([-4, 1]).unwrap())), [-4, -1]);
    }

    #[test]
    fn sorted_positions_form_a_permutation() {
        let g = TorusGrid::new(2, 10).unwrap();
        let mut seen = vec![false; g.len()];
        for i in 0..g.len() {
            seen[g.sorted_position(i)] = true;
        }
        assert!(seen.iter().all(|&s| s));
    }
}
