//! Spectral fields, pair states and the norms built on them.

use crate::error::{validation, Result};
use crate::fft;
use crate::grid::{Projection, TorusGrid};
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// One complex scalar field stored as Fourier coefficients in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct Field {
    grid: TorusGrid,
    coeffs: Vec<C64>,
}

impl Field {
    pub fn zeros(grid: TorusGrid) -> Self {
        Self { grid, coeffs: vec![ZERO; grid.len()] }
    }

    pub fn from_coeffs(grid: TorusGrid, coeffs: Vec<C64>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return validation(format!(
                "expected {} coefficients, got {}",
                grid.len(),
                coeffs.len()
            ));
        }
        Ok(Self { grid, coeffs })
    }

    /// Forward transform of grid values.
    pub fn from_values(grid: TorusGrid, mut values: Vec<C64>) -> Self {
        assert_eq!(values.len(), grid.len(), "value count does not match grid");
        fft::forward(grid.dim(), grid.n(), &mut values);
        Self { grid, coeffs: values }
    }

    /// Sample `f(x)` on the grid and transform.
    pub fn from_fn(grid: TorusGrid, f: impl Fn([f64; 2]) -> C64) -> Self {
        let v = (0..grid.len()).map(|i| f(grid.point(i))).collect();
        Self::from_values(grid, v)
    }

    /// Single Fourier mode `amp · e^{ik·x}`.
    pub fn mode(grid: TorusGrid, k: [i64; 2], amp: C64) -> Result<Self> {
        let Some(i) = grid.index(k) else {
            return validation(format!("frequency {k:?} outside the lattice"));
        };
        let mut f = Self::zeros(grid);
        f.coeffs[i] = amp;
        Ok(f)
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [C64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<C64> {
        self.coeffs
    }

    /// Coefficient at a dual lattice point (zero outside the lattice).
    pub fn coeff(&self, k: [i64; 2]) -> C64 {
        self.grid.index(k).map_or(ZERO, |i| self.coeffs[i])
    }

    /// Grid values by inverse transform.
    pub fn values(&self) -> Vec<C64> {
        let mut v = self.coeffs.clone();
        fft::inverse(self.grid.dim(), self.grid.n(), &mut v);
        v
    }

    /// Pointwise complex conjugate, `(ū)^(k) = conj(û(−k))` with wrap-around at Nyquist.
    pub fn conj(&self) -> Self {
        let g = self.grid;
        let c = (0..g.len()).map(|i| self.coeffs[g.neg_index(i)].conj()).collect();
        Self { grid: g, coeffs: c }
    }

    /// Hermitian symmetry `û(−k) = conj(û(k))` within `tol` (real-valued fields).
    pub fn is_real(&self, tol: f64) -> bool {
        let g = self.grid;
        (0..g.len()).all(|i| (self.coeffs[g.neg_index(i)] - self.coeffs[i].conj()).norm() <= tol)
    }

    /// Replace by the real part of the represented function.
    pub fn real_part(&self) -> Self {
        let c = self.conj();
        let mut out = self.clone();
        for (o, b) in out.coeffs.iter_mut().zip(&c.coeffs) {
            *o = (*o + *b) * 0.5;
        }
        out
    }

    pub fn check_same_grid(&self, other: &Field) -> Result<()> {
        if self.grid != other.grid {
            return validation("grid mismatch");
        }
        Ok(())
    }

    pub fn scale(&self, s: C64) -> Self {
        Self { grid: self.grid, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn scale_real(&self, s: f64) -> Self {
        Self { grid: self.grid, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    /// `self += a · x`.
    pub fn axpy(&mut self, a: C64, x: &Field) {
        debug_assert_eq!(self.grid, x.grid);
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += a * v;
        }
    }

    pub fn axpy_real(&mut self, a: f64, x: &Field) {
        debug_assert_eq!(self.grid, x.grid);
        for (s, v) in self.coeffs.iter_mut().zip(&x.coeffs) {
            *s += v * a;
        }
    }

    pub fn add(&self, x: &Field) -> Self {
        let mut o = self.clone();
        o.axpy_real(1.0, x);
        o
    }

    pub fn sub(&self, x: &Field) -> Self {
        let mut o = self.clone();
        o.axpy_real(-1.0, x);
        o
    }

    /// Multiply every coefficient by `m(k)`.
    pub fn multiplier(&self, m: impl Fn([i64; 2]) -> C64) -> Self {
        let g = self.grid;
        let c = self.coeffs.iter().enumerate().map(|(i, v)| v * m(g.freq(i))).collect();
        Self { grid: g, coeffs: c }
    }

    /// Spectral partial derivative along `axis`.
    pub fn derivative(&self, axis: usize) -> Self {
        self.multiplier(|k| C64::new(0.0, k[axis] as f64))
    }

    pub fn laplacian(&self) -> Self {
        self.multiplier(|k| C64::new(-((k[0] * k[0] + k[1] * k[1]) as f64), 0.0))
    }

    /// Zero the modes outside a projection.
    pub fn project(&self, p: Projection) -> Self {
        let g = self.grid;
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, v)| if p.keeps(&g, i) { *v } else { ZERO })
            .collect();
        Self { grid: g, coeffs: c }
    }

    /// Keep modes with `|k| ≤ radius`.
    pub fn filter_ball(&self, radius: f64) -> Self {
        let g = self.grid;
        let r2 = radius * radius;
        let c = self
            .coeffs
            .iter()
            .enumerate()
            .map(|(i, v)| if g.freq_sq(i) <= r2 { *v } else { ZERO })
            .collect();
        Self { grid: g, coeffs: c }
    }

    /// Pointwise product computed on the grid (aliased).
    pub fn mul(&self, other: &Field) -> Self {
        let a = self.values();
        let b = other.values();
        Self::from_values(self.grid, a.iter().zip(&b).map(|(x, y)| x * y).collect())
    }

    /// `Σ_j û_j conj(v̂_j)`, the L² product for the normalized measure.
    pub fn inner(&self, other: &Field) -> C64 {
        self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a * b.conj()).sum()
    }

    /// `Re Σ_j û_j conj(v̂_j)`.
    pub fn re_inner(&self, other: &Field) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a.re * b.re + a.im * b.im)
            .sum()
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }
}

/// `(Σ_j ⟨j⟩^{2s} |û_j|²)^{1/2}`.
pub fn sobolev_norm(f: &Field, s: f64) -> f64 {
    let g = f.grid();
    f.coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| (1.0 + g.freq_sq(i)).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Semiclassical norm with weights `(1 + h²|j|²)^{s/2}`.
pub fn semiclassical_norm(f: &Field, s: f64, h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return validation(format!("semiclassical parameter must be positive, got {h}"));
    }
    let g = f.grid();
    let h2 = h * h;
    Ok(f.coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| (1.0 + h2 * g.freq_sq(i)).powf(s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

/// Littlewood–Paley band `2^b ≤ ⟨k⟩ < 2^{b+1}`; band 0 also keeps `k = 0`.
pub fn littlewood_paley_project(f: &Field, band: u32) -> Field {
    let g = f.grid();
    let mut out = Field::zeros(g);
    for (i, c) in f.coeffs().iter().enumerate() {
        if lp_band(g.bracket(i)) == band {
            out.coeffs_mut()[i] = *c;
        }
    }
    out
}

/// Band index of a bracket value `⟨k⟩ ≥ 1`.
pub fn lp_band(bracket: f64) -> u32 {
    // ⟨0⟩ = 1 falls in [1,2) already; floor(log2) is exact for the integer-squared
    // brackets that occur, compare against powers of two to avoid rounding at edges
    let mut b = 0u32;
    while bracket >= (2.0f64).powi(b as i32 + 1) {
        b += 1;
    }
    b
}

/// Largest band index present on a grid.
pub fn lp_max_band(grid: &TorusGrid) -> u32 {
    (0..grid.len()).map(|i| lp_band(grid.bracket(i))).max().unwrap_or(0)
}

/// `U = (u, ū)`; only `u` is stored.
#[derive(Clone, Debug, PartialEq)]
pub struct PairState(pub Field);

impl PairState {
    pub fn new(u: Field) -> Self {
        Self(u)
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self(Field::zeros(grid))
    }

    pub fn u(&self) -> &Field {
        &self.0
    }

    /// Both components, for tests that check the conjugation invariant.
    pub fn materialize(&self) -> (Field, Field) {
        (self.0.clone(), self.0.conj())
    }

    /// `H^s` pair norm, `√2 ‖u‖_{H^s}`.
    pub fn norm(&self, s: f64) -> f64 {
        std::f64::consts::SQRT_2 * sobolev_norm(&self.0, s)
    }
}

/// `(U, V)_{H^0} = ∫ u v̄ + ∫ v ū = 2 Re⟨u, v⟩`.
pub fn pair_scalar_product_h0(u: &PairState, v: &PairState) -> Result<f64> {
    u.0.check_same_grid(&v.0)?;
    Ok(2.0 * u.0.re_inner(&v.0))
}

/// Same pairing on bare fields (hot paths skip the grid check).
#[inline]
pub fn pair_dot(u: &Field, v: &Field) -> f64 {
    2.0 * u.re_inner(v)
}
