//! Symbols `a(x, ξ)` on the torus: sums of separable terms `c(x)·p(ξ)` with polynomial
//! `p`, plus an optional tabulated part on the half-integer dual grid.

use crate::error::{validation, Result};
use crate::fft;
use crate::field::Field;
use crate::grid::TorusGrid;
use crate::C64;
use std::sync::Arc;

/// Real polynomial in `ξ = (ξ₁, ξ₂)`, stored as monomials `coef · ξ₁^a ξ₂^b`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct XiPoly {
    terms: Vec<([u32; 2], f64)>,
}

impl XiPoly {
    pub fn from_terms(terms: Vec<([u32; 2], f64)>) -> Self {
        let mut p = Self { terms };
        p.normalize();
        p
    }

    pub fn one() -> Self {
        Self::from_terms(vec![([0, 0], 1.0)])
    }

    /// `ξ_axis`.
    pub fn xi(axis: usize) -> Self {
        let mut e = [0, 0];
        e[axis] = 1;
        Self::from_terms(vec![(e, 1.0)])
    }

    /// `|ξ|²` in dimension `dim`.
    pub fn xi_sq(dim: usize) -> Self {
        let mut t = vec![([2, 0], 1.0)];
        if dim == 2 {
            t.push(([0, 2], 1.0));
        }
        Self::from_terms(t)
    }

    fn normalize(&mut self) {
        self.terms.sort_by_key(|t| t.0);
        let mut out: Vec<([u32; 2], f64)> = Vec::with_capacity(self.terms.len());
        for (e, c) in self.terms.drain(..) {
            match out.last_mut() {
                Some(last) if last.0 == e => last.1 += c,
                _ => out.push((e, c)),
            }
        }
        out.retain(|t| t.1 != 0.0);
        self.terms = out;
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Polynomial degree, the order of the symbol part.
    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.0[0] + t.0[1]).max().unwrap_or(0)
    }

    #[inline]
    pub fn eval(&self, xi: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(e, c)| c * xi[0].powi(e[0] as i32) * xi[1].powi(e[1] as i32))
            .sum()
    }

    pub fn derivative(&self, axis: usize) -> Self {
        let t = self
            .terms
            .iter()
            .filter(|(e, _)| e[axis] > 0)
            .map(|(e, c)| {
                let mut e2 = *e;
                e2[axis] -= 1;
                (e2, c * e[axis] as f64)
            })
            .collect();
        Self::from_terms(t)
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut t = Vec::new();
        for (e1, c1) in &self.terms {
            for (e2, c2) in &other.terms {
                t.push(([e1[0] + e2[0], e1[1] + e2[1]], c1 * c2));
            }
        }
        Self::from_terms(t)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_terms(self.terms.iter().map(|(e, c)| (*e, c * s)).collect())
    }
}

/// One separable term `c(x)·p(ξ)`.
#[derive(Clone, Debug)]
pub struct SepTerm {
    pub coeff: Field,
    pub poly: XiPoly,
}

/// Fourier coefficients in `x` of `a(·, ξ)` at every half-integer `ξ = p/2`,
/// `p ∈ [−N, N)^d`, stored densely.
#[derive(Debug)]
pub struct SymbolTable {
    grid: TorusGrid,
    data: Vec<C64>,
}

impl SymbolTable {
    /// Tabulate `a(x, ξ)` by sampling in `x` and transforming, for each half-integer `ξ`.
    pub fn build(grid: TorusGrid, a: impl Fn([f64; 2], [f64; 2]) -> C64) -> Result<Self> {
        let side = 2 * grid.n();
        let npts = side.pow(grid.dim() as u32);
        if npts * grid.len() > 1 << 24 {
            return validation("symbol table too large for this grid");
        }
        let mut data = Vec::with_capacity(npts * grid.len());
        let xs: Vec<[f64; 2]> = (0..grid.len()).map(|i| grid.point(i)).collect();
        for p in 0..npts {
            let xi = Self::xi_of(grid, p);
            let mut v: Vec<C64> = xs.iter().map(|&x| a(x, xi)).collect();
            fft::forward(grid.dim(), grid.n(), &mut v);
            data.extend_from_slice(&v);
        }
        Ok(Self { grid, data })
    }

    fn xi_of(grid: TorusGrid, p: usize) -> [f64; 2] {
        let side = 2 * grid.n();
        let n = grid.n() as f64;
        if grid.dim() == 1 {
            [(p as f64 - n) * 0.5, 0.0]
        } else {
            [((p / side) as f64 - n) * 0.5, ((p % side) as f64 - n) * 0.5]
        }
    }

    /// Table slot of the half-integer point `(j+k)/2` given the integer sum `j+k`.
    #[inline]
    pub fn slot(&self, sum: [i64; 2]) -> usize {
        let side = 2 * self.grid.n() as i64;
        let n = self.grid.n() as i64;
        let a = (sum[0] + n).rem_euclid(side) as usize;
        if self.grid.dim() == 1 {
            a
        } else {
            a * side as usize + (sum[1] + n).rem_euclid(side) as usize
        }
    }

    #[inline]
    pub fn coeff(&self, slot: usize, m_idx: usize) -> C64 {
        self.data[slot * self.grid.len() + m_idx]
    }
}

/// Symbol of declared order `m`.
#[derive(Clone, Debug)]
pub struct TorusSymbol {
    grid: TorusGrid,
    pub terms: Vec<SepTerm>,
    pub table: Option<Arc<SymbolTable>>,
    pub order: f64,
    pub real: bool,
}

impl TorusSymbol {
    pub fn new(grid: TorusGrid, order: f64, real: bool) -> Self {
        Self { grid, terms: Vec::new(), table: None, order, real }
    }

    /// Symbol `c(x)·p(ξ)`.
    pub fn separable(coeff: Field, poly: XiPoly, real: bool) -> Self {
        let grid = coeff.grid();
        let order = poly.degree() as f64;
        Self { grid, terms: vec![SepTerm { coeff, poly }], table: None, order, real }
    }

    /// The constant symbol 1.
    pub fn one(grid: TorusGrid) -> Self {
        let c = Field::mode(grid, [0, 0], C64::new(1.0, 0.0)).expect("zero mode");
        Self::separable(c, XiPoly::one(), true)
    }

    /// x-independent symbol `p(ξ)`.
    pub fn fourier_multiplier(grid: TorusGrid, poly: XiPoly) -> Self {
        let c = Field::mode(grid, [0, 0], C64::new(1.0, 0.0)).expect("zero mode");
        Self::separable(c, poly, true)
    }

    pub fn tabulated(grid: TorusGrid, table: SymbolTable, order: f64, real: bool) -> Self {
        Self { grid, terms: Vec::new(), table: Some(Arc::new(table)), order, real }
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn with_term(mut self, coeff: Field, poly: XiPoly) -> Self {
        self.order = self.order.max(poly.degree() as f64);
        self.terms.push(SepTerm { coeff, poly });
        self
    }

    pub fn is_separable(&self) -> bool {
        self.table.is_none()
    }

    /// Pointwise value at grid point `x_idx` and frequency `ξ` (the table part only at
    /// half-integer `ξ`).
    pub fn eval_at(&self, x_idx: usize, xi: [f64; 2]) -> C64 {
        self.values_at(xi)[x_idx]
    }

    /// All grid values of `a(·, ξ)`.
    pub fn values_at(&self, xi: [f64; 2]) -> Vec<C64> {
        let mut out = vec![C64::new(0.0, 0.0); self.grid.len()];
        for t in &self.terms {
            let w = t.poly.eval(xi);
            for (o, v) in out.iter_mut().zip(t.coeff.values()) {
                *o += v * w;
            }
        }
        if let Some(tab) = &self.table {
            let sum = [(2.0 * xi[0]).round() as i64, (2.0 * xi[1]).round() as i64];
            let slot = tab.slot(sum);
            let mut col: Vec<C64> = (0..self.grid.len()).map(|m| tab.coeff(slot, m)).collect();
            fft::inverse(self.grid.dim(), self.grid.n(), &mut col);
            for (o, v) in out.iter_mut().zip(col) {
                *o += v;
            }
        }
        out
    }

    /// Check the realness flag on a sample of frequencies.
    pub fn check_real(&self, samples: &[[f64; 2]], tol: f64) -> bool {
        samples.iter().all(|&xi| {
            let scale = 1.0 + xi[0].abs() + xi[1].abs();
            let tol = tol * scale.powf(self.order.max(0.0));
            self.values_at(xi).iter().all(|v| v.im.abs() <= tol)
        })
    }

    pub fn scale(&self, s: C64) -> Self {
        let mut o = self.clone();
        for t in &mut o.terms {
            t.coeff = t.coeff.scale(s);
        }
        o.real = self.real && s.im == 0.0;
        o
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut o = self.clone();
        o.terms.extend(other.terms.iter().cloned());
        o.order = self.order.max(other.order);
        o.real = self.real && other.real;
        o
    }
}
