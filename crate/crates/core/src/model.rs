//! The quasi-linear nonlinearity, its coefficient symbols, the paralinearized operator
//! `𝒜(U)` and the frozen linearization with remainder `R(U) = frozen − i𝒜`.
//!
//! The equation is `u_t = i(Δu + g₁'(|u|²)Δ(g₁(|u|²))u + g₂(|u|²)u) − iχφf`.
//! With `G = g₁'(|u|²)` the symbols are `a₂ = G²|u|²`, `b₂ = G²u²`,
//! `a⃗₁ = 2G² Im(u∇ū)`, and
//! `𝒜(U)W = −(E·Op^{BW}(A₂|ξ|²) + diag(a⃗₁·ξ))W`, `A₂ = [[1+a₂, b₂], [b̄₂, 1+a₂]]`.

use crate::cutoff::CutoffProfile;
use crate::error::{validation, Result};
use crate::exec;
use crate::field::{sobolev_norm, Field};
use crate::grid::{Projection, TorusGrid};
use crate::quantize::PairTable;
use crate::C64;
use nalgebra::Matrix2;
use std::sync::Arc;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

/// `g₁, g₂` as coefficient lists: `[c₁, c₂, …]` means `c₁ρ + c₂ρ² + …`.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Nonlinearity {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

fn poly(c: &[f64], rho: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &a| (acc + a) * rho)
}

fn poly_d1(c: &[f64], rho: f64) -> f64 {
    c.iter().enumerate().rev().fold(0.0, |acc, (i, &a)| acc * rho + a * (i + 1) as f64)
}

fn poly_d2(c: &[f64], rho: f64) -> f64 {
    c.iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (i, &a)| acc * rho + a * ((i + 1) * i) as f64)
}

impl Nonlinearity {
    pub fn new(g1: Vec<f64>, g2: Vec<f64>) -> Result<Self> {
        if g1.iter().chain(&g2).any(|c| !c.is_finite()) {
            return validation("nonlinearity coefficients must be finite");
        }
        Ok(Self { g1, g2 })
    }

    /// `g₁(ρ) = ρ`, `g₂(ρ) = ρ`.
    pub fn cubic() -> Self {
        Self { g1: vec![1.0], g2: vec![1.0] }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn is_zero(&self) -> bool {
        self.g1.iter().chain(&self.g2).all(|&c| c == 0.0)
    }

    pub fn g1(&self, rho: f64) -> f64 {
        poly(&self.g1, rho)
    }
    pub fn g1_d1(&self, rho: f64) -> f64 {
        poly_d1(&self.g1, rho)
    }
    pub fn g1_d2(&self, rho: f64) -> f64 {
        poly_d2(&self.g1, rho)
    }
    pub fn g2(&self, rho: f64) -> f64 {
        poly(&self.g2, rho)
    }
}

/// Coefficients evaluated at a frozen state, as grid values and spectral fields.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    pub a2: Field,
    pub b2: Field,
    pub a1: Vec<Field>,
    pub lambda: Field,
    pub s1: Field,
    pub s2: Field,
    /// Grid values, in the same order.
    pub a2_values: Vec<f64>,
    pub b2_values: Vec<C64>,
    pub lambda_values: Vec<f64>,
    pub s1_values: Vec<f64>,
    pub s2_values: Vec<C64>,
}

/// `s₁, s₂` and `λ` from `a₂, b₂` at one point.
pub fn s_entries(a2: f64, b2: C64) -> (f64, f64, C64) {
    let lambda = (1.0 + 2.0 * a2).sqrt();
    let den = (2.0 * lambda * (1.0 + a2 + lambda)).sqrt();
    ((1.0 + a2 + lambda) / den, lambda, -b2 / den)
}

fn real_field(grid: TorusGrid, v: &[f64]) -> Field {
    Field::from_values(grid, v.iter().map(|&x| C64::new(x, 0.0)).collect()).real_part()
}

pub fn compute_coefficients(u: &Field, nl: &Nonlinearity) -> CoefficientSet {
    let grid = u.grid();
    let uv = u.values();
    let grads: Vec<Vec<C64>> = (0..grid.dim()).map(|l| u.derivative(l).values()).collect();
    let n = grid.len();
    let mut a2 = vec![0.0; n];
    let mut b2 = vec![ZERO; n];
    let mut lam = vec![0.0; n];
    let mut s1 = vec![0.0; n];
    let mut s2 = vec![ZERO; n];
    let mut a1 = vec![vec![0.0; n]; grid.dim()];
    for x in 0..n {
        let rho = uv[x].norm_sqr();
        let g = nl.g1_d1(rho);
        a2[x] = g * g * rho;
        b2[x] = uv[x] * uv[x] * (g * g);
        let (e1, l, e2) = s_entries(a2[x], b2[x]);
        lam[x] = l;
        s1[x] = e1;
        s2[x] = e2;
        for (l, gr) in grads.iter().enumerate() {
            a1[l][x] = 2.0 * g * g * (uv[x] * gr[x].conj()).im;
        }
    }
    CoefficientSet {
        a2: real_field(grid, &a2),
        b2: Field::from_values(grid, b2.clone()),
        a1: a1.iter().map(|v| real_field(grid, v)).collect(),
        lambda: real_field(grid, &lam),
        s1: real_field(grid, &s1),
        s2: Field::from_values(grid, s2.clone()),
        a2_values: a2,
        b2_values: b2,
        lambda_values: lam,
        s1_values: s1,
        s2_values: s2,
    }
}

/// `E = diag(1, −1)`.
pub fn e_matrix() -> Matrix2<C64> {
    Matrix2::new(C64::new(1.0, 0.0), ZERO, ZERO, C64::new(-1.0, 0.0))
}

/// `A₂(x) = [[1+a₂, b₂], [b̄₂, 1+a₂]]`.
pub fn a2_matrix(a2: f64, b2: C64) -> Matrix2<C64> {
    Matrix2::new(C64::new(1.0 + a2, 0.0), b2, b2.conj(), C64::new(1.0 + a2, 0.0))
}

/// `S = [[s₁, s₂], [s̄₂, s₁]]`.
pub fn s_matrix(s1: f64, s2: C64) -> Matrix2<C64> {
    Matrix2::new(C64::new(s1, 0.0), s2, s2.conj(), C64::new(s1, 0.0))
}

/// `S⁻¹ = [[s₁, −s₂], [−s̄₂, s₁]]` (uses `s₁² − |s₂|² = 1`).
pub fn s_inverse_matrix(s1: f64, s2: C64) -> Matrix2<C64> {
    Matrix2::new(C64::new(s1, 0.0), -s2, -s2.conj(), C64::new(s1, 0.0))
}

/// Make a spectral array Hermitian-symmetric exactly (real function).
fn hermitian(grid: &TorusGrid, c: &[C64]) -> Vec<C64> {
    (0..grid.len()).map(|i| (c[i] + c[grid.neg_index(i)].conj()) * 0.5).collect()
}

/// `S w = Op^{BW}(α|ξ|²)w + σ·Op^{BW}(β|ξ|²)w̄ + Op^{BW}(a⃗₁·ξ)w` with `α = 1 + a₂`, `β = b₂`,
/// restricted to a projection. `𝒜w = −Sw` on the first component.
#[derive(Clone)]
pub struct ParaOperator {
    grid: TorusGrid,
    table: Arc<PairTable>,
    proj: Projection,
    alpha: Vec<C64>,
    beta: Vec<C64>,
    a1: [Vec<C64>; 2],
    free: bool,
    beta_sign: f64,
}

impl ParaOperator {
    pub fn new(coeffs: &CoefficientSet, cutoff: &CutoffProfile, proj: Projection) -> Self {
        let grid = coeffs.a2.grid();
        let mut alpha = hermitian(&grid, coeffs.a2.coeffs());
        alpha[0] += 1.0;
        let zero = vec![ZERO; grid.len()];
        let a1x = hermitian(&grid, coeffs.a1[0].coeffs());
        let a1y = if grid.dim() == 2 { hermitian(&grid, coeffs.a1[1].coeffs()) } else { zero.clone() };
        let free = coeffs.a2.max_abs_coeff() == 0.0
            && coeffs.b2.max_abs_coeff() == 0.0
            && coeffs.a1.iter().all(|a| a.max_abs_coeff() == 0.0);
        Self {
            grid,
            table: PairTable::get(grid, Some(cutoff), proj),
            proj,
            alpha,
            beta: coeffs.b2.coeffs().to_vec(),
            a1: [a1x, a1y],
            free,
            beta_sign: 1.0,
        }
    }

    /// Operator of the free state `U = 0` (a pure Fourier multiplier).
    pub fn free(grid: TorusGrid, cutoff: &CutoffProfile, proj: Projection) -> Self {
        let c = compute_coefficients(&Field::zeros(grid), &Nonlinearity::zero());
        Self::new(&c, cutoff, proj)
    }

    /// Same operator with `b₂ → −b₂` (gives the transpose structure used by adjoints).
    pub fn with_beta_sign(mut self, sign: f64) -> Self {
        self.beta_sign = sign;
        self
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn projection(&self) -> Projection {
        self.proj
    }

    pub fn is_free(&self) -> bool {
        self.free
    }

    /// `S w` (see type docs).
    pub fn apply_s(&self, w: &Field) -> Field {
        let grid = self.grid;
        if self.free {
            return w.project(self.proj).multiplier(|k| C64::new((k[0] * k[0] + k[1] * k[1]) as f64, 0.0));
        }
        let g = w.coeffs();
        let h: Vec<C64> = (0..grid.len()).map(|i| g[grid.neg_index(i)].conj() * self.beta_sign).collect();
        let t = &self.table;
        let mut rows = vec![ZERO; t.rows.len()];
        exec::fill_rows(&mut rows, |r| {
            let fj = t.freq(t.rows[r] as usize);
            let mut acc = ZERO;
            for p in t.row_start[r]..t.row_start[r + 1] {
                let k = t.k[p] as usize;
                let m = t.m[p] as usize;
                let fk = t.freq(k);
                let x0 = (fj[0] + fk[0]) as f64 * 0.5;
                let x1 = (fj[1] + fk[1]) as f64 * 0.5;
                let xi2 = x0 * x0 + x1 * x1;
                let lin = self.alpha[m] * xi2 + self.a1[0][m] * x0 + self.a1[1][m] * x1;
                acc += (lin * g[k] + self.beta[m] * (xi2 * h[k])) * t.weight[p];
            }
            acc
        });
        let mut out = vec![ZERO; grid.len()];
        for (r, v) in rows.into_iter().enumerate() {
            out[t.rows[r] as usize] = v;
        }
        Field::from_coeffs(grid, out).expect("length")
    }

    /// First component of `𝒜W`.
    pub fn apply_a(&self, w: &Field) -> Field {
        self.apply_s(w).scale_real(-1.0)
    }

    /// First component of `i𝒜W`.
    pub fn apply_i_a(&self, w: &Field) -> Field {
        self.apply_s(w).scale(-I)
    }
}

/// `𝒜(U̲)` as an operator on pair states.
pub fn assemble_a(u: &Field, nl: &Nonlinearity, cutoff: &CutoffProfile, proj: Projection) -> ParaOperator {
    ParaOperator::new(&compute_coefficients(u, nl), cutoff, proj)
}

/// Grid-value coefficients of the frozen linearization at `U̲`:
/// `frozen(w) = P[i(Δw + c_a·conj(Δw) + c_b·Δw + Σ_l (p_l ∂_l w + q_l conj(∂_l w)) + z·w)]`.
#[derive(Clone, Debug)]
pub struct FrozenCoefficients {
    grid: TorusGrid,
    c_a: Vec<C64>,
    c_b: Vec<f64>,
    p: Vec<Vec<C64>>,
    q: Vec<Vec<C64>>,
    z: Vec<f64>,
    zero: bool,
}

impl FrozenCoefficients {
    pub fn new(u: &Field, nl: &Nonlinearity) -> Self {
        let grid = u.grid();
        let n = grid.len();
        let d = grid.dim();
        let uv = u.values();
        let du: Vec<Vec<C64>> = (0..d).map(|l| u.derivative(l).values()).collect();
        let mut c_a = vec![ZERO; n];
        let mut c_b = vec![0.0; n];
        let mut p = vec![vec![ZERO; n]; d];
        let mut q = vec![vec![ZERO; n]; d];
        let mut z = vec![0.0; n];
        for x in 0..n {
            let u0 = uv[x];
            let rho = u0.norm_sqr();
            let g = nl.g1_d1(rho);
            let g2p = nl.g1_d2(rho);
            let gg = g * g;
            c_a[x] = u0 * u0 * gg;
            c_b[x] = gg * rho;
            let mut grad_u_sq = 0.0;
            let mut grad_rho_sq = 0.0;
            for l in 0..d {
                let dl = du[l][x];
                let drho = 2.0 * (u0.conj() * dl).re;
                grad_u_sq += dl.norm_sqr();
                grad_rho_sq += drho * drho;
                p[l][x] = u0 * dl.conj() * (2.0 * gg) + C64::new(2.0 * g * g2p * rho * drho, 0.0);
                q[l][x] = u0 * dl * (2.0 * gg) + u0 * u0 * (2.0 * g * g2p * drho);
            }
            z[x] = -2.0 * gg * grad_u_sq - g * g2p * grad_rho_sq + nl.g2(rho);
        }
        let zero = c_b.iter().all(|&v| v == 0.0)
            && z.iter().all(|&v| v == 0.0)
            && p.iter().chain(&q).all(|v| v.iter().all(|c| *c == ZERO));
        Self { grid, c_a, c_b, p, q, z, zero }
    }

    /// True when the frozen operator reduces to `iΔ`.
    pub fn is_free(&self) -> bool {
        self.zero
    }

    /// Apply the frozen linear operator to `w`, projected.
    pub fn apply(&self, w: &Field, proj: Projection) -> Field {
        let lap = w.laplacian();
        let lin = lap.scale(I);
        if self.zero {
            return lin.project(proj);
        }
        let d = self.grid.dim();
        let wv = w.values();
        let lv = lap.values();
        let dw: Vec<Vec<C64>> = (0..d).map(|l| w.derivative(l).values()).collect();
        let t: Vec<C64> = (0..self.grid.len())
            .map(|x| {
                let mut s = self.c_a[x] * lv[x].conj() + lv[x] * self.c_b[x] + wv[x] * self.z[x];
                for l in 0..d {
                    s += self.p[l][x] * dw[l][x] + self.q[l][x] * dw[l][x].conj();
                }
                s * I
            })
            .collect();
        let mut out = Field::from_values(self.grid, t);
        out.axpy_real(1.0, &lin);
        out.project(proj)
    }
}

/// Nonlinear part `i(g₁'(ρ)Δ(g₁(ρ)) + g₂(ρ))u` with `Δg₁(ρ)` expanded by the chain rule,
/// `Δg₁(ρ) = g₁'(ρ)(uΔū + ūΔu + 2|∇u|²) + g₁''(ρ)|∇ρ|²`, as grid values.
fn nonlinear_part_values(u: &Field, nl: &Nonlinearity) -> Vec<C64> {
    let grid = u.grid();
    let uv = u.values();
    let lv = u.laplacian().values();
    let du: Vec<Vec<C64>> = (0..grid.dim()).map(|l| u.derivative(l).values()).collect();
    (0..grid.len())
        .map(|x| {
            let u0 = uv[x];
            let rho = u0.norm_sqr();
            let g = nl.g1_d1(rho);
            let mut grad_u_sq = 0.0;
            let mut grad_rho_sq = 0.0;
            for d in &du {
                grad_u_sq += d[x].norm_sqr();
                let dr = 2.0 * (u0.conj() * d[x]).re;
                grad_rho_sq += dr * dr;
            }
            let lap_rho = 2.0 * (u0.conj() * lv[x]).re + 2.0 * grad_u_sq;
            let lap_g1 = g * lap_rho + nl.g1_d2(rho) * grad_rho_sq;
            let q = g * lap_g1 + nl.g2(rho);
            u0 * q * I
        })
        .collect()
}

/// `∂_t u` of the controlled equation; `proj` is `TwoThirds` for 2/3-rule dealiasing.
pub fn full_nonlinear_rhs(
    u: &Field,
    nl: &Nonlinearity,
    f: Option<&Field>,
    chi_t: f64,
    phi: &Field,
    proj: Projection,
) -> Field {
    let mut out = nonlinear_rhs_free(u, nl, proj);
    if let Some(f) = f {
        let c = control_term(f, chi_t, phi);
        out.axpy_real(1.0, &c.project(proj));
    }
    out
}

/// `i(Δu + g₁'Δ(g₁)u + g₂u)`, projected.
pub fn nonlinear_rhs_free(u: &Field, nl: &Nonlinearity, proj: Projection) -> Field {
    let mut out = u.laplacian().scale(I);
    if !nl.is_zero() {
        out.axpy_real(1.0, &Field::from_values(u.grid(), nonlinear_part_values(u, nl)));
    }
    out.project(proj)
}

/// Nonlinear part only (without `iΔu`), projected.
pub fn nonlinear_part(u: &Field, nl: &Nonlinearity, proj: Projection) -> Field {
    if nl.is_zero() {
        return Field::zeros(u.grid());
    }
    Field::from_values(u.grid(), nonlinear_part_values(u, nl)).project(proj)
}

/// `−iχ(t)φ(x)f(x)`.
pub fn control_term(f: &Field, chi_t: f64, phi: &Field) -> Field {
    phi.mul(f).scale(C64::new(0.0, -chi_t))
}

/// Frozen linear operator `frozen(U̲; W)`; `frozen(U̲, U̲)` equals the uncontrolled right side.
pub fn frozen_linear_rhs(u_bar: &Field, w: &Field, nl: &Nonlinearity, proj: Projection) -> Field {
    FrozenCoefficients::new(u_bar, nl).apply(w, proj)
}

/// `R(U̲)W = frozen(U̲; W) − i𝒜(U̲)W`.
pub fn remainder_apply(u_bar: &Field, w: &Field, nl: &Nonlinearity, cutoff: &CutoffProfile, proj: Projection) -> Field {
    let a = assemble_a(u_bar, nl, cutoff, proj);
    frozen_linear_rhs(u_bar, w, nl, proj).sub(&a.apply_i_a(&w.project(proj)))
}

/// `s₀ = d/2 + 2 + 1/2`.
pub fn s0(dim: usize) -> f64 {
    dim as f64 / 2.0 + 2.5
}

/// Warn when `‖U̲‖_{H^{s₀}}` exceeds the gate; returns whether the state is small.
pub fn smallness_gate(u: &Field, eps0: f64) -> bool {
    let v = sobolev_norm(u, s0(u.grid().dim()));
    if v > eps0 {
        log::warn!("state norm {v:.3e} in H^s0 exceeds the smallness gate {eps0:.1e}");
        false
    } else {
        true
    }
}
