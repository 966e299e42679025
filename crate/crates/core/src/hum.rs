//! Discrete Hilbert Uniqueness Method on a frozen background.
//!
//! Everything is discretized with the implicit midpoint rule so that the discrete duality
//! `−(U(0), V(0)) = h Σ_n (G_{n+½}, V̄_{n+½})` holds exactly, with `V̄_{n+½} = (V_n + V_{n+1})/2`
//! and `(·,·)` the pair product `2Re⟨·,·⟩`. The forward generator is `L = i𝒜(U̲)`; the adjoint
//! flow is `−L^T`, which is `i𝒜` with `b₂ → −b₂`.

use crate::cutoff::{CutoffProfile, TimeCutoff};
use crate::error::{validation, Error, Result};
use crate::evolve::{
    evolve_linear, Direction, FreeGenerator, FrozenGenerator, Generator, ParaGenerator, StepOptions, TimeGrid,
    Trajectory,
};
use crate::exec;
use crate::field::{pair_dot, Field};
use crate::grid::{Projection, TorusGrid};
use crate::krylov::{cg, KrylovOptions};
use crate::model::{control_term, Nonlinearity};
use crate::C64;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use std::fmt;
use std::sync::Arc;

/// Parameters of a control problem on a fixed grid.
#[derive(Clone, Debug)]
pub struct ControlSetup {
    pub tgrid: TimeGrid,
    pub chi: TimeCutoff,
    pub phi: Field,
    /// Fraction of the Nyquist radius kept by the observation filter.
    pub gamma: f64,
    pub proj: Projection,
    pub cg: KrylovOptions,
    /// Tychonoff penalty `μ`.
    pub penalty: f64,
    pub cutoff: CutoffProfile,
    pub nl: Nonlinearity,
    pub step: StepOptions,
}

impl ControlSetup {
    pub fn new(tgrid: TimeGrid, chi: TimeCutoff, phi: Field, proj: Projection) -> Result<Self> {
        let vals = phi.values();
        if vals.iter().any(|v| v.re < -1e-12 || v.re > 1.0 + 1e-12 || v.im.abs() > 1e-12) {
            return validation("phi must be real with values in [0, 1]");
        }
        Ok(Self {
            tgrid,
            chi,
            phi,
            gamma: 1.0 / 3.0,
            proj,
            cg: KrylovOptions { tol: 1e-10, abs_tol: 0.0, restart: 50, max_iter: 400 },
            penalty: 0.0,
            cutoff: CutoffProfile::default(),
            nl: Nonlinearity::cubic(),
            step: StepOptions::default(),
        })
    }

    pub fn with_gamma(mut self, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return validation(format!("gamma must lie in (0, 1], got {gamma}"));
        }
        self.gamma = gamma;
        Ok(self)
    }

    pub fn grid(&self) -> TorusGrid {
        self.phi.grid()
    }

    /// Radius of the observation filter.
    pub fn filter_radius(&self) -> f64 {
        self.gamma * self.grid().n() as f64 / 2.0
    }

    /// Restrict to the observation filter (and the working projection).
    pub fn filter(&self, f: &Field) -> Field {
        f.filter_ball(self.filter_radius()).project(self.proj)
    }

    /// `χ_T(t_{n+½})`.
    pub fn chi_mid(&self, n: usize) -> f64 {
        self.chi.eval(self.tgrid.mid(n) - self.tgrid.t0)
    }
}

/// Outcome of a Gramian inversion.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HumSolveReport {
    pub iterations: usize,
    pub residual: f64,
    pub relative_residual: f64,
    /// Extreme Rayleigh quotients `(𝒦p, p)/(p, p)` over the search directions.
    pub rayleigh_min: f64,
    pub rayleigh_max: f64,
    pub terminal_norm: Option<f64>,
    pub terminal_ratio: Option<f64>,
    pub converged: bool,
}

impl fmt::Display for HumSolveReport {
    /// `key=value` lines.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "cg_iterations={}", self.iterations)?;
        writeln!(f, "cg_residual={:.6e}", self.residual)?;
        writeln!(f, "cg_relative_residual={:.6e}", self.relative_residual)?;
        writeln!(f, "rayleigh_min={:.6e}", self.rayleigh_min)?;
        writeln!(f, "rayleigh_max={:.6e}", self.rayleigh_max)?;
        if let Some(t) = self.terminal_norm {
            writeln!(f, "terminal_norm={t:.6e}")?;
        }
        if let Some(t) = self.terminal_ratio {
            writeln!(f, "terminal_ratio={t:.6e}")?;
        }
        writeln!(f, "converged={}", self.converged)
    }
}

/// A control sampled at half steps together with the HUM data that produced it.
#[derive(Clone, Debug)]
pub struct ControlResult {
    pub v0: Field,
    pub f: Vec<Field>,
    pub report: HumSolveReport,
}

/// Dense Cholesky factor of a Gramian on the projected modes (ℂ-linear part only).
pub struct DenseGramian {
    grid: TorusGrid,
    indices: Vec<usize>,
    chol: Cholesky<C64, Dyn>,
}

impl DenseGramian {
    /// Assemble column by column from a ℂ-linear Gramian.
    pub fn build(ops: &HumOperators) -> Result<Self> {
        let grid = ops.grid();
        let indices = ops.setup.proj.indices(&grid);
        let m = indices.len();
        let cols = exec::map_range(m, |c| {
            let mut e = Field::zeros(grid);
            e.coeffs_mut()[indices[c]] = C64::new(1.0, 0.0);
            ops.hum_apply(&e).map(|k| indices.iter().map(|&i| k.coeffs()[i]).collect::<Vec<_>>())
        });
        let mut mat = DMatrix::<C64>::zeros(m, m);
        for (c, col) in cols.into_iter().enumerate() {
            for (r, v) in col?.into_iter().enumerate() {
                mat[(r, c)] = v;
            }
        }
        let herm = (&mat + mat.adjoint()) * C64::new(0.5, 0.0);
        let chol = herm
            .cholesky()
            .ok_or_else(|| Error::Numerical("dense Gramian is not positive definite".into()))?;
        Ok(Self { grid, indices, chol })
    }

    pub fn size(&self) -> usize {
        self.indices.len()
    }

    pub fn solve(&self, f: &Field) -> Field {
        let b = DVector::from_iterator(self.indices.len(), self.indices.iter().map(|&i| f.coeffs()[i]));
        let x = self.chol.solve(&b);
        let mut out = Field::zeros(self.grid);
        for (r, &i) in self.indices.iter().enumerate() {
            out.coeffs_mut()[i] = x[r];
        }
        out
    }
}

/// Range, solution and Gramian operators for one frozen background.
pub struct HumOperators<'a> {
    pub setup: &'a ControlSetup,
    fwd: Box<dyn Generator + 'a>,
    adj: Box<dyn Generator + 'a>,
    /// `i𝒜 + R`; absent for the zero background, where it coincides with `fwd`.
    full: Option<Box<dyn Generator + 'a>>,
    phi2: Field,
    precond: Option<Arc<DenseGramian>>,
}

impl<'a> HumOperators<'a> {
    /// Operators of the free background `U̲ = 0`.
    pub fn free(setup: &'a ControlSetup) -> Self {
        let g = setup.grid();
        Self {
            setup,
            fwd: Box::new(FreeGenerator::new(g, setup.proj)),
            adj: Box::new(FreeGenerator::new(g, setup.proj)),
            full: None,
            phi2: setup.phi.mul(&setup.phi).real_part(),
            precond: None,
        }
    }

    /// Operators frozen along `background` (one snapshot per time node).
    pub fn new(setup: &'a ControlSetup, background: &Trajectory) -> Result<Self> {
        if background.steps() != setup.tgrid.steps {
            return validation("background must have one snapshot per time node");
        }
        if setup.nl.is_zero() || background.states.iter().all(|s| s.max_abs_coeff() == 0.0) {
            return Ok(Self::free(setup));
        }
        let s = setup;
        Ok(Self {
            setup,
            fwd: Box::new(ParaGenerator::new(background, &s.nl, &s.cutoff, s.proj, 1.0)),
            adj: Box::new(ParaGenerator::new(background, &s.nl, &s.cutoff, s.proj, -1.0)),
            full: Some(Box::new(FrozenGenerator::new(background, &s.nl, s.proj))),
            phi2: s.phi.mul(&s.phi).real_part(),
            precond: None,
        })
    }

    pub fn with_preconditioner(mut self, p: Arc<DenseGramian>) -> Self {
        self.precond = Some(p);
        self
    }

    pub fn grid(&self) -> TorusGrid {
        self.setup.grid()
    }

    pub fn is_free(&self) -> bool {
        self.full.is_none()
    }

    fn full_generator(&self) -> &dyn Generator {
        self.full.as_deref().unwrap_or(self.fwd.as_ref())
    }

    /// `𝒮`: adjoint flow from `V(0) = v0`.
    pub fn solution_op(&self, v0: &Field) -> Result<Trajectory> {
        let s = self.setup;
        evolve_linear(self.adj.as_ref(), &v0.project(s.proj), &s.tgrid, None, Direction::Forward, &s.step)
    }

    /// `ℛ`: value at `t = 0` of the forward system with source `g` and `U(T) = 0`.
    pub fn range_op(&self, g: &[Field]) -> Result<Field> {
        self.range_with(self.fwd.as_ref(), g)
    }

    fn range_with(&self, gen: &dyn Generator, g: &[Field]) -> Result<Field> {
        let s = self.setup;
        if g.len() != s.tgrid.steps {
            return validation("source must have one sample per step");
        }
        let src = |n: usize| g[n].clone();
        let tr = evolve_linear(gen, &Field::zeros(self.grid()), &s.tgrid, Some(&src), Direction::Backward, &s.step)?;
        Ok(tr.initial().clone())
    }

    /// HUM source `−χ²φ²V̄_{n+½}` of an adjoint trajectory.
    pub fn observed_source(&self, v: &Trajectory) -> Vec<Field> {
        (0..self.setup.tgrid.steps)
            .map(|n| {
                let c = self.setup.chi_mid(n);
                if c == 0.0 {
                    Field::zeros(self.grid())
                } else {
                    self.phi2.mul(&v.midpoint(n)).scale_real(-c * c).project(self.setup.proj)
                }
            })
            .collect()
    }

    /// `𝒦V0 = ℛ(−χ²φ²𝒮V0) + μV0`.
    pub fn hum_apply(&self, v0: &Field) -> Result<Field> {
        let v = self.solution_op(v0)?;
        let mut k = self.range_op(&self.observed_source(&v))?;
        if self.setup.penalty > 0.0 {
            k.axpy_real(self.setup.penalty, &v0.project(self.setup.proj));
        }
        Ok(k)
    }

    /// `h Σ ‖χφV̄‖²` in the pair norm, computed directly from the adjoint trajectory.
    pub fn observed_energy(&self, v0: &Field) -> Result<f64> {
        let v = self.solution_op(v0)?;
        let h = self.setup.tgrid.dt();
        let mut e = 0.0;
        for n in 0..self.setup.tgrid.steps {
            let w = self.setup.phi.mul(&v.midpoint(n)).scale_real(self.setup.chi_mid(n));
            e += h * pair_dot(&w, &w);
        }
        Ok(e + self.setup.penalty * pair_dot(v0, v0))
    }

    /// Control `F_{n+½} = −iχφV̄_{n+½}` from the adjoint datum `v0`.
    pub fn control_from(&self, v0: &Field) -> Result<Vec<Field>> {
        let v = self.solution_op(v0)?;
        Ok((0..self.setup.tgrid.steps)
            .map(|n| self.setup.phi.mul(&v.midpoint(n)).scale(C64::new(0.0, -self.setup.chi_mid(n))))
            .collect())
    }

    fn control_source(&self, f: &[Field]) -> Vec<Field> {
        (0..self.setup.tgrid.steps)
            .map(|n| control_term(&f[n], self.setup.chi_mid(n), &self.setup.phi).project(self.setup.proj))
            .collect()
    }

    /// Relative defect of the duality `−(ℛ(χφF), V(0)) = h Σ (χφF, V̄)`.
    pub fn duality_check(&self, f: &[Field], v0: &Field) -> Result<f64> {
        let s = self.setup;
        let g: Vec<Field> = (0..s.tgrid.steps)
            .map(|n| s.phi.mul(&f[n]).scale_real(s.chi_mid(n)).project(s.proj))
            .collect();
        let u0 = self.range_op(&g)?;
        let lhs = -pair_dot(&u0, &v0.project(s.proj));
        let v = self.solution_op(v0)?;
        let h = s.tgrid.dt();
        let rhs: f64 = (0..s.tgrid.steps).map(|n| h * pair_dot(&g[n], &v.midpoint(n))).sum();
        Ok((lhs - rhs).abs() / (lhs.abs() + rhs.abs() + 1e-300))
    }

    /// Solve `𝒦V0 = b` by conjugate gradients in the pair product.
    pub fn solve_gramian(&self, b: &Field, x0: Option<&Field>, opts: &KrylovOptions) -> Result<(Field, HumSolveReport)> {
        let grid = self.grid();
        let rayleigh = std::cell::RefCell::new((f64::INFINITY, 0.0f64));
        let failure = std::cell::RefCell::new(None);
        let op = |v: &Field| match self.hum_apply(v) {
            Ok(k) => {
                let vv = v.re_inner(v);
                if vv > 0.0 {
                    let q = k.re_inner(v) / vv;
                    let mut r = rayleigh.borrow_mut();
                    r.0 = r.0.min(q);
                    r.1 = r.1.max(q);
                }
                k
            }
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                Field::zeros(grid)
            }
        };
        let pre_fn = |v: &Field| self.precond.as_ref().expect("preconditioner").solve(v);
        let pre: Option<&dyn Fn(&Field) -> Field> = if self.precond.is_some() { Some(&pre_fn) } else { None };
        let b = b.project(self.setup.proj);
        let res = cg(&op, &b, x0, pre, opts);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let (rmin, rmax) = rayleigh.into_inner();
        let bn = b.l2_norm();
        match res {
            Ok(sol) => {
                let report = HumSolveReport {
                    iterations: sol.iterations,
                    residual: sol.residual,
                    relative_residual: if bn > 0.0 { sol.residual / bn } else { 0.0 },
                    rayleigh_min: if rmin.is_finite() { rmin } else { 0.0 },
                    rayleigh_max: rmax,
                    terminal_norm: None,
                    terminal_ratio: None,
                    converged: true,
                };
                Ok((sol.x, report))
            }
            Err(Error::Numerical(m)) => Err(Error::Numerical(format!("{m}; smallest Rayleigh quotient seen {rmin:.3e}"))),
            Err(e) => Err(e),
        }
    }

    /// `V0 = 𝒦⁻¹U_in` with `U_in` restricted to the observation filter.
    pub fn hum_invert(&self, u_in: &Field, x0: Option<&Field>) -> Result<(Field, HumSolveReport)> {
        self.solve_gramian(&self.setup.filter(u_in), x0, &self.setup.cg)
    }

    /// `𝓛U_in`: HUM control for the simplified system.
    pub fn control_op(&self, u_in: &Field) -> Result<ControlResult> {
        let (v0, report) = self.hum_invert(u_in, None)?;
        Ok(ControlResult { f: self.control_from(&v0)?, v0, report })
    }

    /// Forward solve from `u_in` driven by `−iχφF`, with or without the remainder.
    pub fn controlled_solve(&self, u_in: &Field, f: &[Field], with_remainder: bool) -> Result<Trajectory> {
        let s = self.setup;
        let g = self.control_source(f);
        let src = |n: usize| g[n].clone();
        let gen = if with_remainder { self.full_generator() } else { self.fwd.as_ref() };
        evolve_linear(gen, &u_in.project(s.proj), &s.tgrid, Some(&src), Direction::Forward, &s.step)
    }

    /// `ℛ_P`: backward solve of the system with remainder.
    pub fn range_p(&self, g: &[Field]) -> Result<Field> {
        self.range_with(self.full_generator(), g)
    }

    /// `𝒮_P`: the simplified system from `z0` under the control built from `v0 = 𝒦⁻¹z0`.
    pub fn solution_p_with(&self, z0: &Field, v0: &Field) -> Result<Trajectory> {
        let v = self.solution_op(v0)?;
        let g = self.observed_source(&v);
        let src = |n: usize| g[n].clone();
        let s = self.setup;
        evolve_linear(self.fwd.as_ref(), &z0.project(s.proj), &s.tgrid, Some(&src), Direction::Forward, &s.step)
    }

    pub fn solution_p(&self, z0: &Field) -> Result<Trajectory> {
        let (v0, _) = self.solve_gramian(z0, None, &self.setup.cg)?;
        self.solution_p_with(z0, &v0)
    }

    /// `R(U̲)` applied to midpoint averages of a trajectory.
    fn remainder_source(&self, z: &Trajectory) -> Vec<Field> {
        let full = self.full_generator();
        (0..self.setup.tgrid.steps)
            .map(|n| {
                let m = z.midpoint(n);
                full.apply(n, &m).sub(&self.fwd.apply(n, &m))
            })
            .collect()
    }

    /// `𝓔z0 = ℛ_P R 𝒮_P z0` given `v0 = 𝒦⁻¹z0`.
    pub fn perturbation_e_with(&self, z0: &Field, v0: &Field) -> Result<Field> {
        if self.is_free() {
            return Ok(Field::zeros(self.grid()));
        }
        let z = self.solution_p_with(z0, v0)?;
        self.range_p(&self.remainder_source(&z))
    }

    pub fn perturbation_e(&self, z0: &Field) -> Result<Field> {
        if self.is_free() {
            return Ok(Field::zeros(self.grid()));
        }
        let (v0, _) = self.solve_gramian(z0, None, &self.setup.cg)?;
        self.perturbation_e_with(z0, &v0)
    }

    /// `𝓛_P U_in = 𝓛(Id + 𝓔)⁻¹U_in` by the Neumann series `V0 = Σ_k 𝒦⁻¹(−𝓔)^k U_in`.
    ///
    /// `warm` holds adjoint data of the series terms from a previous call and is updated.
    pub fn control_op_p(&self, u_in: &Field, warm: &mut Vec<Field>, opts: &NeumannOptions) -> Result<NeumannControl> {
        let u = self.setup.filter(u_in);
        let un = u.l2_norm();
        let mut term = u.clone();
        let mut v0 = Field::zeros(self.grid());
        let mut reports = Vec::new();
        let mut term_norms = vec![un];
        for k in 0..opts.max_terms {
            let copts = if k == 0 {
                self.setup.cg
            } else {
                self.setup.cg.with_abs_tol(self.setup.cg.tol * un)
            };
            let (vk, rep) = self.solve_gramian(&term, warm.get(k), &copts)?;
            reports.push(rep);
            v0.axpy_real(1.0, &vk);
            if k < warm.len() {
                warm[k] = vk.clone();
            } else {
                warm.push(vk.clone());
            }
            if self.is_free() {
                break;
            }
            let next = self.perturbation_e_with(&term, &vk)?.scale_real(-1.0);
            let nn = next.l2_norm();
            term_norms.push(nn);
            if k >= 1 && nn > term_norms[k] {
                return Err(Error::Numerical(format!(
                    "Neumann series for (Id + E) diverges: term norms {term_norms:?}"
                )));
            }
            if nn <= opts.tol * un || un == 0.0 {
                break;
            }
            term = next;
        }
        warm.truncate(reports.len().max(1));
        Ok(NeumannControl { f: self.control_from(&v0)?, v0, reports, term_norms })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannOptions {
    pub tol: f64,
    pub max_terms: usize,
}

impl Default for NeumannOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_terms: 30 }
    }
}

#[derive(Clone, Debug)]
pub struct NeumannControl {
    pub v0: Field,
    pub f: Vec<Field>,
    pub reports: Vec<HumSolveReport>,
    /// `‖𝓔^k U_in‖`, starting with `‖U_in‖`.
    pub term_norms: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct ObservabilityReport {
    /// Smallest Rayleigh quotient of the filtered Gramian.
    pub c_min: f64,
    pub mode: Field,
    pub iterations: usize,
    /// `c_min < 1e−12`.
    pub degenerate: bool,
}

/// Inverse iteration with CG solves for the smallest eigenvalue of the filtered Gramian.
pub fn observability_constant(ops: &HumOperators, start: &Field, max_iter: usize, tol: f64) -> Result<ObservabilityReport> {
    let s = ops.setup;
    let apply = |v: &Field| -> Result<Field> { Ok(s.filter(&ops.hum_apply(&s.filter(v))?)) };
    let mut x = s.filter(start);
    let n0 = x.l2_norm();
    if n0 == 0.0 {
        return validation("start vector vanishes on the filtered space");
    }
    x = x.scale_real(1.0 / n0);
    let mut q = apply(&x)?.re_inner(&x);
    let copts = KrylovOptions { tol: 1e-8, abs_tol: 0.0, restart: 50, max_iter: 2000 };
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let failure = std::cell::RefCell::new(None);
        let op = |v: &Field| {
            apply(v).unwrap_or_else(|e| {
                failure.borrow_mut().get_or_insert(e);
                Field::zeros(v.grid())
            })
        };
        let sol = cg(&op, &x, Some(&x.scale_real(1.0 / q.max(1e-300))), None, &copts);
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        let y = match sol {
            Ok(s) => s.x,
            // CG stalls on a numerically singular Gramian: report the collapse
            Err(Error::Numerical(_)) => break,
            Err(e) => return Err(e),
        };
        let yn = y.l2_norm();
        x = y.scale_real(1.0 / yn);
        let qn = apply(&x)?.re_inner(&x);
        let done = (qn - q).abs() <= tol * qn.abs();
        q = qn;
        if done {
            break;
        }
    }
    Ok(ObservabilityReport { c_min: q, mode: x, iterations, degenerate: q < 1e-12 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cutoffs, ControlRegion};
    use crate::probe::{seeded_field, smooth_field};

    fn setup(n: usize, steps: usize, full: bool) -> ControlSetup {
        let g = TorusGrid::new(2, n).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, steps).unwrap();
        let (phi, chi) = if full {
            (Field::mode(g, [0, 0], C64::new(1.0, 0.0)).unwrap(), TimeCutoff::flat(1.0))
        } else {
            let c = build_cutoffs(&ControlRegion::crossed_strips(0.5, 0.25).unwrap(), 0.06, 1.0, &g).unwrap();
            (c.phi, c.chi)
        };
        ControlSetup::new(tg, chi, phi, Projection::Nyquist).unwrap()
    }

    fn background(g: TorusGrid, tg: &TimeGrid, amp: f64) -> Trajectory {
        Trajectory {
            times: (0..=tg.steps).map(|n| tg.time(n)).collect(),
            states: (0..=tg.steps)
                .map(|n| smooth_field(g, 40, 2.0, amp).scale(C64::from_polar(1.0, -(n as f64) * tg.dt())))
                .collect(),
        }
    }

    #[test]
    fn duality_free_and_frozen() {
        let s = setup(16, 40, false);
        let g = s.grid();
        let ops = HumOperators::free(&s);
        let f: Vec<Field> = (0..40).map(|n| seeded_field(g, 100 + n)).collect();
        let v0 = seeded_field(g, 7);
        assert!(ops.duality_check(&f, &v0).unwrap() < 1e-9);
        let zero: Vec<Field> = (0..40).map(|_| Field::zeros(g)).collect();
        assert_eq!(ops.range_op(&zero).unwrap().l2_norm(), 0.0);
        let bg = background(g, &s.tgrid, 0.05);
        let ops = HumOperators::new(&s, &bg).unwrap();
        assert!(!ops.is_free());
        assert!(ops.duality_check(&f, &v0).unwrap() < 1e-8);
    }

    #[test]
    fn gramian_symmetric_positive() {
        let s = setup(16, 40, false);
        let g = s.grid();
        let bg = background(g, &s.tgrid, 0.05);
        let ops = HumOperators::new(&s, &bg).unwrap();
        let u = seeded_field(g, 1).project(Projection::Nyquist);
        let v = seeded_field(g, 2).project(Projection::Nyquist);
        let a = pair_dot(&ops.hum_apply(&u).unwrap(), &v);
        let b = pair_dot(&u, &ops.hum_apply(&v).unwrap());
        assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
        let kv = pair_dot(&ops.hum_apply(&v).unwrap(), &v);
        let direct = ops.observed_energy(&v).unwrap();
        assert!(kv > 0.0 && (kv - direct).abs() < 1e-9 * direct);
    }

    #[test]
    fn full_observation_is_horizon_times_identity() {
        let s = setup(16, 4000, true);
        let ops = HumOperators::free(&s);
        let u = s.filter(&seeded_field(s.grid(), 3));
        let k = ops.hum_apply(&u).unwrap();
        assert!(k.sub(&u).l2_norm() / u.l2_norm() < 1e-6);
        let (v0, rep) = ops.hum_invert(&u, None).unwrap();
        assert!(v0.sub(&u).l2_norm() / u.l2_norm() < 1e-6 && rep.iterations <= 3);
        let (z, rep0) = ops.hum_invert(&Field::zeros(s.grid()), None).unwrap();
        assert!(z.l2_norm() == 0.0 && rep0.iterations == 0);
    }

    #[test]
    fn free_null_control_reaches_zero() {
        let s = setup(16, 50, false);
        let ops = HumOperators::free(&s);
        let u_in = s.filter(&smooth_field(s.grid(), 5, 3.0, 1.0));
        let c = ops.control_op(&u_in).unwrap();
        let k = ops.hum_apply(&c.v0).unwrap();
        assert!(k.sub(&u_in).l2_norm() <= 10.0 * s.cg.tol * u_in.l2_norm());
        let tr = ops.controlled_solve(&u_in, &c.f, false).unwrap();
        assert!(tr.last().l2_norm() / u_in.l2_norm() < 1e-8);
        let outside: Vec<usize> = (0..s.grid().len()).filter(|&i| s.phi.values()[i].re.abs() < 1e-14).collect();
        for f in &c.f {
            let v = f.values();
            assert!(outside.iter().all(|&i| v[i].norm() < 1e-12));
        }
    }

    #[test]
    fn perturbed_control_drives_the_full_frozen_system() {
        let s = setup(16, 40, false);
        let g = s.grid();
        let bg = background(g, &s.tgrid, 0.05);
        let ops = HumOperators::new(&s, &bg).unwrap();
        let u_in = s.filter(&smooth_field(g, 6, 3.0, 1.0));
        let mut warm = Vec::new();
        let c = ops.control_op_p(&u_in, &mut warm, &NeumannOptions::default()).unwrap();
        assert!(c.term_norms.len() >= 2 && c.term_norms[1] < 0.1 * c.term_norms[0]);
        let tr = ops.controlled_solve(&u_in, &c.f, true).unwrap();
        assert!(tr.last().l2_norm() / u_in.l2_norm() < 1e-6, "{}", tr.last().l2_norm());
        let free = HumOperators::free(&s);
        assert_eq!(free.perturbation_e(&u_in).unwrap().l2_norm(), 0.0);
    }
}
