//! Implicit-midpoint time integration for the linear frozen systems, their adjoints and the
//! nonlinear equation, forward or backward in time.

use crate::cutoff::{CutoffProfile, TimeCutoff};
use crate::error::{validation, Error, Result};
use crate::field::Field;
use crate::grid::{Projection, TorusGrid};
use crate::krylov::{gmres, KrylovOptions};
use crate::model::{compute_coefficients, control_term, nonlinear_part, FrozenCoefficients, Nonlinearity, ParaOperator};
use crate::C64;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub t0: f64,
    pub t1: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t1: f64, steps: usize) -> Result<Self> {
        if !(t1 > t0) || steps == 0 || !t0.is_finite() || !t1.is_finite() {
            return validation(format!("invalid time grid [{t0}, {t1}] with {steps} steps"));
        }
        Ok(Self { t0, t1, steps })
    }

    pub fn dt(&self) -> f64 {
        (self.t1 - self.t0) / self.steps as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt()
    }

    /// Midpoint of step `n` (between nodes `n` and `n+1`).
    pub fn mid(&self, n: usize) -> f64 {
        self.t0 + (n as f64 + 0.5) * self.dt()
    }

    pub fn horizon(&self) -> f64 {
        self.t1 - self.t0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Snapshots at every node of a time grid, in increasing time order.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Field>,
}

impl Trajectory {
    pub fn zeros(grid: TorusGrid, tg: &TimeGrid) -> Self {
        Self { times: (0..=tg.steps).map(|n| tg.time(n)).collect(), states: vec![Field::zeros(grid); tg.steps + 1] }
    }

    pub fn initial(&self) -> &Field {
        &self.states[0]
    }

    pub fn last(&self) -> &Field {
        self.states.last().expect("nonempty trajectory")
    }

    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    /// `(U_n + U_{n+1})/2`.
    pub fn midpoint(&self, n: usize) -> Field {
        self.states[n].add(&self.states[n + 1]).scale_real(0.5)
    }

    pub fn conj(&self) -> Self {
        Self { times: self.times.clone(), states: self.states.iter().map(Field::conj).collect() }
    }
}

/// Reverse snapshot order and map `t ↦ t0 + t1 − t`.
pub fn reverse_time(traj: &Trajectory) -> Trajectory {
    let t0 = traj.times[0];
    let t1 = *traj.times.last().expect("nonempty");
    Trajectory {
        times: traj.times.iter().rev().map(|&t| t0 + t1 - t).collect(),
        states: traj.states.iter().rev().cloned().collect(),
    }
}

/// Linear generator `L` of `∂_t W = L W + G`, frozen on each step.
pub trait Generator: Sync {
    fn grid(&self) -> TorusGrid;
    fn projection(&self) -> Projection;
    /// `L` at the midpoint of step `n`.
    fn apply(&self, n: usize, w: &Field) -> Field;
    /// When `L` is a Fourier multiplier on step `n`, its symbol (zero off the projection).
    fn exact_multiplier(&self, _n: usize) -> Option<Vec<C64>> {
        None
    }
    /// Leading symbol used for preconditioning.
    fn principal_multiplier(&self) -> Vec<C64> {
        free_multiplier(self.grid(), self.projection())
    }
}

/// `iΔ` restricted to a projection, as a multiplier.
pub fn free_multiplier(grid: TorusGrid, proj: Projection) -> Vec<C64> {
    (0..grid.len())
        .map(|i| if proj.keeps(&grid, i) { C64::new(0.0, -grid.freq_sq(i)) } else { C64::new(0.0, 0.0) })
        .collect()
}

/// `∂_t W = iΔW`.
pub struct FreeGenerator {
    grid: TorusGrid,
    proj: Projection,
    symbol: Vec<C64>,
}

impl FreeGenerator {
    pub fn new(grid: TorusGrid, proj: Projection) -> Self {
        Self { grid, proj, symbol: free_multiplier(grid, proj) }
    }
}

impl Generator for FreeGenerator {
    fn grid(&self) -> TorusGrid {
        self.grid
    }
    fn projection(&self) -> Projection {
        self.proj
    }
    fn apply(&self, _n: usize, w: &Field) -> Field {
        let c = w.coeffs().iter().zip(&self.symbol).map(|(a, b)| a * b).collect();
        Field::from_coeffs(self.grid, c).expect("length")
    }
    fn exact_multiplier(&self, _n: usize) -> Option<Vec<C64>> {
        Some(self.symbol.clone())
    }
}

/// `∂_t W = i𝒜(U̲)W` with coefficients frozen at step midpoints; `beta_sign = −1` gives the
/// adjoint flow `−L^T`.
pub struct ParaGenerator {
    grid: TorusGrid,
    proj: Projection,
    ops: Vec<ParaOperator>,
}

impl ParaGenerator {
    pub fn new(
        frozen: &Trajectory,
        nl: &Nonlinearity,
        cutoff: &CutoffProfile,
        proj: Projection,
        beta_sign: f64,
    ) -> Self {
        let grid = frozen.initial().grid();
        let ops = (0..frozen.steps())
            .map(|n| {
                let c = compute_coefficients(&frozen.midpoint(n), nl);
                ParaOperator::new(&c, cutoff, proj).with_beta_sign(beta_sign)
            })
            .collect();
        Self { grid, proj, ops }
    }

    pub fn operators(&self) -> &[ParaOperator] {
        &self.ops
    }
}

impl Generator for ParaGenerator {
    fn grid(&self) -> TorusGrid {
        self.grid
    }
    fn projection(&self) -> Projection {
        self.proj
    }
    fn apply(&self, n: usize, w: &Field) -> Field {
        self.ops[n].apply_i_a(w)
    }
    fn exact_multiplier(&self, n: usize) -> Option<Vec<C64>> {
        self.ops[n].is_free().then(|| free_multiplier(self.grid, self.proj))
    }
}

/// `∂_t W = (i𝒜(U̲) + R(U̲))W`, the full frozen linearization.
pub struct FrozenGenerator {
    grid: TorusGrid,
    proj: Projection,
    coeffs: Vec<FrozenCoefficients>,
}

impl FrozenGenerator {
    pub fn new(frozen: &Trajectory, nl: &Nonlinearity, proj: Projection) -> Self {
        let grid = frozen.initial().grid();
        let coeffs = (0..frozen.steps()).map(|n| FrozenCoefficients::new(&frozen.midpoint(n), nl)).collect();
        Self { grid, proj, coeffs }
    }
}

impl Generator for FrozenGenerator {
    fn grid(&self) -> TorusGrid {
        self.grid
    }
    fn projection(&self) -> Projection {
        self.proj
    }
    fn apply(&self, n: usize, w: &Field) -> Field {
        self.coeffs[n].apply(w, self.proj)
    }
    fn exact_multiplier(&self, n: usize) -> Option<Vec<C64>> {
        self.coeffs[n].is_free().then(|| free_multiplier(self.grid, self.proj))
    }
}

/// Time reversal `t ↦ T − t`: generator `−L(T − t)`.
pub struct Reversed<'a, G: Generator + ?Sized> {
    pub inner: &'a G,
    pub steps: usize,
}

impl<G: Generator + ?Sized> Generator for Reversed<'_, G> {
    fn grid(&self) -> TorusGrid {
        self.inner.grid()
    }
    fn projection(&self) -> Projection {
        self.inner.projection()
    }
    fn apply(&self, n: usize, w: &Field) -> Field {
        self.inner.apply(self.steps - 1 - n, w).scale_real(-1.0)
    }
    fn exact_multiplier(&self, n: usize) -> Option<Vec<C64>> {
        self.inner.exact_multiplier(self.steps - 1 - n).map(|m| m.into_iter().map(|c| -c).collect())
    }
    fn principal_multiplier(&self) -> Vec<C64> {
        self.inner.principal_multiplier().into_iter().map(|c| -c).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOptions {
    pub krylov: KrylovOptions,
    /// Relative tolerance of the nonlinear fixed point per step.
    pub fixed_point_tol: f64,
    pub fixed_point_max: usize,
}

impl Default for StepOptions {
    fn default() -> Self {
        Self { krylov: KrylovOptions::default().with_tol(1e-12), fixed_point_tol: 1e-13, fixed_point_max: 30 }
    }
}

fn check_state(f: &Field, n: usize) -> Result<()> {
    if f.coeffs().iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical(format!("non-finite state at step {n}")))
    }
}

/// Half-step source `G_{n+1/2}`.
pub type Source<'a> = &'a dyn Fn(usize) -> Field;

/// One midpoint step: `(I − s·h/2·L)y = (I + s·h/2·L)x + s·h·g`, with `s = ±1` for the direction.
pub fn midpoint_step(
    gen: &dyn Generator,
    n: usize,
    x: &Field,
    g: Option<&Field>,
    h: f64,
    dir: Direction,
    opts: &KrylovOptions,
) -> Result<Field> {
    let s = if dir == Direction::Forward { h } else { -h };
    let mut rhs = x.clone();
    let lx = gen.apply(n, x);
    rhs.axpy_real(0.5 * s, &lx);
    if let Some(g) = g {
        rhs.axpy_real(s, &g.project(gen.projection()));
    }
    if let Some(d) = gen.exact_multiplier(n) {
        let c = rhs.coeffs().iter().zip(&d).map(|(r, dk)| r / (1.0 - dk * (0.5 * s))).collect();
        return Field::from_coeffs(gen.grid(), c);
    }
    let pm: Vec<C64> = gen.principal_multiplier().iter().map(|dk| (1.0 - dk * (0.5 * s)).inv()).collect();
    let pre = |v: &Field| {
        let c = v.coeffs().iter().zip(&pm).map(|(a, b)| a * b).collect();
        Field::from_coeffs(v.grid(), c).expect("length")
    };
    let op = |v: &Field| {
        let mut o = v.clone();
        o.axpy_real(-0.5 * s, &gen.apply(n, v));
        o
    };
    let guess = pre(&rhs);
    let sol = gmres(&op, &rhs, Some(&guess), Some(&pre), opts)
        .map_err(|e| Error::Numerical(format!("midpoint step {n}: {e}")))?;
    Ok(sol.x)
}

/// Evolve a linear system over the grid. `init` is the state at `t0` (forward) or `t1` (backward).
pub fn evolve_linear(
    gen: &dyn Generator,
    init: &Field,
    tg: &TimeGrid,
    source: Option<Source<'_>>,
    dir: Direction,
    opts: &StepOptions,
) -> Result<Trajectory> {
    let h = tg.dt();
    let mut states = vec![Field::zeros(gen.grid()); tg.steps + 1];
    let order: Vec<usize> = match dir {
        Direction::Forward => (0..tg.steps).collect(),
        Direction::Backward => (0..tg.steps).rev().collect(),
    };
    let start = if dir == Direction::Forward { 0 } else { tg.steps };
    states[start] = init.clone();
    for n in order {
        let (from, to) = if dir == Direction::Forward { (n, n + 1) } else { (n + 1, n) };
        let g = source.map(|s| s(n));
        let next = midpoint_step(gen, n, &states[from], g.as_ref(), h, dir, &opts.krylov)?;
        check_state(&next, n)?;
        states[to] = next;
    }
    Ok(Trajectory { times: (0..=tg.steps).map(|n| tg.time(n)).collect(), states })
}

/// Control forcing `−iχ_T(t)φ(x)F(t,x)` with `F` sampled at half steps.
#[derive(Clone, Debug)]
pub struct ControlForcing {
    pub chi: TimeCutoff,
    pub phi: Field,
    pub f: Vec<Field>,
}

impl ControlForcing {
    pub fn source(&self, tg: &TimeGrid, n: usize) -> Field {
        control_term(&self.f[n], self.chi.eval(tg.mid(n) - tg.t0), &self.phi)
    }
}

/// Implicit midpoint for the nonlinear equation, the nonlinear part solved by fixed point.
pub fn evolve_nonlinear(
    nl: &Nonlinearity,
    proj: Projection,
    init: &Field,
    tg: &TimeGrid,
    source: Option<Source<'_>>,
    dir: Direction,
    opts: &StepOptions,
) -> Result<Trajectory> {
    let grid = init.grid();
    let free = FreeGenerator::new(grid, proj);
    let d = free.exact_multiplier(0).expect("free multiplier");
    let h = tg.dt();
    let s = if dir == Direction::Forward { h } else { -h };
    let mut states = vec![Field::zeros(grid); tg.steps + 1];
    let start = if dir == Direction::Forward { 0 } else { tg.steps };
    states[start] = init.clone();
    let order: Vec<usize> = match dir {
        Direction::Forward => (0..tg.steps).collect(),
        Direction::Backward => (0..tg.steps).rev().collect(),
    };
    let solve_diag = |r: &Field| {
        let c = r.coeffs().iter().zip(&d).map(|(a, dk)| a / (1.0 - dk * (0.5 * s))).collect();
        Field::from_coeffs(grid, c).expect("length")
    };
    for n in order {
        let (from, to) = if dir == Direction::Forward { (n, n + 1) } else { (n + 1, n) };
        let x = states[from].clone();
        let mut base = x.clone();
        base.axpy_real(0.5 * s, &free.apply(n, &x));
        if let Some(src) = source {
            base.axpy_real(s, &src(n).project(proj));
        }
        let mut y = x.clone();
        let mut converged = nl.is_zero();
        if converged {
            y = solve_diag(&base);
        }
        for _ in 0..opts.fixed_point_max {
            if converged {
                break;
            }
            let mid = x.add(&y).scale_real(0.5);
            let mut r = base.clone();
            r.axpy_real(s, &nonlinear_part(&mid, nl, proj));
            let y_new = solve_diag(&r);
            let change = y_new.sub(&y).l2_norm();
            y = y_new;
            converged = change <= opts.fixed_point_tol * y.l2_norm().max(f64::MIN_POSITIVE);
        }
        if !converged {
            return Err(Error::Numerical(format!("nonlinear fixed point did not converge at step {n}")));
        }
        check_state(&y, n)?;
        states[to] = y;
    }
    Ok(Trajectory { times: (0..=tg.steps).map(|n| tg.time(n)).collect(), states })
}

#[derive(Clone, Debug)]
pub enum EvolutionKind {
    Nonlinear,
    FrozenSimplified,
    FrozenWithRemainder,
    Adjoint,
}

/// Declarative description of one evolution.
#[derive(Clone, Debug)]
pub struct EvolutionSpec<'a> {
    pub kind: EvolutionKind,
    pub nl: Nonlinearity,
    pub cutoff: CutoffProfile,
    pub proj: Projection,
    /// Frozen background on the same time grid (frozen kinds only).
    pub frozen: Option<&'a Trajectory>,
    pub source: Option<&'a [Field]>,
    pub control: Option<&'a ControlForcing>,
}

pub fn evolve(spec: &EvolutionSpec<'_>, init: &Field, tg: &TimeGrid, dir: Direction, opts: &StepOptions) -> Result<Trajectory> {
    let src = |n: usize| {
        let mut g = Field::zeros(init.grid());
        if let Some(s) = spec.source {
            g.axpy_real(1.0, &s[n]);
        }
        if let Some(c) = spec.control {
            g.axpy_real(1.0, &c.source(tg, n));
        }
        g
    };
    let has_src = spec.source.is_some() || spec.control.is_some();
    if let Some(s) = spec.source {
        if s.len() != tg.steps {
            return validation("source must have one sample per step");
        }
    }
    let source: Option<Source<'_>> = if has_src { Some(&src) } else { None };
    if let EvolutionKind::Nonlinear = spec.kind {
        return evolve_nonlinear(&spec.nl, spec.proj, init, tg, source, dir, opts);
    }
    let Some(frozen) = spec.frozen else {
        return validation("frozen kinds need a background trajectory");
    };
    if frozen.steps() != tg.steps {
        return validation("frozen background must cover the time grid");
    }
    let gen: Box<dyn Generator> = match spec.kind {
        EvolutionKind::FrozenSimplified => Box::new(ParaGenerator::new(frozen, &spec.nl, &spec.cutoff, spec.proj, 1.0)),
        EvolutionKind::Adjoint => Box::new(ParaGenerator::new(frozen, &spec.nl, &spec.cutoff, spec.proj, -1.0)),
        EvolutionKind::FrozenWithRemainder => Box::new(FrozenGenerator::new(frozen, &spec.nl, spec.proj)),
        EvolutionKind::Nonlinear => unreachable!(),
    };
    evolve_linear(gen.as_ref(), init, tg, source, dir, opts)
}
