//! Picard iteration for nonlinear null control and exact control by gluing two null
//! controls with conjugate time reversal.

use crate::error::{validation, Error, Result};
use crate::evolve::{evolve_nonlinear, Direction, TimeGrid, Trajectory};
use crate::exec;
use crate::field::{sobolev_norm, Field};
use crate::hum::{ControlSetup, DenseGramian, HumOperators, NeumannOptions};
use crate::model::{control_term, s0};
use crate::cutoff::TimeCutoff;
use std::sync::Arc;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PicardOptions {
    pub max_iter: usize,
    /// Stop when `max_t ‖U^{n+1} − U^n‖_{H^{s−2}} ≤ tol·‖u_in‖_{H^{s−2}}`.
    pub tol: f64,
    /// Contraction threshold for the geometric-decay flag.
    pub rho_max: f64,
    /// Sobolev index `s` of the acceptance norm.
    pub s: f64,
    pub neumann: NeumannOptions,
    /// Smallness gate on `‖u_in‖_{H^s}` (warning only).
    pub eps0: f64,
}

impl PicardOptions {
    pub fn new(dim: usize) -> Self {
        Self { max_iter: 20, tol: 1e-10, rho_max: 0.5, s: s0(dim), neumann: NeumannOptions::default(), eps0: 1e-2 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub diff_u: f64,
    pub diff_f: f64,
    pub ratio_u: Option<f64>,
    pub ratio_f: Option<f64>,
    /// `‖U^{n+1}(T)‖_{H^s}` of the frozen controlled solve.
    pub terminal: f64,
    pub cg_iterations: usize,
    pub neumann_terms: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct IterationLedger {
    pub records: Vec<IterationRecord>,
    pub rho_max: f64,
}

impl IterationLedger {
    /// Ratios of successive `U` differences are `≤ ρ_max` from the second iteration on.
    pub fn geometric_decay(&self) -> bool {
        self.records.iter().skip(1).filter_map(|r| r.ratio_u).all(|q| q <= self.rho_max)
    }

    /// Terminal norms do not increase after the second iteration.
    pub fn monotone_terminal(&self) -> bool {
        self.records.iter().skip(1).collect::<Vec<_>>().windows(2).all(|w| w[1].terminal <= w[0].terminal * (1.0 + 1e-9))
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.records.iter().filter_map(|r| r.ratio_u).collect()
    }
}

#[derive(Clone, Debug)]
pub struct NullControlResult {
    /// Control at half steps.
    pub f: Vec<Field>,
    /// Last frozen controlled trajectory.
    pub trajectory: Trajectory,
    pub ledger: IterationLedger,
    /// Fully nonlinear run driven by `f`.
    pub replay: Trajectory,
    pub replay_terminal: f64,
    pub u_in_norm: f64,
    pub converged: bool,
}

fn sup_norm(a: &[Field], b: &[Field], s: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| sobolev_norm(&x.sub(y), s)).fold(0.0, f64::max)
}

/// Nonlinear run from `u_in` driven by `−iχ_nφF_n` at half steps.
pub fn replay(setup: &ControlSetup, u_in: &Field, chi: &[f64], f: &[Field]) -> Result<Trajectory> {
    let src = |n: usize| control_term(&f[n], chi[n], &setup.phi);
    evolve_nonlinear(&setup.nl, setup.proj, &u_in.project(setup.proj), &setup.tgrid, Some(&src), Direction::Forward, &setup.step)
}

/// Dense free Gramian used to precondition every Picard iteration.
pub fn free_preconditioner(setup: &ControlSetup) -> Result<Arc<DenseGramian>> {
    Ok(Arc::new(DenseGramian::build(&HumOperators::free(setup))?))
}

/// Picard null control `F^{n+1} = 𝓛_P(U^n)U_in`, `U^{n+1}` the frozen controlled solve.
pub fn null_control(
    u_in: &Field,
    setup: &ControlSetup,
    opts: &PicardOptions,
    precond: Option<Arc<DenseGramian>>,
) -> Result<NullControlResult> {
    let grid = setup.grid();
    let tg = setup.tgrid;
    let s = opts.s;
    let u_in = setup.filter(u_in);
    let in_norm = sobolev_norm(&u_in, s);
    if in_norm > opts.eps0 {
        log::warn!("initial datum norm {in_norm:.3e} exceeds the smallness gate {:.1e}", opts.eps0);
    }
    let base = sobolev_norm(&u_in, s - 2.0);
    let mut u_prev = Trajectory::zeros(grid, &tg);
    let mut f_prev = vec![Field::zeros(grid); tg.steps];
    let mut ledger = IterationLedger { records: Vec::new(), rho_max: opts.rho_max };
    let mut warm = Vec::new();
    let mut converged = false;
    let mut increases = 0;
    for it in 1..=opts.max_iter {
        let mut ops = HumOperators::new(setup, &u_prev)?;
        if let Some(p) = &precond {
            ops = ops.with_preconditioner(p.clone());
        }
        let ctl = ops.control_op_p(&u_in, &mut warm, &opts.neumann)?;
        let traj = ops.controlled_solve(&u_in, &ctl.f, true)?;
        let diff_u = sup_norm(&traj.states, &u_prev.states, s - 2.0);
        let diff_f = sup_norm(&ctl.f, &f_prev, s - 2.0);
        let last = ledger.records.last();
        let ratio = |d: f64, p: Option<f64>| p.filter(|&p| p > 0.0).map(|p| d / p);
        let record = IterationRecord {
            iteration: it,
            diff_u,
            diff_f,
            ratio_u: ratio(diff_u, last.map(|r| r.diff_u)),
            ratio_f: ratio(diff_f, last.map(|r| r.diff_f)),
            terminal: sobolev_norm(traj.last(), s),
            cg_iterations: ctl.reports.iter().map(|r| r.iterations).sum(),
            neumann_terms: ctl.reports.len(),
        };
        log::info!("picard {it}: diff_u {diff_u:.3e} diff_f {diff_f:.3e} terminal {:.3e}", record.terminal);
        increases = if record.ratio_u.is_some_and(|q| q > 1.0) { increases + 1 } else { 0 };
        ledger.records.push(record);
        u_prev = traj;
        f_prev = ctl.f;
        if diff_u <= opts.tol * base || base == 0.0 {
            converged = true;
            break;
        }
        if increases >= 2 {
            return Err(Error::Numerical(format!("Picard iteration does not contract: ratios {:?}", ledger.ratios())));
        }
    }
    let chi: Vec<f64> = (0..tg.steps).map(|n| setup.chi_mid(n)).collect();
    let rep = replay(setup, &u_in, &chi, &f_prev)?;
    Ok(NullControlResult {
        replay_terminal: sobolev_norm(rep.last(), s),
        u_in_norm: in_norm,
        f: f_prev,
        trajectory: u_prev,
        ledger,
        replay: rep,
        converged,
    })
}

#[derive(Clone, Debug)]
pub struct ExactControlResult {
    /// Glued control at half steps of the full grid.
    pub f: Vec<Field>,
    /// Glued time window `χ` at half steps.
    pub chi: Vec<f64>,
    pub first: NullControlResult,
    pub second: NullControlResult,
    /// Nonlinear replay of the glued control on `[0, T]`.
    pub replay: Trajectory,
    /// `‖W(T/2)‖_{H^s}` and `‖V(T/2)‖_{H^s}` of the two halves.
    pub junction: (f64, f64),
    /// `‖u(T) − u_end‖_{H^s}`.
    pub terminal_error: f64,
}

/// Setup on `[t0, t0 + T/2]` with the cutoff rescaled to the half horizon.
pub fn half_setup(setup: &ControlSetup) -> Result<ControlSetup> {
    let tg = setup.tgrid;
    if !tg.steps.is_multiple_of(2) {
        return validation("exact control needs an even number of steps");
    }
    let half = tg.horizon() / 2.0;
    let mut h = setup.clone();
    h.tgrid = TimeGrid::new(tg.t0, tg.t0 + half, tg.steps / 2)?;
    h.chi = TimeCutoff::new(half)?;
    Ok(h)
}

/// Steer `u_in` to `u_end` over `[0, T]`: null control of `u_in` on the first half, null
/// control of `ū_end` on the second half read backwards through `v(t) = conj(z(T − t))`.
pub fn exact_control(
    u_in: &Field,
    u_end: &Field,
    setup: &ControlSetup,
    opts: &PicardOptions,
    precond: Option<Arc<DenseGramian>>,
) -> Result<ExactControlResult> {
    let hs = half_setup(setup)?;
    let m = hs.tgrid.steps;
    let (a, b) = exec::join(
        || null_control(u_in, &hs, opts, precond.clone()),
        || null_control(&u_end.conj(), &hs, opts, precond.clone()),
    );
    let (first, second) = (a?, b?);
    let mut f = first.f.clone();
    let mut chi: Vec<f64> = (0..m).map(|n| hs.chi_mid(n)).collect();
    for j in 0..m {
        f.push(second.f[m - 1 - j].conj());
        chi.push(hs.chi_mid(m - 1 - j));
    }
    let s = opts.s;
    let junction = (sobolev_norm(first.replay.last(), s), sobolev_norm(second.replay.last(), s));
    let rep = replay(setup, &setup.filter(u_in), &chi, &f)?;
    let terminal_error = sobolev_norm(&rep.last().sub(&setup.filter(u_end)), s);
    Ok(ExactControlResult { f, chi, first, second, replay: rep, junction, terminal_error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_cutoffs, ControlRegion};
    use crate::grid::{Projection, TorusGrid};
    use crate::model::Nonlinearity;
    use crate::probe::smooth_field;

    fn setup(nl: Nonlinearity) -> ControlSetup {
        let g = TorusGrid::new(2, 16).unwrap();
        let tg = TimeGrid::new(0.0, 1.0, 40).unwrap();
        let c = build_cutoffs(&ControlRegion::crossed_strips(0.5, 0.25).unwrap(), 0.06, 1.0, &g).unwrap();
        let mut s = ControlSetup::new(tg, c.chi, c.phi, Projection::TwoThirds).unwrap();
        s.nl = nl;
        s
    }

    fn datum(g: TorusGrid, seed: u64, amp: f64) -> Field {
        let f = smooth_field(g, seed, 2.0, 1.0);
        f.scale_real(amp / sobolev_norm(&f, s0(2)))
    }

    #[test]
    fn zero_datum_converges_at_once() {
        let s = setup(Nonlinearity::cubic());
        let r = null_control(&Field::zeros(s.grid()), &s, &PicardOptions::new(2), None).unwrap();
        assert!(r.converged && r.ledger.records.len() == 1);
        assert!(r.f.iter().all(|f| f.l2_norm() == 0.0));
    }

    #[test]
    fn linear_equation_converges_in_two_iterations() {
        let s = setup(Nonlinearity::zero());
        let u = datum(s.grid(), 1, 1e-2);
        let r = null_control(&u, &s, &PicardOptions::new(2), None).unwrap();
        assert!(r.converged && r.ledger.records.len() == 2);
        assert!(r.replay_terminal < 1e-6 * r.u_in_norm);
    }

    #[test]
    fn cubic_null_control_contracts() {
        let s = setup(Nonlinearity::cubic());
        let u = datum(s.grid(), 2, 1e-2);
        let p = free_preconditioner(&s).unwrap();
        let r = null_control(&u, &s, &PicardOptions::new(2), Some(p)).unwrap();
        assert!(r.converged, "{:?}", r.ledger);
        assert!(r.ledger.geometric_decay());
        assert!(r.replay_terminal < 1e-5 * r.u_in_norm, "{:e}", r.replay_terminal / r.u_in_norm);
    }

    #[test]
    fn exact_control_with_zero_target() {
        let s = setup(Nonlinearity::cubic());
        let u = datum(s.grid(), 3, 5e-3);
        let r = exact_control(&u, &Field::zeros(s.grid()), &s, &PicardOptions::new(2), None).unwrap();
        assert!(r.second.f.iter().all(|f| f.l2_norm() == 0.0));
        assert!(r.terminal_error < 1e-5 * r.first.u_in_norm);
        assert!(r.chi[r.chi.len() / 2 - 1] == 0.0 && r.chi[r.chi.len() / 2] == 0.0);
    }
}
