//! Subcommand drivers.

use crate::artifacts::{fmt_f, Artifacts};
use crate::config::ExperimentConfig;
use anyhow::Result;
use qls_core::cutoff::CutoffProfile;
use qls_core::diagonalize::{build_phi, diagonal_defect, NeumannDepth};
use qls_core::evolve::{evolve_linear, evolve_nonlinear, Direction, ParaGenerator, StepOptions, TimeGrid, Trajectory};
use qls_core::field::{pair_dot, sobolev_norm};
use qls_core::geometry::{build_cutoffs, check_gcc, ControlRegion};
use qls_core::hum::{observability_constant, ControlSetup, HumOperators, NeumannOptions};
use qls_core::model::{control_term, frozen_linear_rhs, full_nonlinear_rhs, s0, smallness_gate};
use qls_core::nonlinear::{exact_control, free_preconditioner, half_setup, null_control, NullControlResult, PicardOptions};
use qls_core::probe::seeded_field;
use qls_core::{Field, C64};
use std::path::Path;

/// Everything a subcommand needs.
pub struct Context<'a> {
    pub cfg: &'a ExperimentConfig,
    /// Directory of the config file, for relative data paths.
    pub base: &'a Path,
    pub out: &'a mut Artifacts,
}

impl Context<'_> {
    fn tgrid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(0.0, self.cfg.time.horizon, self.cfg.time.steps)?)
    }

    fn region(&self) -> Result<ControlRegion> {
        if self.cfg.region.is_empty() {
            Ok(ControlRegion::whole(self.cfg.grid.dim))
        } else {
            self.cfg.control_region()
        }
    }

    fn setup(&self) -> Result<ControlSetup> {
        let cfg = self.cfg;
        let g = cfg.torus()?;
        let c = build_cutoffs(&self.region()?, cfg.hum.mollify, cfg.time.horizon, &g)?;
        let mut s = ControlSetup::new(self.tgrid()?, c.chi, c.phi, cfg.projection())?.with_gamma(cfg.hum.gamma)?;
        s.cg.tol = cfg.hum.cg_tol;
        s.cg.max_iter = cfg.hum.cg_max_iter;
        s.penalty = cfg.hum.mu;
        s.cutoff = CutoffProfile::new(cfg.hum.epsilon)?;
        s.nl = cfg.nonlinearity()?;
        Ok(s)
    }

    fn picard(&self) -> PicardOptions {
        let it = &self.cfg.iteration;
        let mut o = PicardOptions::new(self.cfg.grid.dim);
        o.max_iter = it.max_iter;
        o.tol = it.tol;
        o.rho_max = it.rho_max;
        o.eps0 = it.eps0;
        o.neumann = NeumannOptions { tol: it.neumann_tol, max_terms: it.neumann_max_terms };
        o
    }

    fn initial(&self) -> Result<Field> {
        self.cfg.datum(&self.cfg.initial, self.base)
    }

    fn norm_table(&mut self, name: &str, tr: &Trajectory, reference: Option<&Field>) -> Result<()> {
        let s = s0(self.cfg.grid.dim);
        let rows: Vec<Vec<String>> = tr
            .states
            .iter()
            .enumerate()
            .map(|(n, u)| {
                let mut r = vec![n.to_string(), fmt_f(tr.times[n]), fmt_f(u.l2_norm()), fmt_f(sobolev_norm(u, s))];
                if let Some(f) = reference {
                    r.push(fmt_f(sobolev_norm(&u.sub(f), s)));
                }
                r
            })
            .collect();
        let mut header = vec!["step", "time", "l2_norm", "hs_norm"];
        if reference.is_some() {
            header.push("hs_distance_to_target");
        }
        self.out.table(name, &header, &rows)
    }
}

pub fn check_gcc_cmd(ctx: &mut Context) -> Result<()> {
    let r = check_gcc(&ctx.cfg.control_region()?, &ctx.cfg.gcc.into(), ctx.cfg.time.horizon)?;
    let w = r.witness.map_or(["".to_string(), "".into(), "".into(), "".into()], |w| {
        [fmt_f(w.start[0]), fmt_f(w.start[1]), fmt_f(w.dir[0]), fmt_f(w.dir[1])]
    });
    let row = vec![
        r.satisfied.to_string(),
        fmt_f(r.l_min),
        fmt_f(r.nu),
        r.rays.to_string(),
        w[0].clone(),
        w[1].clone(),
        w[2].clone(),
        w[3].clone(),
        r.witness_verified.to_string(),
    ];
    ctx.out.table(
        "gcc.csv",
        &["satisfied", "l_min", "nu", "rays", "witness_x", "witness_y", "witness_dx", "witness_dy", "witness_verified"],
        &[row],
    )?;
    ctx.out.check_flag("gcc_satisfied", r.satisfied);
    Ok(())
}

pub fn solve_cmd(ctx: &mut Context) -> Result<()> {
    let p = ctx.cfg.projection();
    let u0 = ctx.initial()?.project(p);
    smallness_gate(&u0, ctx.cfg.iteration.eps0);
    let tr = evolve_nonlinear(&ctx.cfg.nonlinearity()?, p, &u0, &ctx.tgrid()?, None, Direction::Forward, &StepOptions::default())?;
    let m0 = u0.l2_norm().powi(2);
    let s = s0(ctx.cfg.grid.dim);
    let mut drift_max = 0.0f64;
    let rows: Vec<Vec<String>> = tr
        .states
        .iter()
        .enumerate()
        .map(|(n, u)| {
            let m = u.l2_norm().powi(2);
            let drift = if m0 > 0.0 { (m - m0).abs() / m0 } else { m };
            drift_max = drift_max.max(drift);
            vec![n.to_string(), fmt_f(tr.times[n]), fmt_f(m), fmt_f(drift), fmt_f(sobolev_norm(u, s))]
        })
        .collect();
    ctx.out.table("conservation.csv", &["step", "time", "mass", "mass_drift", "hs_norm"], &rows)?;
    ctx.out.field("initial", &u0)?;
    ctx.out.field("final", tr.last())?;
    ctx.out.trajectory("trajectory", &tr)?;
    ctx.out.check_le("mass_drift", drift_max, ctx.cfg.tolerances.mass_drift);
    Ok(())
}

pub fn hum_control_cmd(ctx: &mut Context) -> Result<()> {
    let setup = ctx.setup()?;
    let ops = HumOperators::free(&setup);
    let u_in = setup.filter(&ctx.initial()?);
    let mut c = ops.control_op(&u_in)?;
    let tr = ops.controlled_solve(&u_in, &c.f, false)?;
    let n_in = u_in.l2_norm();
    let ratio = if n_in > 0.0 { tr.last().l2_norm() / n_in } else { tr.last().l2_norm() };
    c.report.terminal_norm = Some(tr.last().l2_norm());
    c.report.terminal_ratio = Some(ratio);
    ctx.out.text("hum_report.txt", &c.report.to_string())?;
    let rows: Vec<Vec<String>> = (0..setup.tgrid.steps)
        .map(|n| {
            let applied = control_term(&c.f[n], setup.chi_mid(n), &setup.phi);
            vec![n.to_string(), fmt_f(setup.tgrid.mid(n)), fmt_f(applied.l2_norm()), fmt_f(tr.states[n + 1].l2_norm())]
        })
        .collect();
    ctx.out.table("control.csv", &["step", "t_mid", "control_l2", "state_l2_after"], &rows)?;
    ctx.out.field("v0", &c.v0)?;
    ctx.out.field("final", tr.last())?;
    ctx.out.trajectory("trajectory", &tr)?;
    ctx.out.check_flag("cg_converged", c.report.converged);
    ctx.out.check_le("terminal_ratio", ratio, ctx.cfg.tolerances.linear_terminal);
    Ok(())
}

fn picard_table(out: &mut Artifacts, name: &str, r: &NullControlResult) -> Result<()> {
    let opt = |v: Option<f64>| v.map_or(String::new(), fmt_f);
    let rows: Vec<Vec<String>> = r
        .ledger
        .records
        .iter()
        .map(|x| {
            vec![
                x.iteration.to_string(),
                fmt_f(x.diff_u),
                fmt_f(x.diff_f),
                opt(x.ratio_u),
                opt(x.ratio_f),
                fmt_f(x.terminal),
                x.cg_iterations.to_string(),
                x.neumann_terms.to_string(),
            ]
        })
        .collect();
    out.table(
        name,
        &["iteration", "diff_u", "diff_f", "ratio_u", "ratio_f", "terminal_hs", "cg_iterations", "neumann_terms"],
        &rows,
    )
}

pub fn nonlinear_control_cmd(ctx: &mut Context) -> Result<()> {
    let setup = ctx.setup()?;
    let pre = if ctx.cfg.iteration.precondition { Some(free_preconditioner(&setup)?) } else { None };
    let r = null_control(&ctx.initial()?, &setup, &ctx.picard(), pre)?;
    picard_table(ctx.out, "picard.csv", &r)?;
    ctx.norm_table("replay.csv", &r.replay, None)?;
    let rel = if r.u_in_norm > 0.0 { r.replay_terminal / r.u_in_norm } else { r.replay_terminal };
    ctx.out.records(
        "verdict.txt",
        &[
            ("converged", r.converged.to_string()),
            ("iterations", r.ledger.records.len().to_string()),
            ("u_in_hs", fmt_f(r.u_in_norm)),
            ("replay_terminal_hs", fmt_f(r.replay_terminal)),
            ("replay_terminal_relative", fmt_f(rel)),
            ("geometric_decay", r.ledger.geometric_decay().to_string()),
        ],
    )?;
    ctx.out.field("final", r.replay.last())?;
    ctx.out.trajectory("replay", &r.replay)?;
    ctx.out.check_flag("picard_converged", r.converged);
    ctx.out.check_flag("geometric_decay", r.ledger.geometric_decay());
    ctx.out.check_le("replay_terminal_relative", rel, ctx.cfg.tolerances.nonlinear_terminal);
    Ok(())
}

pub fn exact_control_cmd(ctx: &mut Context) -> Result<()> {
    let setup = ctx.setup()?;
    let pre = if ctx.cfg.iteration.precondition { Some(free_preconditioner(&half_setup(&setup)?)?) } else { None };
    let u_in = ctx.initial()?;
    let u_end = ctx.cfg.datum(&ctx.cfg.target, ctx.base)?;
    let r = exact_control(&u_in, &u_end, &setup, &ctx.picard(), pre)?;
    picard_table(ctx.out, "picard_first.csv", &r.first)?;
    picard_table(ctx.out, "picard_second.csv", &r.second)?;
    let rows: Vec<Vec<String>> = (0..r.f.len())
        .map(|n| {
            let applied = control_term(&r.f[n], r.chi[n], &setup.phi);
            vec![n.to_string(), fmt_f(setup.tgrid.mid(n)), fmt_f(r.chi[n]), fmt_f(applied.l2_norm())]
        })
        .collect();
    ctx.out.table("control.csv", &["step", "t_mid", "chi", "control_l2"], &rows)?;
    let target = setup.filter(&u_end);
    ctx.norm_table("replay.csv", &r.replay, Some(&target))?;
    let s = s0(ctx.cfg.grid.dim);
    let scale = sobolev_norm(&target, s).max(sobolev_norm(&setup.filter(&u_in), s));
    let rel = if scale > 0.0 { r.terminal_error / scale } else { r.terminal_error };
    ctx.out.records(
        "verdict.txt",
        &[
            ("junction_first_hs", fmt_f(r.junction.0)),
            ("junction_second_hs", fmt_f(r.junction.1)),
            ("terminal_error_hs", fmt_f(r.terminal_error)),
            ("terminal_error_relative", fmt_f(rel)),
        ],
    )?;
    ctx.out.field("final", r.replay.last())?;
    ctx.out.trajectory("replay", &r.replay)?;
    ctx.out.check_flag("first_converged", r.first.converged);
    ctx.out.check_flag("second_converged", r.second.converged);
    ctx.out.check_le("terminal_error_relative", rel, ctx.cfg.tolerances.exact_terminal);
    Ok(())
}

pub fn diagnose_cmd(ctx: &mut Context) -> Result<()> {
    let cfg = ctx.cfg;
    let tol = cfg.tolerances;
    let setup = ctx.setup()?;
    let g = setup.grid();
    let p = setup.proj;
    let tg = setup.tgrid;
    let nl = setup.nl.clone();
    let u = ctx.initial()?.project(p);
    let background = evolve_nonlinear(&nl, p, &u, &tg, None, Direction::Forward, &StepOptions::default())?;
    let seed = cfg.seed;
    let probe = |k: u64| seeded_field(g, seed.wrapping_mul(1000).wrapping_add(k)).project(p);
    let f: Vec<Field> = (0..tg.steps as u64).map(|n| probe(100 + n)).collect();
    let v0 = probe(1);

    let free = HumOperators::free(&setup);
    ctx.out.check_le("duality_free", free.duality_check(&f, &v0)?, tol.duality);
    let ops = HumOperators::new(&setup, &background)?;
    ctx.out.check_le("duality_frozen", ops.duality_check(&f, &v0)?, tol.duality_frozen);

    let (a, b) = (probe(2), probe(3));
    let kab = pair_dot(&ops.hum_apply(&a)?, &b);
    let kba = pair_dot(&a, &ops.hum_apply(&b)?);
    ctx.out.check_le("gramian_symmetry", (kab - kba).abs() / kab.abs().max(kba.abs()).max(1e-300), tol.symmetry);
    let energy = ops.observed_energy(&a)?;
    ctx.out.check_flag("gramian_positive", energy > 0.0);

    let fwd = ParaGenerator::new(&background, &nl, &setup.cutoff, p, 1.0);
    let adj = ParaGenerator::new(&background, &nl, &setup.cutoff, p, -1.0);
    let so = StepOptions::default();
    let wu = evolve_linear(&fwd, &a, &tg, None, Direction::Forward, &so)?;
    let wv = evolve_linear(&adj, &b, &tg, None, Direction::Forward, &so)?;
    let p0 = pair_dot(&a, &b);
    let scale = a.l2_norm() * b.l2_norm();
    let pairing = (0..=tg.steps).map(|n| (pair_dot(&wu.states[n], &wv.states[n]) - p0).abs() / scale).fold(0.0, f64::max);
    ctx.out.check_le("adjoint_pairing_drift", pairing, tol.pairing);

    let phi_one = Field::mode(g, [0, 0], C64::new(1.0, 0.0))?;
    let full = full_nonlinear_rhs(&u, &nl, None, 0.0, &phi_one, p);
    let frozen = frozen_linear_rhs(&u, &u, &nl, p);
    ctx.out.check_le("frozen_consistency", full.sub(&frozen).l2_norm() / full.l2_norm().max(1.0), tol.consistency);

    let obs = observability_constant(&free, &probe(4), 60, 1e-6)?;
    ctx.out.check_flag("observability_positive", obs.c_min > 0.0 && !obs.degenerate);

    let map = build_phi(&u, &nl, &setup.cutoff, p, NeumannDepth::default())?;
    let w = probe(5);
    ctx.out.check_le("diagonalization_near_identity", map.near_identity_ratio(&w), tol.near_identity);
    let n = g.n() as i64;
    let mut defect_rows = Vec::new();
    for k in [n / 8, n / 4, n / 2 - n / 8] {
        let wk = Field::mode(g, [k, 0], C64::new(1.0, 0.0))?.project(p);
        if wk.l2_norm() == 0.0 {
            continue;
        }
        let d = diagonal_defect(&map, &wk, &setup.cutoff, p)?;
        defect_rows.push(vec![k.to_string(), fmt_f(d.conjugated), fmt_f(d.unconjugated)]);
    }
    ctx.out.table("diagonalization.csv", &["k", "conjugated_defect", "unconjugated_defect"], &defect_rows)?;
    ctx.out.records(
        "observability.txt",
        &[("c_min", fmt_f(obs.c_min)), ("iterations", obs.iterations.to_string()), ("degenerate", obs.degenerate.to_string())],
    )?;
    ctx.out.field("observability_mode", &obs.mode)?;
    Ok(())
}
