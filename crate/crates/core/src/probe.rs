//! Power-iteration estimates of `H^s → H^{s−m}` operator norms under grid refinement.

use crate::field::Field;
use crate::grid::TorusGrid;
use crate::C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Linear operator on spectral fields of one grid.
pub trait LinearOperator {
    fn grid(&self) -> TorusGrid;
    fn apply(&self, g: &Field) -> Field;
    /// `L²` adjoint, when known; enables the `B*B` iteration.
    fn apply_adjoint(&self, _g: &Field) -> Option<Field> {
        None
    }
}

/// Operator given by closures.
pub struct FnOperator<F, G> {
    pub grid: TorusGrid,
    pub f: F,
    pub adjoint: Option<G>,
}

impl<F: Fn(&Field) -> Field, G: Fn(&Field) -> Field> LinearOperator for FnOperator<F, G> {
    fn grid(&self) -> TorusGrid {
        self.grid
    }
    fn apply(&self, g: &Field) -> Field {
        (self.f)(g)
    }
    fn apply_adjoint(&self, g: &Field) -> Option<Field> {
        self.adjoint.as_ref().map(|a| a(g))
    }
}

/// Deterministic complex samples with components uniform on `[−1/2, 1/2)`.
pub fn seeded_field(grid: TorusGrid, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next = move || rng.gen::<f64>() - 0.5;
    let c = (0..grid.len()).map(|_| C64::new(next(), next())).collect();
    Field::from_coeffs(grid, c).expect("length matches")
}

/// Smooth random field: seeded coefficients damped by `exp(−|k|²/radius²)`, scaled to L² norm `amp`.
pub fn smooth_field(grid: TorusGrid, seed: u64, radius: f64, amp: f64) -> Field {
    let f = seeded_field(grid, seed).multiplier(|k| {
        let k2 = (k[0] * k[0] + k[1] * k[1]) as f64;
        C64::new((-k2 / (radius * radius)).exp(), 0.0)
    });
    let n = f.l2_norm();
    f.scale_real(amp / n)
}

#[derive(Clone, Debug)]
pub struct NormEstimate {
    pub n: usize,
    pub s: f64,
    pub norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug)]
pub struct OrderReport {
    pub order: f64,
    pub estimates: Vec<NormEstimate>,
    /// `(s, N_coarse, N_fine, ratio)` where the estimate grew by more than 1.5×.
    pub violations: Vec<(f64, usize, usize, f64)>,
}

impl OrderReport {
    pub fn all_converged(&self) -> bool {
        self.estimates.iter().all(|e| e.converged)
    }
}

fn weight(f: &Field, p: f64) -> Field {
    let g = f.grid();
    let mut o = f.clone();
    for (i, c) in o.coeffs_mut().iter_mut().enumerate() {
        *c *= (1.0 + g.freq_sq(i)).powf(p / 2.0);
    }
    o
}

/// `‖Λ^{s−m} A Λ^{−s}‖_{L²→L²}` by power iteration (on `B*B` when the adjoint is known).
pub fn sobolev_operator_norm(op: &dyn LinearOperator, m: f64, s: f64, max_iter: usize, tol: f64) -> NormEstimate {
    let grid = op.grid();
    let b = |x: &Field| weight(&op.apply(&weight(x, -s)), s - m);
    let bt = |x: &Field| op.apply_adjoint(&weight(x, s - m)).map(|y| weight(&y, -s));
    let mut x = seeded_field(grid, 17);
    let nx = x.l2_norm();
    x = x.scale_real(1.0 / nx);
    let mut est = 0.0;
    let has_adj = op.apply_adjoint(&Field::zeros(grid)).is_some();
    for it in 1..=max_iter {
        let y = b(&x);
        let ny = y.l2_norm();
        let (next, val) = if has_adj {
            let z = bt(&y).expect("adjoint");
            let nz = z.l2_norm();
            (z.scale_real(1.0 / nz.max(1e-300)), ny)
        } else {
            (y.scale_real(1.0 / ny.max(1e-300)), ny)
        };
        if ny == 0.0 {
            return NormEstimate { n: grid.n(), s, norm: 0.0, iterations: it, converged: true };
        }
        let done = it > 3 && (val - est).abs() <= tol * val;
        est = val;
        x = next;
        if done {
            return NormEstimate { n: grid.n(), s, norm: est, iterations: it, converged: true };
        }
    }
    NormEstimate { n: grid.n(), s, norm: est, iterations: max_iter, converged: false }
}

/// Run the probe at every `N` and `s`, flagging growth above 1.5× between successive `N`.
pub fn operator_order_probe(
    build: &dyn Fn(TorusGrid) -> Box<dyn LinearOperator>,
    dim: usize,
    m: f64,
    s_range: &[f64],
    ns: &[usize],
) -> crate::Result<OrderReport> {
    let mut estimates = Vec::new();
    let mut violations = Vec::new();
    for &s in s_range {
        let mut prev: Option<NormEstimate> = None;
        for &n in ns {
            let grid = TorusGrid::new(dim, n)?;
            let op = build(grid);
            let e = sobolev_operator_norm(op.as_ref(), m, s, 500, 1e-6);
            if let Some(p) = &prev {
                let r = e.norm / p.norm.max(1e-300);
                if r > 1.5 {
                    violations.push((s, p.n, n, r));
                }
            }
            prev = Some(e.clone());
            estimates.push(e);
        }
    }
    Ok(OrderReport { order: m, estimates, violations })
}
