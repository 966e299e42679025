//! The change of variables `Φ(U̲) = Op^{BW}(S⁻¹(U̲; x))` that diagonalizes the principal part of
//! `𝒜(U̲)`, and the modified energy norm with weight `(1 + h²λ(x)|ξ|²)^σ`.

use crate::cutoff::CutoffProfile;
use crate::error::{validation, Error, Result};
use crate::field::{sobolev_norm, Field};
use crate::grid::{Projection, TorusGrid};
use crate::model::{compute_coefficients, s0, CoefficientSet, Nonlinearity, ParaOperator};
use crate::probe::seeded_field;
use crate::quantize::{PairTable, Quantizer};
use crate::symbol::{SymbolTable, TorusSymbol};
use crate::C64;
use std::sync::Arc;

/// First component of `Op^{BW}([[a, b], [b̄, a]])` on a pair: `w ↦ Op(a)w + Op(b)w̄`.
#[derive(Clone)]
pub struct PairMultiplier {
    grid: TorusGrid,
    table: Arc<PairTable>,
    lin: Vec<C64>,
    anti: Vec<C64>,
}

impl PairMultiplier {
    pub fn new(a: &Field, b: &Field, cutoff: &CutoffProfile, proj: Projection) -> Self {
        let grid = a.grid();
        Self {
            grid,
            table: PairTable::get(grid, Some(cutoff), proj),
            lin: a.coeffs().to_vec(),
            anti: b.coeffs().to_vec(),
        }
    }

    pub fn apply(&self, w: &Field) -> Field {
        let g = w.coeffs();
        let h: Vec<C64> = (0..self.grid.len()).map(|i| g[self.grid.neg_index(i)].conj()).collect();
        let a = self.table.apply_with(g, |m, _, _| self.lin[m]);
        let b = self.table.apply_with(&h, |m, _, _| self.anti[m]);
        let c = a.into_iter().zip(b).map(|(x, y)| x + y).collect();
        Field::from_coeffs(self.grid, c).expect("length")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannDepth {
    pub max_depth: usize,
    pub tail_tol: f64,
}

impl Default for NeumannDepth {
    fn default() -> Self {
        Self { max_depth: 40, tail_tol: 1e-10 }
    }
}

/// `Φ` and its inverse `(𝟙 + Q)⁻¹ Op(S)`, `Q = Op(S)Φ − 𝟙`.
#[derive(Clone)]
pub struct DiagonalizationMap {
    pub coeffs: CoefficientSet,
    forward: PairMultiplier,
    s_op: PairMultiplier,
    depth: NeumannDepth,
    /// Estimated `‖Q‖` from a short power iteration.
    pub q_norm: f64,
    /// Power-iteration steps behind `q_norm`.
    pub probe_depth: usize,
    identity: bool,
}

/// Build `Φ(U̲)`; fails when `‖Q‖ ≥ 1` on a probe.
pub fn build_phi(u: &Field, nl: &Nonlinearity, cutoff: &CutoffProfile, proj: Projection, depth: NeumannDepth) -> Result<DiagonalizationMap> {
    let coeffs = compute_coefficients(u, nl);
    let grid = u.grid();
    let minus_s2 = coeffs.s2.scale_real(-1.0);
    let forward = PairMultiplier::new(&coeffs.s1, &minus_s2, cutoff, proj);
    let s_op = PairMultiplier::new(&coeffs.s1, &coeffs.s2, cutoff, proj);
    let identity = coeffs.s2.max_abs_coeff() == 0.0 && coeffs.a2.max_abs_coeff() == 0.0;
    let mut map = DiagonalizationMap { coeffs, forward, s_op, depth, q_norm: 0.0, probe_depth: 0, identity };
    if !identity {
        let mut x = seeded_field(grid, 17).project(proj);
        x = x.scale_real(1.0 / x.l2_norm());
        let mut est = 0.0;
        for it in 0..8 {
            let y = map.q_apply(&x);
            est = y.l2_norm();
            map.probe_depth = it + 1;
            if est == 0.0 {
                break;
            }
            x = y.scale_real(1.0 / est);
        }
        map.q_norm = est;
        if est >= 1.0 {
            return Err(Error::Numerical(format!("Neumann series for Φ⁻¹ does not contract: ‖Q‖ ≈ {est:.3}")));
        }
    }
    Ok(map)
}

impl DiagonalizationMap {
    pub fn is_identity(&self) -> bool {
        self.identity
    }

    /// `ΦW` (first component).
    pub fn forward(&self, w: &Field) -> Field {
        if self.identity {
            return w.clone();
        }
        self.forward.apply(w)
    }

    fn q_apply(&self, w: &Field) -> Field {
        self.s_op.apply(&self.forward.apply(w)).sub(w)
    }

    /// `Φ⁻¹W` by the Neumann series for `(𝟙 + Q)⁻¹` applied to `Op(S)W`.
    pub fn inverse(&self, w: &Field) -> Result<Field> {
        if self.identity {
            return Ok(w.clone());
        }
        let y = self.s_op.apply(w);
        let scale = y.l2_norm().max(f64::MIN_POSITIVE);
        let mut term = y.clone();
        let mut sum = y;
        for _ in 0..self.depth.max_depth {
            term = self.q_apply(&term).scale_real(-1.0);
            sum.axpy_real(1.0, &term);
            if term.l2_norm() <= self.depth.tail_tol * scale {
                return Ok(sum);
            }
        }
        Err(Error::Numerical(format!(
            "Neumann series for Φ⁻¹ did not reach tail {:.1e} in {} terms",
            self.depth.tail_tol, self.depth.max_depth
        )))
    }

    /// `‖(Φ − 𝟙)W‖ / ‖W‖`.
    pub fn near_identity_ratio(&self, w: &Field) -> f64 {
        self.forward(w).sub(w).l2_norm() / w.l2_norm()
    }
}

/// Diagonal target `−(Op(λ|ξ|²) + Op(a⃗₁·ξ))` as a paradifferential operator.
fn diagonal_target(coeffs: &CoefficientSet, cutoff: &CutoffProfile, proj: Projection) -> ParaOperator {
    let mut c = coeffs.clone();
    c.a2 = coeffs.lambda.sub(&Field::mode(coeffs.lambda.grid(), [0, 0], C64::new(1.0, 0.0)).expect("mode"));
    c.b2 = Field::zeros(coeffs.b2.grid());
    ParaOperator::new(&c, cutoff, proj)
}

/// Defects of the conjugated and unconjugated operators against the diagonal target.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DefectPair {
    pub conjugated: f64,
    pub unconjugated: f64,
}

/// `‖[Φ𝒜Φ⁻¹ − (−Op(λ|ξ|²) − Op(a⃗₁·ξ))]W‖_{L²}` and the same without conjugation.
pub fn diagonal_defect(map: &DiagonalizationMap, w: &Field, cutoff: &CutoffProfile, proj: Projection) -> Result<DefectPair> {
    let a = ParaOperator::new(&map.coeffs, cutoff, proj);
    let target = diagonal_target(&map.coeffs, cutoff, proj);
    // 𝒜 maps real pairs (w, w̄) to (x, −x̄); i𝒜 keeps the pair structure that Φ acts on
    let tw = target.apply_i_a(w);
    let conj = map.forward(&a.apply_i_a(&map.inverse(w)?)).sub(&tw);
    let unconj = a.apply_i_a(w).sub(&tw);
    Ok(DefectPair { conjugated: conj.l2_norm(), unconjugated: unconj.l2_norm() })
}

/// `‖W‖_{σ,U̲} = ⟨Op^{BW}((1 + h²λ|ξ|²)^σ)w, w⟩^{1/2}`.
pub fn modified_energy_norm(u: &Field, w: &Field, nl: &Nonlinearity, sigma: f64, h: f64, cutoff: &CutoffProfile) -> Result<f64> {
    if !(h > 0.0 && h <= 1.0) {
        return validation(format!("semiclassical parameter must lie in (0, 1], got {h}"));
    }
    let grid = u.grid();
    let coeffs = compute_coefficients(u, nl);
    let lam = coeffs.lambda_values;
    let h2 = h * h;
    let form = if coeffs.a2.max_abs_coeff() == 0.0 {
        // λ ≡ 1: exact Fourier multiplier
        w.coeffs()
            .iter()
            .enumerate()
            .map(|(i, c)| (1.0 + h2 * grid.freq_sq(i)).powf(sigma) * c.norm_sqr())
            .sum::<f64>()
    } else {
        let n = grid.n();
        let table = SymbolTable::build(grid, |x, xi| {
            let i = if grid.dim() == 1 {
                (x[0] / grid.spacing()).round() as usize % n
            } else {
                ((x[0] / grid.spacing()).round() as usize % n) * n + (x[1] / grid.spacing()).round() as usize % n
            };
            C64::new((1.0 + h2 * lam[i] * (xi[0] * xi[0] + xi[1] * xi[1])).powf(sigma), 0.0)
        })?;
        let sym = TorusSymbol::tabulated(grid, table, 2.0 * sigma, true);
        let q = Quantizer::new(&sym, Some(cutoff), Projection::Full).apply(w)?;
        q.field.re_inner(w)
    };
    if !(form > 0.0) && w.l2_norm() > 0.0 {
        return Err(Error::Numerical(format!("modified energy form is not positive: {form:e}")));
    }
    Ok(form.max(0.0).sqrt())
}

/// Smallness of the state in the gate norm.
pub fn gate_norm(u: &Field) -> f64 {
    sobolev_norm(u, s0(u.grid().dim()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::semiclassical_norm;
    use crate::probe::smooth_field;

    fn small(g: TorusGrid, seed: u64, amp: f64) -> Field {
        let f = smooth_field(g, seed, 2.0, 1.0);
        f.scale_real(amp / gate_norm(&f))
    }

    #[test]
    fn zero_state_is_identity() {
        let g = TorusGrid::new(2, 16).unwrap();
        let cut = CutoffProfile::default();
        let m = build_phi(&Field::zeros(g), &Nonlinearity::cubic(), &cut, Projection::Nyquist, NeumannDepth::default()).unwrap();
        assert!(m.is_identity());
        let w = seeded_field(g, 1).project(Projection::Nyquist);
        assert_eq!(m.forward(&w).coeffs(), w.coeffs());
        let d = diagonal_defect(&m, &w, &cut, Projection::Nyquist).unwrap();
        assert!(d.conjugated < 1e-12 && d.unconjugated < 1e-12);
    }

    #[test]
    fn round_trip_and_near_identity() {
        let g = TorusGrid::new(2, 16).unwrap();
        let cut = CutoffProfile::default();
        let p = Projection::Nyquist;
        let mut ratios = Vec::new();
        for amp in [0.05, 0.5] {
            let u = small(g, 3, amp);
            let m = build_phi(&u, &Nonlinearity::cubic(), &cut, p, NeumannDepth::default()).unwrap();
            let w = seeded_field(g, 2).project(p);
            let back = m.forward(&m.inverse(&w).unwrap());
            assert!(back.sub(&w).l2_norm() < 1e-8 * w.l2_norm());
            let fwd = m.inverse(&m.forward(&w)).unwrap();
            assert!(fwd.sub(&w).l2_norm() < 1e-8 * w.l2_norm());
            ratios.push(m.near_identity_ratio(&w) / amp);
        }
        // s₂ is quadratic in u, so ‖Φ − 𝟙‖/‖U̲‖ shrinks with the amplitude
        assert!(ratios[0] < ratios[1]);
    }

    #[test]
    fn modified_norm_limits() {
        let g = TorusGrid::new(2, 16).unwrap();
        let cut = CutoffProfile::default();
        let w = smooth_field(g, 4, 4.0, 1.0);
        let nl = Nonlinearity::cubic();
        let n0 = modified_energy_norm(&Field::zeros(g), &w, &nl, 1.5, 1.0, &cut).unwrap();
        assert!((n0 - sobolev_norm(&w, 1.5)).abs() < 1e-12 * n0);
        let u = small(g, 5, 1e-2);
        let l2 = modified_energy_norm(&u, &w, &nl, 0.0, 0.5, &cut).unwrap();
        assert!((l2 - w.l2_norm()).abs() < 1e-10);
        let m = modified_energy_norm(&u, &w, &nl, 1.0, 0.5, &cut).unwrap();
        let r = m / semiclassical_norm(&w, 1.0, 0.5).unwrap();
        assert!((0.9..=1.1).contains(&r), "{r}");
    }

    #[test]
    fn conjugation_removes_second_order_coupling() {
        let g = TorusGrid::new(2, 32).unwrap();
        let cut = CutoffProfile::default();
        let p = Projection::Nyquist;
        let u = small(g, 3, 0.05);
        let m = build_phi(&u, &Nonlinearity::cubic(), &cut, p, NeumannDepth::default()).unwrap();
        let d: Vec<DefectPair> = [3i64, 6, 12]
            .iter()
            .map(|&k| diagonal_defect(&m, &Field::mode(g, [k, 0], C64::new(1.0, 0.0)).unwrap(), &cut, p).unwrap())
            .collect();
        assert!(d[2].conjugated < 1.5 * d[0].conjugated);
        assert!(d[2].unconjugated > 10.0 * d[0].unconjugated);
        assert!(d[2].conjugated < 0.05 * d[2].unconjugated);
    }
}
