//! Symbolic composition and the Bony paraproduct decomposition.

use crate::cutoff::CutoffProfile;
use crate::error::{validation, Result};
use crate::field::Field;
use crate::quantize::bony_weyl_quantize;
use crate::symbol::{SepTerm, TorusSymbol, XiPoly};
use crate::C64;

fn require_separable(a: &TorusSymbol) -> Result<()> {
    if !a.is_separable() {
        return validation("composition needs separable symbols");
    }
    Ok(())
}

/// Pointwise product `ab`.
pub fn symbol_product(a: &TorusSymbol, b: &TorusSymbol) -> Result<TorusSymbol> {
    require_separable(a)?;
    require_separable(b)?;
    a.grid().eq(&b.grid()).then_some(()).ok_or_else(|| crate::Error::Validation("grid mismatch".into()))?;
    let mut out = TorusSymbol::new(a.grid(), a.order + b.order, a.real && b.real);
    for s in &a.terms {
        for t in &b.terms {
            out.terms.push(SepTerm { coeff: s.coeff.mul(&t.coeff), poly: s.poly.mul(&t.poly) });
        }
    }
    Ok(out)
}

/// `{a,b} = Σ_l ∂_{ξ_l}a ∂_{x_l}b − ∂_{x_l}a ∂_{ξ_l}b`.
pub fn poisson_bracket(a: &TorusSymbol, b: &TorusSymbol) -> Result<TorusSymbol> {
    require_separable(a)?;
    require_separable(b)?;
    let dim = a.grid().dim();
    let mut out = TorusSymbol::new(a.grid(), a.order + b.order - 1.0, a.real && b.real);
    for s in &a.terms {
        for t in &b.terms {
            for l in 0..dim {
                let dp = s.poly.derivative(l);
                if !dp.is_zero() {
                    out.terms.push(SepTerm { coeff: s.coeff.mul(&t.coeff.derivative(l)), poly: dp.mul(&t.poly) });
                }
                let dq = t.poly.derivative(l);
                if !dq.is_zero() {
                    out.terms.push(SepTerm {
                        coeff: s.coeff.derivative(l).mul(&t.coeff).scale_real(-1.0),
                        poly: s.poly.mul(&dq),
                    });
                }
            }
        }
    }
    Ok(out)
}

/// `a #_ρ b`: `ab` for `ρ ≤ 1`, `ab + (1/2i){a,b}` for `ρ ∈ (1, 2]`.
pub fn symbol_compose(a: &TorusSymbol, b: &TorusSymbol, rho: f64) -> Result<TorusSymbol> {
    if !(rho > 0.0 && rho <= 2.0) {
        return validation(format!("rho must lie in (0,2], got {rho}"));
    }
    let mut out = symbol_product(a, b)?;
    if rho > 1.0 {
        // 1/(2i) = −i/2
        let br = poisson_bracket(a, b)?.scale(C64::new(0.0, -0.5));
        out = out.add(&br);
        out.real = false;
    }
    out.order = a.order + b.order;
    Ok(out)
}

/// `fg = T_f g + T_g f + R(f,g)`, with `T_f = Op^{BW}(f)` and `R` defined by subtraction.
#[derive(Clone, Debug)]
pub struct Paraproduct {
    pub tf_g: Field,
    pub tg_f: Field,
    pub remainder: Field,
}

pub fn paraproduct_decompose(f: &Field, g: &Field, cutoff: &CutoffProfile) -> Result<Paraproduct> {
    f.check_same_grid(g)?;
    let sf = TorusSymbol::separable(f.clone(), XiPoly::one(), false);
    let sg = TorusSymbol::separable(g.clone(), XiPoly::one(), false);
    let tf_g = bony_weyl_quantize(&sf, g, cutoff)?.field;
    let tg_f = bony_weyl_quantize(&sg, f, cutoff)?.field;
    let remainder = f.mul(g).sub(&tf_g).sub(&tg_f);
    Ok(Paraproduct { tf_g, tg_f, remainder })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;

    #[test]
    fn x_independent_bracket_vanishes() {
        let g = TorusGrid::new(2, 8).unwrap();
        let a = TorusSymbol::fourier_multiplier(g, XiPoly::xi_sq(2));
        let b = TorusSymbol::fourier_multiplier(g, XiPoly::xi(0));
        let br = poisson_bracket(&a, &b).unwrap();
        for xi in [[0.5, 1.0], [-2.0, 3.5]] {
            assert!(br.values_at(xi).iter().all(|v| v.norm() < 1e-14));
        }
    }

    #[test]
    fn bracket_with_xi1_is_minus_dx1() {
        let g = TorusGrid::new(2, 16).unwrap();
        let c = Field::from_fn(g, |x| C64::new((x[0] + 2.0 * x[1]).sin(), x[0].cos()));
        let a = TorusSymbol::separable(c.clone(), XiPoly::one(), false);
        let b = TorusSymbol::fourier_multiplier(g, XiPoly::xi(0));
        let br = poisson_bracket(&a, &b).unwrap();
        let expect = c.derivative(0).scale_real(-1.0).values();
        let got = br.values_at([0.7, -1.2]);
        for (x, y) in got.iter().zip(&expect) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn constant_factor_paraproduct() {
        let g = TorusGrid::new(2, 16).unwrap();
        let f = Field::mode(g, [0, 0], C64::new(2.0, 0.5)).unwrap();
        let h = Field::from_fn(g, |x| C64::new((3.0 * x[0]).cos(), (x[0] - x[1]).sin()));
        let p = paraproduct_decompose(&f, &h, &CutoffProfile::default()).unwrap();
        assert!(p.tf_g.sub(&f.mul(&h)).l2_norm() < 1e-13);
        assert!(p.tg_f.add(&p.remainder).l2_norm() < 1e-13);
        // T_g f only sees frequencies where χ(|j|/(ε⟨j⟩)) > 0
        for (i, c) in p.tg_f.coeffs().iter().enumerate() {
            if g.freq_sq(i) > 9.0 {
                assert_eq!(*c, C64::new(0.0, 0.0));
            }
        }
    }
}
