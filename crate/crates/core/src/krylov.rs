//! Krylov solvers for real-linear operators on spectral fields.
//!
//! Fields are treated as vectors in ℝ^{2n} with the inner product `Re⟨x, y⟩`, so operators
//! that mix `w` and `w̄` are handled without special casing.

use crate::error::{Error, Result};
use crate::field::Field;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KrylovOptions {
    /// Relative residual target.
    pub tol: f64,
    /// Absolute residual floor; the solve stops at `max(tol·‖b‖, abs_tol)`.
    pub abs_tol: f64,
    pub restart: usize,
    pub max_iter: usize,
}

impl Default for KrylovOptions {
    fn default() -> Self {
        Self { tol: 1e-10, abs_tol: 0.0, restart: 50, max_iter: 300 }
    }
}

impl KrylovOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_abs_tol(mut self, abs_tol: f64) -> Self {
        self.abs_tol = abs_tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

#[derive(Clone, Debug)]
pub struct KrylovSolution {
    pub x: Field,
    pub iterations: usize,
    /// Final residual norm (true residual for CG, recurrence residual for GMRES).
    pub residual: f64,
    /// Residual norm after each iteration.
    pub history: Vec<f64>,
}

fn dot(a: &Field, b: &Field) -> f64 {
    a.re_inner(b)
}

fn norm(a: &Field) -> f64 {
    a.l2_norm()
}

fn check_finite(v: f64, what: &str) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::Numerical(format!("{what}: non-finite value encountered")))
    }
}

/// Right-preconditioned restarted GMRES; `precond` approximates the inverse of `op`.
pub fn gmres(
    op: &dyn Fn(&Field) -> Field,
    b: &Field,
    x0: Option<&Field>,
    precond: Option<&dyn Fn(&Field) -> Field>,
    opts: &KrylovOptions,
) -> Result<KrylovSolution> {
    let grid = b.grid();
    let bnorm = norm(b);
    let target = (opts.tol * bnorm).max(opts.abs_tol);
    let mut x = x0.cloned().unwrap_or_else(|| Field::zeros(grid));
    let mut history = Vec::new();
    let mut iterations = 0;
    let m = opts.restart.max(1);
    let pre = |v: &Field| match precond {
        Some(p) => p(v),
        None => v.clone(),
    };
    let mut r = if x0.is_some() { b.sub(&op(&x)) } else { b.clone() };
    let mut beta = norm(&r);
    check_finite(beta, "gmres")?;
    if beta <= target {
        return Ok(KrylovSolution { x, iterations, residual: beta, history });
    }
    loop {
        let mut v: Vec<Field> = vec![r.scale_real(1.0 / beta)];
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut gvec = vec![0.0; m + 1];
        gvec[0] = beta;
        let mut k_used = 0;
        let mut res;
        for j in 0..m {
            let mut w = op(&pre(&v[j]));
            for (i, vi) in v.iter().enumerate() {
                h[i][j] = dot(vi, &w);
                w.axpy_real(-h[i][j], vi);
            }
            // second Gram-Schmidt pass keeps the basis orthogonal at 1e-10 targets
            for (i, vi) in v.iter().enumerate() {
                let c = dot(vi, &w);
                h[i][j] += c;
                w.axpy_real(-c, vi);
            }
            let hn = norm(&w);
            check_finite(hn, "gmres")?;
            h[j + 1][j] = hn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let den = h[j][j].hypot(h[j + 1][j]);
            cs[j] = if den == 0.0 { 1.0 } else { h[j][j] / den };
            sn[j] = if den == 0.0 { 0.0 } else { h[j + 1][j] / den };
            h[j][j] = den;
            h[j + 1][j] = 0.0;
            gvec[j + 1] = -sn[j] * gvec[j];
            gvec[j] *= cs[j];
            res = gvec[j + 1].abs();
            iterations += 1;
            k_used = j + 1;
            history.push(res);
            if res <= target || iterations >= opts.max_iter || hn == 0.0 {
                break;
            }
            v.push(w.scale_real(1.0 / hn));
        }
        let mut y = vec![0.0; k_used];
        for i in (0..k_used).rev() {
            let mut s = gvec[i];
            for l in i + 1..k_used {
                s -= h[i][l] * y[l];
            }
            y[i] = s / h[i][i];
        }
        let mut dx = Field::zeros(grid);
        for (i, yi) in y.iter().enumerate() {
            dx.axpy_real(*yi, &v[i]);
        }
        x.axpy_real(1.0, &pre(&dx));
        r = b.sub(&op(&x));
        beta = norm(&r);
        check_finite(beta, "gmres")?;
        if beta <= target {
            return Ok(KrylovSolution { x, iterations, residual: beta, history });
        }
        if iterations >= opts.max_iter {
            return Err(Error::Numerical(format!(
                "gmres did not converge in {iterations} iterations: residual {beta:.3e}, target {target:.3e}"
            )));
        }
    }
}

/// Preconditioned conjugate gradients for an operator symmetric positive definite in `Re⟨·,·⟩`.
pub fn cg(
    op: &dyn Fn(&Field) -> Field,
    b: &Field,
    x0: Option<&Field>,
    precond: Option<&dyn Fn(&Field) -> Field>,
    opts: &KrylovOptions,
) -> Result<KrylovSolution> {
    let grid = b.grid();
    let target = (opts.tol * norm(b)).max(opts.abs_tol);
    let mut x = x0.cloned().unwrap_or_else(|| Field::zeros(grid));
    let mut r = if x0.is_some() { b.sub(&op(&x)) } else { b.clone() };
    let mut rn = norm(&r);
    let mut history = Vec::new();
    if rn <= target {
        return Ok(KrylovSolution { x, iterations: 0, residual: rn, history });
    }
    let pre = |v: &Field| match precond {
        Some(p) => p(v),
        None => v.clone(),
    };
    let mut z = pre(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=opts.max_iter {
        let ap = op(&p);
        let pap = dot(&p, &ap);
        check_finite(pap, "cg")?;
        if pap <= 0.0 {
            return Err(Error::Numerical(format!("cg: operator not positive (pAp = {pap:.3e}) at iteration {it}")));
        }
        let alpha = rz / pap;
        x.axpy_real(alpha, &p);
        r.axpy_real(-alpha, &ap);
        rn = norm(&r);
        history.push(rn);
        if rn <= target {
            return Ok(KrylovSolution { x, iterations: it, residual: rn, history });
        }
        z = pre(&r);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        let mut pn = z.clone();
        pn.axpy_real(beta, &p);
        p = pn;
    }
    Err(Error::Numerical(format!(
        "cg did not converge in {} iterations: residual {rn:.3e}, target {target:.3e}",
        opts.max_iter
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::probe::seeded_field;
    use crate::C64;

    #[test]
    fn cg_solves_shifted_laplacian() {
        let g = TorusGrid::new(2, 8).unwrap();
        let op = |v: &Field| v.multiplier(|k| C64::new(1.0 + (k[0] * k[0] + k[1] * k[1]) as f64, 0.0));
        let b = seeded_field(g, 1);
        let s = cg(&op, &b, None, None, &KrylovOptions::default()).unwrap();
        assert!(op(&s.x).sub(&b).l2_norm() < 1e-9 * b.l2_norm());
    }

    #[test]
    fn gmres_solves_real_linear_system() {
        let g = TorusGrid::new(2, 8).unwrap();
        // w ↦ (1 + i|k|²)w + 0.3 w̄ mixes the field and its conjugate
        let op = |v: &Field| {
            let mut o = v.multiplier(|k| C64::new(1.0, (k[0] * k[0] + k[1] * k[1]) as f64 * 0.2));
            o.axpy_real(0.3, &v.conj());
            o
        };
        let b = seeded_field(g, 2);
        let pre = |v: &Field| v.multiplier(|k| C64::new(1.0, (k[0] * k[0] + k[1] * k[1]) as f64 * 0.2).inv());
        let opts = KrylovOptions::default().with_tol(1e-12);
        let s = gmres(&op, &b, None, Some(&pre), &opts).unwrap();
        assert!(op(&s.x).sub(&b).l2_norm() < 1e-11 * b.l2_norm());
        let plain = gmres(&op, &b, None, None, &opts).unwrap();
        assert!(s.iterations <= plain.iterations);
    }

    #[test]
    fn gmres_reports_non_convergence() {
        let g = TorusGrid::new(1, 16).unwrap();
        let op = |v: &Field| v.multiplier(|k| C64::new(1.0 + (k[0] * k[0]) as f64, 0.0));
        let b = seeded_field(g, 3);
        let opts = KrylovOptions { tol: 1e-14, abs_tol: 0.0, restart: 2, max_iter: 3 };
        assert!(matches!(gmres(&op, &b, None, None, &opts), Err(Error::Numerical(_))));
    }
}
