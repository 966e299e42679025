//! Weyl and Bony-Weyl quantization on the dual lattice.
//!
//! `(Op(a)g)^(j) = Σ_k w(j,k) â(j−k, (j+k)/2) ĝ(k)` with `w ≡ 1` (Weyl) or
//! `w = χ(|j−k| / (ε⟨j+k⟩))` (Bony-Weyl). The constant is fixed so that `Op(1) = Id`.
//! Contributions are dropped, and counted, when `j = k + m` leaves the lattice or when
//! `m = j−k` has a component equal to `−N/2`; the symmetric rule on `m` keeps real
//! symbols exactly self-adjoint.

use crate::cutoff::CutoffProfile;
use crate::error::{validation, Result};
use crate::exec;
use crate::field::Field;
use crate::grid::{Projection, TorusGrid};
use crate::symbol::{SymbolTable, TorusSymbol, XiPoly};
use crate::C64;
use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Sparse list of interacting frequency pairs, grouped by output row.
#[derive(Debug)]
pub struct PairTable {
    grid: TorusGrid,
    /// Output indices `j`.
    pub rows: Vec<u32>,
    pub row_start: Vec<usize>,
    pub k: Vec<u32>,
    pub m: Vec<u32>,
    pub weight: Vec<f64>,
    cutoff: Option<CutoffProfile>,
    freqs: Vec<[i64; 2]>,
}

type TableKey = (TorusGrid, u64, Projection);

fn cache() -> &'static Mutex<HashMap<TableKey, Arc<PairTable>>> {
    static C: OnceLock<Mutex<HashMap<TableKey, Arc<PairTable>>>> = OnceLock::new();
    C.get_or_init(|| Mutex::new(HashMap::new()))
}

impl PairTable {
    /// Shared table for a grid, cutoff (`None` for Weyl) and projection.
    pub fn get(grid: TorusGrid, cutoff: Option<&CutoffProfile>, proj: Projection) -> Arc<Self> {
        let key = (grid, cutoff.map_or(0, |c| c.epsilon().to_bits()), proj);
        if let Some(t) = cache().lock().unwrap().get(&key) {
            return t.clone();
        }
        let t = Arc::new(Self::build(grid, cutoff, proj));
        cache().lock().unwrap().insert(key, t.clone());
        t
    }

    fn build(grid: TorusGrid, cutoff: Option<&CutoffProfile>, proj: Projection) -> Self {
        let idx = proj.indices(&grid);
        let freqs: Vec<[i64; 2]> = (0..grid.len()).map(|i| grid.freq(i)).collect();
        let h = (grid.n() / 2) as i64;
        let per_row: Vec<(Vec<u32>, Vec<u32>, Vec<f64>)> = exec::map_range(idx.len(), |r| {
            let j = idx[r];
            let fj = freqs[j];
            let (mut ks, mut ms, mut ws) = (vec![], vec![], vec![]);
            for &k in &idx {
                let fk = freqs[k];
                let m = [fj[0] - fk[0], fj[1] - fk[1]];
                let s = [fj[0] + fk[0], fj[1] + fk[1]];
                let w = cutoff.map_or(1.0, |c| {
                    c.weight_sq((m[0] * m[0] + m[1] * m[1]) as f64, (s[0] * s[0] + s[1] * s[1]) as f64)
                });
                if w == 0.0 {
                    continue;
                }
                if m[0].abs() >= h || m[1].abs() >= h {
                    continue;
                }
                ks.push(k as u32);
                ms.push(grid.wrap_index(m) as u32);
                ws.push(w);
            }
            (ks, ms, ws)
        });
        let mut t = Self {
            grid,
            rows: idx.iter().map(|&i| i as u32).collect(),
            row_start: vec![0],
            k: vec![],
            m: vec![],
            weight: vec![],
            cutoff: cutoff.copied(),
            freqs,
        };
        for (ks, ms, ws) in per_row {
            t.k.extend(ks);
            t.m.extend(ms);
            t.weight.extend(ws);
            t.row_start.push(t.k.len());
        }
        t
    }

    pub fn grid(&self) -> TorusGrid {
        self.grid
    }

    pub fn pair_count(&self) -> usize {
        self.k.len()
    }

    #[inline]
    pub fn freq(&self, idx: usize) -> [i64; 2] {
        self.freqs[idx]
    }

    /// Number of nonzero products `ĉ(m)ĝ(k)` with nonzero weight that the kernel drops.
    pub fn dropped_for(&self, coeff_support: &[bool], g: &Field) -> u64 {
        let grid = self.grid;
        let h = (grid.n() / 2) as i64;
        let ms: Vec<usize> = (0..grid.len()).filter(|&m| coeff_support[m]).collect();
        let mut count = 0u64;
        for (k, gk) in g.coeffs().iter().enumerate() {
            if *gk == ZERO {
                continue;
            }
            let fk = self.freqs[k];
            for &m in &ms {
                let fm = self.freqs[m];
                let j = [fk[0] + fm[0], fk[1] + fm[1]];
                let w = self.cutoff.map_or(1.0, |c| {
                    let s = [j[0] + fk[0], j[1] + fk[1]];
                    c.weight_sq((fm[0] * fm[0] + fm[1] * fm[1]) as f64, (s[0] * s[0] + s[1] * s[1]) as f64)
                });
                if w > 0.0 && (grid.index(j).is_none() || fm[0] == -h || fm[1] == -h) {
                    count += 1;
                }
            }
        }
        count
    }

    /// Apply the kernel `kern(m_idx, ξ) · ĝ(k)` row by row.
    pub fn apply_with<F>(&self, g: &[C64], kern: F) -> Vec<C64>
    where
        F: Fn(usize, [f64; 2], [i64; 2]) -> C64 + Sync + Send,
    {
        let mut rows = vec![ZERO; self.rows.len()];
        exec::fill_rows(&mut rows, |r| {
            let fj = self.freqs[self.rows[r] as usize];
            let mut acc = ZERO;
            for p in self.row_start[r]..self.row_start[r + 1] {
                let k = self.k[p] as usize;
                let gk = g[k];
                if gk == ZERO {
                    continue;
                }
                let fk = self.freqs[k];
                let sum = [fj[0] + fk[0], fj[1] + fk[1]];
                let xi = [sum[0] as f64 * 0.5, sum[1] as f64 * 0.5];
                acc += kern(self.m[p] as usize, xi, sum) * gk * self.weight[p];
            }
            acc
        });
        let mut out = vec![ZERO; self.grid.len()];
        for (r, v) in rows.into_iter().enumerate() {
            out[self.rows[r] as usize] = v;
        }
        out
    }
}

/// Result of one quantized application.
#[derive(Clone, Debug)]
pub struct Quantized {
    pub field: Field,
    /// Contributions dropped because `j−k` left the resolved lattice.
    pub dropped: u64,
}

/// A symbol prepared for repeated application.
pub struct Quantizer {
    table: Arc<PairTable>,
    coeffs: Vec<Vec<C64>>,
    polys: Vec<XiPoly>,
    sym_table: Option<Arc<SymbolTable>>,
}

impl Quantizer {
    pub fn new(a: &TorusSymbol, cutoff: Option<&CutoffProfile>, proj: Projection) -> Self {
        let table = PairTable::get(a.grid(), cutoff, proj);
        Self {
            table,
            coeffs: a.terms.iter().map(|t| t.coeff.coeffs().to_vec()).collect(),
            polys: a.terms.iter().map(|t| t.poly.clone()).collect(),
            sym_table: a.table.clone(),
        }
    }

    pub fn grid(&self) -> TorusGrid {
        self.table.grid()
    }

    pub fn apply(&self, g: &Field) -> Result<Quantized> {
        if g.grid() != self.grid() {
            return validation("grid mismatch between symbol and field");
        }
        let out = self.table.apply_with(g.coeffs(), |m, xi, sum| {
            let mut a = ZERO;
            for (c, p) in self.coeffs.iter().zip(&self.polys) {
                let cm = c[m];
                if cm != ZERO {
                    a += cm * p.eval(xi);
                }
            }
            if let Some(t) = &self.sym_table {
                a += t.coeff(t.slot(sum), m);
            }
            a
        });
        let support: Vec<bool> = (0..self.grid().len())
            .map(|m| self.sym_table.is_some() || self.coeffs.iter().any(|c| c[m] != ZERO))
            .collect();
        Ok(Quantized {
            field: Field::from_coeffs(self.grid(), out)?,
            dropped: self.table.dropped_for(&support, g),
        })
    }

    /// Dense matrix `M[j][k]`; tests only.
    pub fn materialize(&self) -> Result<Vec<Vec<C64>>> {
        let grid = self.grid();
        if grid.len() > 1024 {
            return validation("materialization is limited to 1024 modes");
        }
        let mut m = vec![vec![ZERO; grid.len()]; grid.len()];
        for k in 0..grid.len() {
            let mut e = Field::zeros(grid);
            e.coeffs_mut()[k] = C64::new(1.0, 0.0);
            let col = self.apply(&e)?.field;
            for (j, v) in col.coeffs().iter().enumerate() {
                m[j][k] = *v;
            }
        }
        Ok(m)
    }
}

/// Weyl quantization on the full lattice.
pub fn weyl_quantize(a: &TorusSymbol, g: &Field) -> Result<Quantized> {
    Quantizer::new(a, None, Projection::Full).apply(g)
}

/// Bony-Weyl quantization on the full lattice.
pub fn bony_weyl_quantize(a: &TorusSymbol, g: &Field, cutoff: &CutoffProfile) -> Result<Quantized> {
    Quantizer::new(a, Some(cutoff), Projection::Full).apply(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> TorusGrid {
        TorusGrid::new(2, 8).unwrap()
    }

    #[test]
    fn identity_calibration() {
        let g = grid();
        let f = Field::from_fn(g, |x| C64::new(x[0].cos(), (x[1] * 2.0).sin()));
        let one = TorusSymbol::one(g);
        assert_eq!(weyl_quantize(&one, &f).unwrap().field, f);
        assert_eq!(bony_weyl_quantize(&one, &f, &CutoffProfile::default()).unwrap().field, f);
    }

    #[test]
    fn multiplier_on_mode() {
        let g = grid();
        let a = TorusSymbol::fourier_multiplier(g, XiPoly::xi_sq(2));
        let f = Field::mode(g, [2, -3], C64::new(0.5, 1.0)).unwrap();
        let out = weyl_quantize(&a, &f).unwrap().field;
        assert!((out.coeff([2, -3]) - C64::new(0.5, 1.0) * 13.0).norm() < 1e-13);
        assert!((out.l2_norm() - 13.0 * f.l2_norm()).abs() < 1e-12);
    }

    #[test]
    fn single_coefficient_mode_shift() {
        let g = grid();
        let c = Field::mode(g, [1, 2], C64::new(0.3, -0.2)).unwrap();
        let a = TorusSymbol::separable(c, XiPoly::one(), false);
        let f = Field::mode(g, [-2, 1], C64::new(1.0, 0.0)).unwrap();
        let out = weyl_quantize(&a, &f).unwrap();
        assert!((out.field.coeff([-1, 3]) - C64::new(0.3, -0.2)).norm() < 1e-15);
        assert!((out.field.l2_norm() - C64::new(0.3, -0.2).norm()).abs() < 1e-15);
        assert_eq!(out.dropped, 0);
    }

    #[test]
    fn overflow_is_counted() {
        let g = grid();
        let c = Field::mode(g, [3, 0], C64::new(1.0, 0.0)).unwrap();
        let a = TorusSymbol::separable(c, XiPoly::one(), true);
        let f = Field::mode(g, [3, 0], C64::new(1.0, 0.0)).unwrap();
        let out = weyl_quantize(&a, &f).unwrap();
        // j = 6 is outside the lattice, so nothing lands; pairs with |j−k| ≥ 4 are counted
        assert_eq!(out.field.l2_norm(), 0.0);
        assert!(out.dropped > 0);
    }
}
