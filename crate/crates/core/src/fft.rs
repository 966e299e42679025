//! Multi-dimensional FFTs over row-major `N^d` arrays.
//!
//! Forward transforms carry the factor `1/N^d`, so `û_j = N^{-d} Σ_x u(x) e^{-ij·x}` and
//! the inverse is the plain sum `u(x) = Σ_j û_j e^{ij·x}`.

use crate::C64;
use rustfft::{Fft, FftPlanner};
use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

type Plan = Arc<dyn Fft<f64>>;
type PlanCache = (FftPlanner<f64>, HashMap<(usize, bool), Plan>);

thread_local! {
    static PLANS: RefCell<PlanCache> =
        RefCell::new((FftPlanner::new(), HashMap::new()));
}

fn plan(n: usize, forward: bool) -> Plan {
    PLANS.with(|p| {
        let mut p = p.borrow_mut();
        if let Some(f) = p.1.get(&(n, forward)) {
            return f.clone();
        }
        let f = if forward {
            p.0.plan_fft_forward(n)
        } else {
            p.0.plan_fft_inverse(n)
        };
        p.1.insert((n, forward), f.clone());
        f
    })
}

fn transform(dim: usize, n: usize, data: &mut [C64], forward: bool) {
    debug_assert_eq!(data.len(), n.pow(dim as u32));
    let f = plan(n, forward);
    // rows along the last axis are contiguous
    f.process(data);
    if dim == 2 {
        let mut col = vec![C64::new(0.0, 0.0); n];
        for c in 0..n {
            for r in 0..n {
                col[r] = data[r * n + c];
            }
            f.process(&mut col);
            for r in 0..n {
                data[r * n + c] = col[r];
            }
        }
    }
}

/// Grid values to Fourier coefficients, in place.
pub fn forward(dim: usize, n: usize, data: &mut [C64]) {
    transform(dim, n, data, true);
    let s = 1.0 / data.len() as f64;
    for v in data.iter_mut() {
        *v *= s;
    }
}

/// Fourier coefficients to grid values, in place.
pub fn inverse(dim: usize, n: usize, data: &mut [C64]) {
    transform(dim, n, data, false);
}
