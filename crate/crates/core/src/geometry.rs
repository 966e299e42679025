//! Control regions on the torus, their smooth cutoffs, and a sampled checker for the
//! geometric control condition.
//!
//! Region coordinates are in units of one period (the torus is `[0,1)^d` here, `2π`-scaled
//! on the spectral grid).

use crate::cutoff::{smooth_step, TimeCutoff};
use crate::error::{validation, Error, Result};
use crate::exec;
use crate::field::Field;
use crate::grid::TorusGrid;
use crate::C64;
use std::f64::consts::PI;

#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// `{x : dist(x_axis, center) < half_width}`.
    Strip { axis: usize, center: f64, half_width: f64 },
    Ball { center: [f64; 2], radius: f64 },
    Whole,
}

/// Signed periodic offset in `[−1/2, 1/2)`.
fn wrap(x: f64) -> f64 {
    x - (x + 0.5).floor()
}

impl Shape {
    /// Distance from `x` to the complement of the shape, negative outside.
    pub fn depth(&self, x: [f64; 2], dim: usize) -> f64 {
        match self {
            Shape::Strip { axis, center, half_width } => half_width - wrap(x[*axis] - center).abs(),
            Shape::Ball { center, radius } => {
                let mut r2 = 0.0;
                for l in 0..dim {
                    r2 += wrap(x[l] - center[l]).powi(2);
                }
                radius - r2.sqrt()
            }
            Shape::Whole => f64::INFINITY,
        }
    }

    fn feature_size(&self) -> f64 {
        match self {
            Shape::Strip { half_width, .. } => 2.0 * half_width,
            Shape::Ball { radius, .. } => 2.0 * radius,
            Shape::Whole => 1.0,
        }
    }
}

/// Union of open strips and balls.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlRegion {
    dim: usize,
    shapes: Vec<Shape>,
}

impl ControlRegion {
    pub fn new(dim: usize, shapes: Vec<Shape>) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return validation(format!("dimension {dim} unsupported"));
        }
        if shapes.is_empty() {
            return validation("control region needs at least one shape");
        }
        for s in &shapes {
            match s {
                Shape::Strip { axis, half_width, center } => {
                    if *axis >= dim || !(*half_width > 0.0) || !center.is_finite() {
                        return validation(format!("invalid strip {s:?}"));
                    }
                }
                Shape::Ball { radius, center } => {
                    if !(*radius > 0.0) || !center.iter().all(|c| c.is_finite()) {
                        return validation(format!("invalid ball {s:?}"));
                    }
                }
                Shape::Whole => {}
            }
        }
        Ok(Self { dim, shapes })
    }

    pub fn whole(dim: usize) -> Self {
        Self { dim, shapes: vec![Shape::Whole] }
    }

    /// Horizontal and vertical strips through `center`.
    pub fn crossed_strips(center: f64, half_width: f64) -> Result<Self> {
        Self::new(
            2,
            vec![
                Shape::Strip { axis: 0, center, half_width },
                Shape::Strip { axis: 1, center, half_width },
            ],
        )
    }

    /// One strip `{|x₁ − center| < half_width}`.
    pub fn single_strip(dim: usize, center: f64, half_width: f64) -> Result<Self> {
        Self::new(dim, vec![Shape::Strip { axis: 0, center, half_width }])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shapes(&self) -> &[Shape] {
        &self.shapes
    }

    pub fn depth(&self, x: [f64; 2]) -> f64 {
        self.shapes.iter().map(|s| s.depth(x, self.dim)).fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: [f64; 2]) -> bool {
        self.depth(x) > 0.0
    }

    fn min_feature(&self) -> f64 {
        self.shapes.iter().map(Shape::feature_size).fold(f64::INFINITY, f64::min)
    }

    /// `φ(x) = max_shapes smooth_step(depth/r)`: 1 on the eroded region, 0 off the region.
    pub fn phi_at(&self, x: [f64; 2], r: f64) -> f64 {
        self.shapes
            .iter()
            .map(|s| smooth_step(s.depth(x, self.dim) / r))
            .fold(0.0, f64::max)
    }

    /// Grid indicator of the region.
    pub fn indicator(&self, grid: &TorusGrid) -> Vec<bool> {
        (0..grid.len()).map(|i| self.contains(unit_point(grid, i))).collect()
    }
}

/// Grid point in period units.
pub fn unit_point(grid: &TorusGrid, idx: usize) -> [f64; 2] {
    let p = grid.point(idx);
    [p[0] / (2.0 * PI), p[1] / (2.0 * PI)]
}

/// Space and time cutoffs of a control problem.
#[derive(Clone, Debug)]
pub struct Cutoffs {
    pub phi: Field,
    pub chi: TimeCutoff,
    /// Grid points where `φ = 1` (the eroded region).
    pub eroded_points: usize,
    pub region_points: usize,
}

/// Build `φ_ω` on the grid and `χ_T`; `r` is the mollification radius in period units.
pub fn build_cutoffs(region: &ControlRegion, r: f64, horizon: f64, grid: &TorusGrid) -> Result<Cutoffs> {
    if !(r > 0.0) {
        return validation("mollification radius must be positive");
    }
    if region.dim() != grid.dim() {
        return validation("region and grid dimensions differ");
    }
    let vals: Vec<f64> = (0..grid.len()).map(|i| region.phi_at(unit_point(grid, i), r)).collect();
    let eroded = vals.iter().filter(|&&v| v == 1.0).count();
    let inside = region.indicator(grid).iter().filter(|&&b| b).count();
    if inside == 0 {
        return validation("control region contains no grid point");
    }
    if eroded == 0 {
        let depth = (0..grid.len()).map(|i| region.depth(unit_point(grid, i))).fold(0.0, f64::max);
        return validation(format!(
            "eroded region is empty on the grid; use a mollification radius below {depth:.4}"
        ));
    }
    let phi = Field::from_values(*grid, vals.iter().map(|&v| C64::new(v, 0.0)).collect()).real_part();
    Ok(Cutoffs { phi, chi: TimeCutoff::new(horizon)?, eroded_points: eroded, region_points: inside })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GccOptions {
    /// Maximal ray length in period units.
    pub l_max: f64,
    /// Rational directions `(p, q)` with `|p|, |q| ≤ q_max`.
    pub q_max: i64,
    /// Extra irrational directions.
    pub n_dirs: usize,
    pub n_starts: usize,
}

impl Default for GccOptions {
    fn default() -> Self {
        Self { l_max: 20.0, q_max: 12, n_dirs: 256, n_starts: 256 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub start: [f64; 2],
    pub dir: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct GccReport {
    pub satisfied: bool,
    /// Largest first-entry length over sampled rays (period units); infinite when unsatisfied.
    pub l_min: f64,
    pub witness: Option<Ray>,
    /// Whether the witness survived re-marching at 10× finer step.
    pub witness_verified: bool,
    /// `ν` with `2νT = L_min` in radians.
    pub nu: f64,
    pub rays: usize,
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Sampled directions: primitive rationals first, then a golden-angle fill.
pub fn sample_directions(dim: usize, q_max: i64, n_irr: usize) -> Vec<[f64; 2]> {
    if dim == 1 {
        return vec![[1.0, 0.0], [-1.0, 0.0]];
    }
    let mut out = Vec::new();
    for p in -q_max..=q_max {
        for q in -q_max..=q_max {
            if (p, q) != (0, 0) && gcd(p, q) == 1 {
                let n = ((p * p + q * q) as f64).sqrt();
                out.push([p as f64 / n, q as f64 / n]);
            }
        }
    }
    let golden = (5f64.sqrt() - 1.0) / 2.0;
    for j in 1..=n_irr {
        let th = 2.0 * PI * (j as f64 * golden).fract();
        out.push([th.cos(), th.sin()]);
    }
    out
}

/// Quasi-uniform starts from the plastic-number sequence.
pub fn sample_starts(dim: usize, n: usize) -> Vec<[f64; 2]> {
    let g = 1.324_717_957_244_746;
    let (a1, a2) = (1.0 / g, 1.0 / (g * g));
    (0..n)
        .map(|i| {
            let x = (0.5 + a1 * i as f64).fract();
            let y = if dim == 2 { (0.5 + a2 * i as f64).fract() } else { 0.0 };
            [x, y]
        })
        .collect()
}

/// First length at which the ray enters the shape, within `l_max`.
fn entry_length(shape: &Shape, ray: &Ray, dim: usize, l_max: f64, step: f64) -> Option<f64> {
    if shape.depth(ray.start, dim) > 0.0 {
        return Some(0.0);
    }
    match shape {
        Shape::Whole => Some(0.0),
        Shape::Strip { axis, center, half_width } => {
            let v = ray.dir[*axis];
            if v == 0.0 {
                return None;
            }
            let y = (ray.start[*axis] - center).rem_euclid(1.0);
            let t = if v > 0.0 { (1.0 - half_width - y) / v } else { (y - half_width) / -v };
            (t <= l_max).then_some(t.max(0.0))
        }
        Shape::Ball { .. } => march(|x| shape.depth(x, dim) > 0.0, ray, l_max, step),
    }
}

fn march(inside: impl Fn([f64; 2]) -> bool, ray: &Ray, l_max: f64, step: f64) -> Option<f64> {
    let n = (l_max / step).ceil() as usize;
    (0..=n).map(|i| (i as f64 * step).min(l_max)).find(|&t| {
        inside([ray.start[0] + t * ray.dir[0], ray.start[1] + t * ray.dir[1]])
    })
}

/// Sampled geometric control condition. `horizon` converts `L_min` into a speed.
pub fn check_gcc(region: &ControlRegion, opts: &GccOptions, horizon: f64) -> Result<GccReport> {
    if !(opts.l_max > 0.0) || !(horizon > 0.0) {
        return validation("l_max and horizon must be positive");
    }
    let feature = region.min_feature();
    let step = (feature / 4.0).min(0.05);
    if !(step > 1e-9) {
        return Err(Error::Numerical(format!("ray step underflow for feature size {feature:e}")));
    }
    let dirs = sample_directions(region.dim(), opts.q_max, opts.n_dirs);
    let starts = sample_starts(region.dim(), opts.n_starts);
    let rays: Vec<Ray> =
        dirs.iter().flat_map(|d| starts.iter().map(move |s| Ray { start: *s, dir: *d })).collect();
    let entries = exec::map_range(rays.len(), |i| {
        region
            .shapes
            .iter()
            .filter_map(|s| entry_length(s, &rays[i], region.dim(), opts.l_max, step))
            .fold(None, |a: Option<f64>, b| Some(a.map_or(b, |a| a.min(b))))
    });
    let l_min = entries.iter().map(|e| e.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    // a coarse miss can be a grazing hit; keep the first candidate that survives a finer march
    let candidates: Vec<usize> = entries.iter().enumerate().filter(|(_, e)| e.is_none()).map(|(i, _)| i).collect();
    let mut witness = candidates.first().map(|&i| rays[i]);
    let mut verified = false;
    for &i in candidates.iter().take(64) {
        if march(|x| region.contains(x), &rays[i], opts.l_max, step / 10.0).is_none() {
            witness = Some(rays[i]);
            verified = true;
            break;
        }
    }
    Ok(GccReport {
        satisfied: witness.is_none(),
        l_min,
        witness,
        witness_verified: verified,
        nu: l_min * 2.0 * PI / (2.0 * horizon),
        rays: rays.len(),
    })
}
