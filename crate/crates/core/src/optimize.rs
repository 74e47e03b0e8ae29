//! Energy-efficiency maximization by Dinkelbach's fractional programming
//! and coordinate ascent over the array sizes.

use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Maximize `numerator(p) / denominator(p)` over `[p_min_w, p_max_w]`.
pub struct RatioProgram<N, D> {
    pub numerator: N,
    pub denominator: D,
    pub p_min_w: f64,
    pub p_max_w: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DinkelbachOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub grid_points: usize,
}

impl Default for DinkelbachOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iter: 50, grid_points: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachTrace {
    pub lambda_sequence: Vec<f64>,
    pub p_star_w: f64,
    pub gee_star: f64,
    pub iterations: usize,
    pub converged: bool,
    /// The bracketing grid showed more than one local maximum of the
    /// parametric objective in some iteration.
    pub multimodal: bool,
}

/// Domains spanning more than two decades are searched on a log scale.
const LOG_SPAN: f64 = 100.0;
const GOLDEN_ITERS: usize = 200;

struct Scale {
    log: bool,
}

impl Scale {
    fn to(&self, p: f64) -> f64 {
        if self.log { p.ln() } else { p }
    }

    fn from(&self, x: f64) -> f64 {
        if self.log { x.exp() } else { x }
    }
}

struct Evaluator<'a, N, D> {
    prog: &'a RatioProgram<N, D>,
    memo: Mutex<HashMap<u64, (f64, f64)>>,
}

impl<N, D> Evaluator<'_, N, D>
where
    N: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    fn eval(&self, p: f64) -> Result<(f64, f64)> {
        if let Some(v) = self.memo.lock().ok().and_then(|m| m.get(&p.to_bits()).copied()) {
            return Ok(v);
        }
        let n = (self.prog.numerator)(p);
        let d = (self.prog.denominator)(p);
        if !n.is_finite() || !d.is_finite() {
            return Err(Error::Evaluation { p });
        }
        if d <= 0.0 {
            return invalid(format!("denominator must be positive, got {d} at p = {p}"));
        }
        if let Ok(mut m) = self.memo.lock() {
            m.insert(p.to_bits(), (n, d));
        }
        Ok((n, d))
    }

    fn ratio(&self, p: f64) -> Result<f64> {
        self.eval(p).map(|(n, d)| n / d)
    }
}

/// Dinkelbach iterations `lambda_{i+1} = N(p_i) / D(p_i)` with `p_i`
/// maximizing `N(p) - lambda_i D(p)` by grid bracketing and golden-section
/// refinement.
pub fn dinkelbach_max<N, D>(prog: &RatioProgram<N, D>, opts: &DinkelbachOptions) -> Result<DinkelbachTrace>
where
    N: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    let (a, b) = (prog.p_min_w, prog.p_max_w);
    if !(a.is_finite() && b.is_finite() && a >= 0.0 && a <= b) {
        return invalid(format!("power domain [{a}, {b}] is not a valid interval"));
    }
    if opts.grid_points < 3 || opts.max_iter == 0 || !(opts.tol > 0.0) {
        return invalid("need at least 3 grid points, one iteration and a positive tolerance");
    }
    let ev = Evaluator { prog, memo: Mutex::new(HashMap::new()) };
    let scale = Scale { log: a > 0.0 && b / a > LOG_SPAN };
    let (lo, hi) = (scale.to(a), scale.to(b));
    let grid: Vec<f64> = (0..opts.grid_points)
        .map(|i| {
            if i + 1 == opts.grid_points {
                b
            } else if i == 0 {
                a
            } else {
                scale.from(lo + (hi - lo) * i as f64 / (opts.grid_points - 1) as f64)
            }
        })
        .collect();
    let values = grid.par_iter().map(|&p| ev.eval(p)).collect::<Result<Vec<_>>>()?;

    // Start from the best grid ratio; it already covers both endpoints.
    let (mut p_best, mut best) = grid
        .iter()
        .zip(&values)
        .map(|(&p, &(n, d))| (p, n / d))
        .fold((a, f64::NEG_INFINITY), |acc, x| if x.1 > acc.1 { x } else { acc });
    let mut lambda = best;
    let mut trace = DinkelbachTrace {
        lambda_sequence: vec![lambda],
        p_star_w: p_best,
        gee_star: best,
        iterations: 0,
        converged: false,
        multimodal: false,
    };
    if a == b {
        trace.converged = true;
        return Ok(trace);
    }

    for _ in 0..opts.max_iter {
        trace.iterations += 1;
        let phi: Vec<f64> = values.iter().map(|&(n, d)| n - lambda * d).collect();
        trace.multimodal |= count_local_maxima(&phi) > 1;
        let i = argmax(&phi);
        let left = scale.to(grid[i.saturating_sub(1)]);
        let right = scale.to(grid[(i + 1).min(grid.len() - 1)]);
        let p_i = golden_max(left, right, |x| {
            let p = scale.from(x).clamp(a, b);
            ev.eval(p).map(|(n, d)| n - lambda * d)
        })?;
        let p_i = scale.from(p_i).clamp(a, b);
        let (n, d) = ev.eval(p_i)?;
        let residual = n - lambda * d;
        let r = n / d;
        if r > best {
            best = r;
            p_best = p_i;
        }
        if residual < opts.tol * d {
            trace.converged = true;
            break;
        }
        // An inexact inner step can only lower the ratio; never step back.
        lambda = lambda.max(r);
        trace.lambda_sequence.push(lambda);
    }

    for p in [a, b] {
        let r = ev.ratio(p)?;
        if r > best {
            best = r;
            p_best = p;
        }
    }
    trace.p_star_w = p_best;
    trace.gee_star = best;
    Ok(trace)
}

fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold(0, |best, (i, &x)| if x > v[best] { i } else { best })
}

fn count_local_maxima(v: &[f64]) -> usize {
    (0..v.len())
        .filter(|&i| {
            let l = i == 0 || v[i] > v[i - 1];
            let r = i + 1 == v.len() || v[i] >= v[i + 1];
            l && r
        })
        .count()
}

/// Golden-section search for the maximizer of `f` on `[lo, hi]`.
fn golden_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> Result<f64>) -> Result<f64> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    for _ in 0..GOLDEN_ITERS {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2)?;
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1)?;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid)?;
    Ok(if fm >= f1 && fm >= f2 { mid } else if f1 >= f2 { x1 } else { x2 })
}

/// GEE as a function of the array sizes and the transmit power, split into
/// the numerator `W ASE` and the consumed power.
pub trait GeeObjective: Sync {
    fn numerator(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64>;
    fn denominator(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64>;

    fn gee(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64> {
        Ok(self.numerator(n_t, n_r, p_t_w)? / self.denominator(n_t, n_r, p_t_w)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternatingResult {
    pub n_t: usize,
    pub n_r: usize,
    pub p_t_w: f64,
    pub gee: f64,
    pub rounds: usize,
    /// GEE after each round.
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlternatingOptions {
    pub rel_tol: f64,
    pub max_rounds: usize,
    pub dinkelbach: DinkelbachOptions,
}

impl Default for AlternatingOptions {
    fn default() -> Self {
        Self { rel_tol: 1e-4, max_rounds: 10, dinkelbach: DinkelbachOptions::default() }
    }
}

/// Best grid value of `f`; infeasible points are skipped and the current
/// value wins ties.
fn grid_step(grid: &[usize], current: usize, cur_val: f64, f: impl Fn(usize) -> Result<f64> + Sync) -> (usize, f64) {
    let vals: Vec<Option<f64>> = grid.par_iter().map(|&n| f(n).ok().filter(|v| v.is_finite())).collect();
    let mut best = (current, cur_val);
    for (&n, v) in grid.iter().zip(vals) {
        if let Some(v) = v {
            if v > best.1 {
                best = (n, v);
            }
        }
    }
    best
}

/// Coordinate ascent over `n_t`, then `n_r`, then the transmit power.
pub fn alternating_gee_max<O: GeeObjective>(
    obj: &O,
    n_t_grid: &[usize],
    n_r_grid: &[usize],
    p_range_w: (f64, f64),
    opts: &AlternatingOptions,
) -> Result<AlternatingResult> {
    if n_t_grid.is_empty() || n_r_grid.is_empty() {
        return invalid("antenna grids must not be empty");
    }
    let (p_lo, p_hi) = p_range_w;
    if !(p_lo > 0.0 && p_lo <= p_hi && p_hi.is_finite()) {
        return invalid(format!("power range [{p_lo}, {p_hi}] is not valid"));
    }
    let mut p = (p_lo * p_hi).sqrt();
    let mut n_t = n_t_grid[n_t_grid.len() / 2];
    let mut n_r = n_r_grid[n_r_grid.len() / 2];
    let mut gee = obj.gee(n_t, n_r, p).unwrap_or(f64::NEG_INFINITY);
    if !gee.is_finite() {
        // Find any feasible starting pair.
        let start = n_t_grid
            .iter()
            .flat_map(|&a| n_r_grid.iter().map(move |&b| (a, b)))
            .find_map(|(a, b)| obj.gee(a, b, p).ok().filter(|v| v.is_finite()).map(|v| (a, b, v)));
        let Some((a, b, v)) = start else {
            return Err(Error::Infeasible("no grid point gives a finite GEE".into()));
        };
        (n_t, n_r, gee) = (a, b, v);
    }
    let mut history = Vec::new();
    let mut rounds = 0;
    while rounds < opts.max_rounds {
        rounds += 1;
        let before = gee;
        let (t, g) = grid_step(n_t_grid, n_t, gee, |n| obj.gee(n, n_r, p));
        (n_t, gee) = (t, g);
        let (r, g) = grid_step(n_r_grid, n_r, gee, |n| obj.gee(n_t, n, p));
        (n_r, gee) = (r, g);
        let prog = RatioProgram {
            numerator: |x: f64| obj.numerator(n_t, n_r, x).unwrap_or(f64::NAN),
            denominator: |x: f64| obj.denominator(n_t, n_r, x).unwrap_or(f64::NAN),
            p_min_w: p_lo,
            p_max_w: p_hi,
        };
        let trace = dinkelbach_max(&prog, &opts.dinkelbach)?;
        if trace.gee_star > gee {
            p = trace.p_star_w;
            gee = trace.gee_star;
        }
        history.push(gee);
        if gee - before <= opts.rel_tol * before.abs() {
            break;
        }
    }
    Ok(AlternatingResult { n_t, n_r, p_t_w: p, gee, rounds, history })
}
