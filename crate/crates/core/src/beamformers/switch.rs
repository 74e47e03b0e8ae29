//! Switch-based designs: quantized fixed phase shifters, and antenna
//! selection by minimum Frobenius norm.

use nalgebra::{Complex, ComplexField};

use crate::error::{invalid, Result};
use crate::scalar::{cis, from_usize, CMatrix, Real};

pub const DEFAULT_PHASE_LEVELS: usize = 8;

/// Grid index of the level nearest to `phase` on the `n_q`-point grid
/// `{2 pi q / n_q}`; exact ties go to the smaller index.
pub fn nearest_phase_index<T: Real>(phase: T, n_q: usize) -> usize {
    let two_pi = T::two_pi();
    let mut theta = phase % two_pi;
    if theta < T::zero() {
        theta += two_pi;
    }
    let step = two_pi / from_usize::<T>(n_q);
    let pos = theta / step;
    let lo = pos.floor().to_usize().unwrap_or(0).min(n_q - 1);
    let hi = (lo + 1) % n_q;
    let d_lo = pos - from_usize::<T>(lo);
    let d_hi = from_usize::<T>(lo + 1) - pos;
    if d_lo < d_hi {
        lo
    } else if d_hi < d_lo {
        hi
    } else {
        lo.min(hi)
    }
}

/// Replaces every entry by the unit-modulus value whose phase is the
/// nearest of `n_q` uniformly spaced levels. Zero entries take phase zero.
pub fn sw_phsh_quantize<T: Real>(target: &CMatrix<T>, n_q: usize) -> Result<CMatrix<T>> {
    if n_q < 2 {
        return invalid(format!("need at least two phase levels, got {n_q}"));
    }
    let step = T::two_pi() / from_usize::<T>(n_q);
    Ok(target.map(|z| {
        let phase = if z.modulus() > T::zero() { z.argument() } else { T::zero() };
        let q = nearest_phase_index(phase, n_q);
        cis(step * from_usize::<T>(q))
    }))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SwitchSelection {
    /// Selected antenna rows, ascending.
    pub selected_rows: Vec<usize>,
    pub num_rows: usize,
}

impl SwitchSelection {
    /// Explicit `num_rows x n_rf` 0/1 selection matrix.
    pub fn matrix<T: Real>(&self) -> CMatrix<T> {
        let mut s = CMatrix::zeros(self.num_rows, self.selected_rows.len());
        for (c, &r) in self.selected_rows.iter().enumerate() {
            s[(r, c)] = Complex::new(T::one(), T::zero());
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchDesign<T: Real> {
    pub selection: SwitchSelection,
    /// `n_rf x M`: the selected rows of the target.
    pub baseband: CMatrix<T>,
    /// `S * baseband`: the target with unselected rows zeroed.
    pub composed: CMatrix<T>,
}

/// Keeps the `n_rf` rows of largest Euclidean norm (lowest index on ties).
pub fn sw_mfn_select<T: Real>(target: &CMatrix<T>, n_rf: usize) -> Result<SwitchDesign<T>> {
    let (p, m) = target.shape();
    if n_rf > p {
        return invalid(format!("cannot select {n_rf} of {p} antennas"));
    }
    let norms: Vec<T> = target.row_iter().map(|r| r.norm_squared()).collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| norms[b].partial_cmp(&norms[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut selected_rows: Vec<usize> = order[..n_rf].to_vec();
    selected_rows.sort_unstable();

    let mut baseband = CMatrix::zeros(n_rf, m);
    let mut composed = CMatrix::zeros(p, m);
    for (c, &r) in selected_rows.iter().enumerate() {
        baseband.row_mut(c).copy_from(&target.row(r));
        composed.row_mut(r).copy_from(&target.row(r));
    }
    Ok(SwitchDesign {
        selection: SwitchSelection { selected_rows, num_rows: p },
        baseband,
        composed,
    })
}
