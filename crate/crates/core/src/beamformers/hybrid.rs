//! Hybrid analog/digital factorization `target ~ rf * baseband` with a
//! unit-modulus `rf` matrix, by block coordinate descent.
//!
//! Each sweep solves the baseband block exactly (least squares) and then
//! minimizes over every phase-shifter entry in turn with the others held
//! fixed. Both steps are exact block minimizations, so the recorded
//! approximation error never increases.

use nalgebra::{Complex, ComplexField};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::linalg::{fro, pinv};
use crate::scalar::{cis, from_usize, lit, unit_phase, CMatrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HybridOptions {
    /// Stop once the relative error improvement of a sweep drops below this.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for HybridOptions {
    fn default() -> Self {
        Self { tol: 1e-6, max_iters: 100 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HybridFactors<T: Real> {
    /// `P x n_rf`, every entry of modulus one.
    pub rf: CMatrix<T>,
    /// `n_rf x M`, unconstrained.
    pub baseband: CMatrix<T>,
    pub product: CMatrix<T>,
    /// Frobenius distance between `product` and the target at convergence.
    pub approx_error: T,
    /// Error after every baseband update, non-increasing.
    pub error_history: Vec<T>,
}

impl<T: Real> HybridFactors<T> {
    /// Rescales baseband columns so that every product column has unit norm.
    /// `approx_error` keeps describing the unscaled fit.
    pub fn normalize_product_columns(&mut self) {
        for j in 0..self.product.ncols() {
            let n = self.product.column(j).norm();
            if n > T::zero() {
                let s = Complex::new(T::one() / n, T::zero());
                self.product.column_mut(j).scale_mut(s.re);
                self.baseband.column_mut(j).scale_mut(s.re);
            }
        }
    }
}

/// Phase of the largest-magnitude entry (first on ties).
fn pivot_phase<T: Real>(target: &CMatrix<T>) -> Complex<T> {
    let mut pivot = Complex::new(T::one(), T::zero());
    let mut best = T::zero();
    for z in target.iter() {
        let mag = z.modulus();
        if mag > best {
            best = mag;
            pivot = unit_phase(*z);
        }
    }
    pivot
}

/// Initial phase-shifter matrix: the phases of the target columns in the
/// first `min(M, n_rf)` columns, DFT columns after that.
fn initial_rf<T: Real>(target: &CMatrix<T>, n_rf: usize) -> CMatrix<T> {
    let (p, m) = target.shape();
    let two_pi = T::two_pi();
    CMatrix::from_fn(p, n_rf, |i, j| {
        if j < m {
            unit_phase(target[(i, j)])
        } else {
            let c = (j - m) % p;
            cis(-two_pi * from_usize::<T>(i * c) / from_usize::<T>(p))
        }
    })
}

/// Factorizes `target` (`P x M`) with `n_rf` RF chains.
///
/// The iteration runs on the target rotated so that its largest entry is
/// real positive, and the rotation is put back into `rf` at the end, so a
/// global phase on the target changes nothing but the phase of `rf`.
pub fn hybrid_factorize<T: Real>(
    target: &CMatrix<T>,
    n_rf: usize,
    opts: &HybridOptions,
) -> Result<HybridFactors<T>> {
    let (p, m) = target.shape();
    if p == 0 || m == 0 {
        return invalid("hybrid target must be non-empty");
    }
    if n_rf < m {
        return invalid(format!("need at least M = {m} RF chains, got {n_rf}"));
    }
    let target_norm = fro(target);
    if target_norm == T::zero() {
        return Ok(HybridFactors {
            rf: CMatrix::from_element(p, n_rf, Complex::new(T::one(), T::zero())),
            baseband: CMatrix::zeros(n_rf, m),
            product: CMatrix::zeros(p, m),
            approx_error: T::zero(),
            error_history: vec![T::zero()],
        });
    }
    let tol: T = lit(opts.tol);
    let floor = target_norm * T::eps() * lit(16.0);

    let pivot = pivot_phase(target);
    let canonical = &target.map(|z| z * pivot.conj());
    let mut rf = initial_rf(canonical, n_rf);
    let mut baseband = pinv(&rf)? * canonical;
    let mut err = fro(&(canonical - &rf * &baseband));
    let mut history = vec![err];

    for _ in 0..opts.max_iters {
        if err <= floor {
            break;
        }
        let mut next_rf = rf.clone();
        phase_sweep(canonical, &mut next_rf, &baseband);
        let next_bb = pinv(&next_rf)? * canonical;
        let next_err = fro(&(canonical - &next_rf * &next_bb));
        if !(next_err <= err) {
            break;
        }
        let improvement = (err - next_err) / err;
        rf = next_rf;
        baseband = next_bb;
        err = next_err;
        history.push(err);
        if improvement < tol {
            break;
        }
    }

    rf.apply(|z| *z *= pivot);
    let product = &rf * &baseband;
    Ok(HybridFactors { rf, baseband, product, approx_error: err, error_history: history })
}

/// One pass of exact per-entry phase updates with the baseband held fixed.
fn phase_sweep<T: Real>(target: &CMatrix<T>, rf: &mut CMatrix<T>, baseband: &CMatrix<T>) {
    let (p, m) = target.shape();
    let n_rf = rf.ncols();
    let mut residual = vec![Complex::new(T::zero(), T::zero()); m];
    for i in 0..p {
        for c in 0..m {
            let mut acc = target[(i, c)];
            for j in 0..n_rf {
                acc -= rf[(i, j)] * baseband[(j, c)];
            }
            residual[c] = acc;
        }
        for j in 0..n_rf {
            // add entry (i, j)'s contribution back, then pick the best phase
            let old = rf[(i, j)];
            let mut corr = Complex::new(T::zero(), T::zero());
            for c in 0..m {
                residual[c] += old * baseband[(j, c)];
                corr += residual[c] * baseband[(j, c)].conj();
            }
            let new = if corr.modulus() > T::zero() { unit_phase(corr) } else { old };
            rf[(i, j)] = new;
            for c in 0..m {
                residual[c] -= new * baseband[(j, c)];
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::ula_response;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_target(rng: &mut ChaCha8Rng, p: usize, m: usize) -> CMatrix<f64> {
        DMatrix::from_fn(p, m, |_, _| Complex::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5))
    }

    #[test]
    fn steering_column_is_exact() {
        let a = ula_response(0.4_f64, 16).unwrap();
        let target = a * Complex::new(0.3, -1.2);
        let f = hybrid_factorize(&DMatrix::from_columns(&[target]), 1, &HybridOptions::default()).unwrap();
        assert!(f.approx_error < 1e-10);
        for z in f.rf.iter() {
            assert!((z.norm() - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn error_history_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10 {
            let t = random_target(&mut rng, 12, 3);
            let f = hybrid_factorize(&t, 3, &HybridOptions::default()).unwrap();
            for w in f.error_history.windows(2) {
                assert!(w[1] <= w[0]);
            }
            assert!((f.approx_error - fro(&(&t - &f.product))).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_target() {
        let t = CMatrix::<f64>::zeros(5, 2);
        let f = hybrid_factorize(&t, 2, &HybridOptions::default()).unwrap();
        assert_eq!(f.approx_error, 0.0);
        assert!(f.rf.iter().all(|z| *z == Complex::new(1.0, 0.0)));
        assert!(f.baseband.iter().all(|z| *z == Complex::new(0.0, 0.0)));
    }

    #[test]
    fn too_few_chains_rejected() {
        let t = CMatrix::<f64>::identity(4, 2);
        assert!(hybrid_factorize(&t, 1, &HybridOptions::default()).is_err());
    }

    #[test]
    fn global_phase_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = random_target(&mut rng, 10, 2);
        let rot = Complex::from_polar(1.0, 1.234);
        let a = hybrid_factorize(&t, 4, &HybridOptions::default()).unwrap();
        let b = hybrid_factorize(&(&t * rot), 4, &HybridOptions::default()).unwrap();
        assert!((a.approx_error - b.approx_error).abs() < 1e-12);
    }

    #[test]
    fn normalized_product_has_unit_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_target(&mut rng, 8, 2);
        let mut f = hybrid_factorize(&t, 2, &HybridOptions::default()).unwrap();
        f.normalize_product_columns();
        for c in f.product.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert!(fro(&(&f.rf * &f.baseband - &f.product)) < 1e-12);
    }
}
