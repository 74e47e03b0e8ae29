//! Small dense complex linear-algebra helpers on top of nalgebra.

use nalgebra::{Complex, ComplexField};

use crate::error::{Error, Result};
use crate::scalar::{lit, unit_phase, CMatrix, Real};

/// Thin SVD with singular values in descending order.
///
/// Each singular pair is phase-normalized so that the largest-magnitude
/// entry of the right singular vector is real and positive (lowest index on
/// ties), which makes the factors deterministic.
#[derive(Debug, Clone)]
pub struct SortedSvd<T: Real> {
    pub u: CMatrix<T>,
    pub singular_values: Vec<T>,
    pub v: CMatrix<T>,
}

impl<T: Real> SortedSvd<T> {
    pub fn new(a: &CMatrix<T>) -> Result<Self> {
        let (rows, cols) = a.shape();
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidArgument("SVD of an empty matrix".into()));
        }
        let svd = a.clone().svd(true, true);
        let u_raw = svd.u.ok_or_else(|| Error::Numerical("SVD did not return U".into()))?;
        let v_t = svd.v_t.ok_or_else(|| Error::Numerical("SVD did not return V^H".into()))?;
        let v_raw = v_t.adjoint();
        let r = svd.singular_values.len();

        let mut order: Vec<usize> = (0..r).collect();
        // stable sort keeps the lower index first on equal values
        order.sort_by(|&i, &j| {
            svd.singular_values[j]
                .partial_cmp(&svd.singular_values[i])
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let mut u = CMatrix::<T>::zeros(rows, r);
        let mut v = CMatrix::<T>::zeros(cols, r);
        let mut singular_values = Vec::with_capacity(r);
        for (dst, &src) in order.iter().enumerate() {
            let mut vc = v_raw.column(src).into_owned();
            let mut uc = u_raw.column(src).into_owned();
            let mut best = 0;
            let mut best_mag = T::zero();
            for (i, z) in vc.iter().enumerate() {
                let mag = z.modulus();
                if mag > best_mag {
                    best_mag = mag;
                    best = i;
                }
            }
            let rot = unit_phase(vc[best]).conj();
            vc *= rot;
            uc *= rot;
            // the pivot entry is now real up to rounding; make it exact
            vc[best] = Complex::new(vc[best].modulus(), T::zero());
            u.set_column(dst, &uc);
            v.set_column(dst, &vc);
            singular_values.push(svd.singular_values[src]);
        }
        Ok(Self { u, singular_values, v })
    }

    /// First `m` left/right singular vectors.
    pub fn dominant(&self, m: usize) -> (CMatrix<T>, Vec<T>, CMatrix<T>) {
        (
            self.u.columns(0, m).into_owned(),
            self.singular_values[..m].to_vec(),
            self.v.columns(0, m).into_owned(),
        )
    }
}

/// Moore-Penrose pseudo-inverse, truncating singular values below
/// `max(rows, cols) * eps * s_max`.
pub fn pinv<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let (rows, cols) = a.shape();
    let svd = SortedSvd::new(a)?;
    let s_max = svd.singular_values.first().copied().unwrap_or_else(T::zero);
    let cutoff = s_max * T::eps() * lit::<T>(rows.max(cols) as f64);
    let mut out = CMatrix::<T>::zeros(cols, rows);
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff {
            let vi = svd.v.column(i);
            let ui = svd.u.column(i);
            let scale = Complex::new(T::one() / s, T::zero());
            out += (vi * scale) * ui.adjoint();
        }
    }
    Ok(out)
}

/// Replaces `a` by `(a + a^H) / 2`.
pub fn hermitianize<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    let half = Complex::new(lit::<T>(0.5), T::zero());
    (a + a.adjoint()) * half
}

/// Natural-log determinant of a Hermitian positive-definite matrix.
pub fn ln_det_hpd<T: Real>(a: &CMatrix<T>) -> Option<T> {
    let chol = hermitianize(a).cholesky()?;
    let l = chol.l();
    let mut acc = T::zero();
    for i in 0..l.nrows() {
        acc += l[(i, i)].re.ln();
    }
    Some(acc + acc)
}

/// `log2 det(I + R^{-1} A A^H)` for Hermitian positive-definite `R`.
///
/// Evaluated by whitening `A` with the Cholesky factor of `R`, which avoids
/// the cancellation of `log det(R + A A^H) - log det(R)` at low SNR.
pub fn log2_det_whitened<T: Real>(r: &CMatrix<T>, a: &CMatrix<T>) -> Option<T> {
    let chol = hermitianize(r).cholesky()?;
    let l = chol.l();
    let b = l.solve_lower_triangular(a)?;
    let m = b.nrows();
    let g = CMatrix::<T>::identity(m, m) + &b * b.adjoint();
    ln_det_hpd(&g).map(|v| v / T::ln_2())
}

/// Closest matrix with orthonormal columns (polar factor `U W^H` of `X = U S W^H`).
///
/// Fails when the smallest singular value falls below `rel_tol * s_max`.
pub fn polar_orthonormalize<T: Real>(x: &CMatrix<T>, rel_tol: T) -> Result<CMatrix<T>> {
    let svd = SortedSvd::new(x)?;
    let s_max = svd.singular_values[0];
    let s_min = *svd.singular_values.last().unwrap();
    if !(s_max > T::zero()) || s_min <= rel_tol * s_max || svd.singular_values.len() < x.ncols() {
        return Err(Error::SingularProjection(format!(
            "projected columns lost rank (s_min / s_max = {})",
            crate::scalar::to_f64(if s_max > T::zero() { s_min / s_max } else { T::zero() })
        )));
    }
    Ok(&svd.u * svd.v.adjoint())
}

/// Orthonormal basis of the column space of `a` via Householder QR.
pub fn orthonormal_basis<T: Real>(a: &CMatrix<T>) -> CMatrix<T> {
    a.clone().qr().q()
}

/// Eigenvalues of a Hermitian matrix, descending.
pub fn hermitian_eigenvalues<T: Real>(a: &CMatrix<T>) -> Vec<T> {
    let eig = hermitianize(a).symmetric_eigenvalues();
    let mut vals: Vec<T> = eig.iter().copied().collect();
    vals.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    vals
}

/// Squared Frobenius norm.
pub fn fro2<T: Real>(a: &CMatrix<T>) -> T {
    a.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

pub fn fro<T: Real>(a: &CMatrix<T>) -> T {
    fro2(a).sqrt()
}

pub fn real<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex<f64> {
        Complex::new(re, im)
    }

    fn sample() -> CMatrix<f64> {
        DMatrix::from_row_slice(
            3,
            2,
            &[c(1.0, 0.5), c(-0.3, 2.0), c(0.2, -1.0), c(1.5, 0.0), c(0.0, 0.7), c(-1.1, 0.4)],
        )
    }

    #[test]
    fn svd_reconstructs_and_is_sorted() {
        let a = sample();
        let svd = SortedSvd::new(&a).unwrap();
        assert!(svd.singular_values[0] >= svd.singular_values[1]);
        let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
            2,
            svd.singular_values.iter().map(|&x| c(x, 0.0)),
        ));
        let rec = &svd.u * s * svd.v.adjoint();
        assert!(fro(&(rec - &a)) < 1e-12);
        for i in 0..2 {
            let col = svd.v.column(i);
            let (idx, _) = col
                .iter()
                .enumerate()
                .max_by(|x, y| x.1.norm().partial_cmp(&y.1.norm()).unwrap())
                .unwrap();
            assert_eq!(col[idx].im, 0.0);
            assert!(col[idx].re > 0.0);
        }
    }

    #[test]
    fn pinv_is_left_inverse_for_full_column_rank() {
        let a = sample();
        let p = pinv(&a).unwrap();
        let id = &p * &a;
        assert!(fro(&(id - DMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn whitened_logdet_matches_direct_form() {
        let a = sample();
        let r = DMatrix::identity(3, 3) * c(0.5, 0.0) + &a * a.adjoint() * c(0.1, 0.0);
        let direct = (ln_det_hpd(&(&r + &a * a.adjoint())).unwrap() - ln_det_hpd(&r).unwrap())
            / std::f64::consts::LN_2;
        let whitened = log2_det_whitened(&r, &a).unwrap();
        assert!((direct - whitened).abs() < 1e-12);
    }

    #[test]
    fn polar_factor_is_orthonormal() {
        let q = polar_orthonormalize(&sample(), 1e-12).unwrap();
        assert!(fro(&(q.adjoint() * &q - DMatrix::identity(2, 2))) < 1e-12);
    }

    #[test]
    fn polar_rejects_rank_deficient() {
        let mut a = sample();
        let col = a.column(0).into_owned();
        a.set_column(1, &col);
        assert!(matches!(
            polar_orthonormalize(&a, 1e-10),
            Err(Error::SingularProjection(_))
        ));
    }
}
