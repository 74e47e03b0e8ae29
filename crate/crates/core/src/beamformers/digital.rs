//! Fully-digital designs: channel-matched (dominant singular vectors) and
//! partial zero-forcing.

use nalgebra::Complex;

use crate::channel::ChannelRealization;
use crate::error::{invalid, Error, Result};
use crate::linalg::{orthonormal_basis, pinv, polar_orthonormalize, SortedSvd};
use crate::scalar::{lit, CMatrix, Real};

/// Channel-matched precoder and postcoder: the `m` dominant right and left
/// singular vectors of `H`, in descending singular-value order.
pub fn cm_fd<T: Real>(h: &ChannelRealization<T>, m: usize) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let svd = SortedSvd::new(&h.matrix)?;
    cm_fd_from_svd(&svd, m, h.n_r(), h.n_t())
}

pub(crate) fn cm_fd_from_svd<T: Real>(
    svd: &SortedSvd<T>,
    m: usize,
    n_r: usize,
    n_t: usize,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    if m == 0 || m > n_r.min(n_t) {
        return invalid(format!("stream count {m} must lie in 1..={}", n_r.min(n_t)));
    }
    let (u, _, v) = svd.dominant(m);
    Ok((v, u))
}

/// Projector `I - B B^H` onto the orthogonal complement of the span of the
/// columns of `stack`.
fn complement_projector<T: Real>(stack: &CMatrix<T>) -> CMatrix<T> {
    let n = stack.nrows();
    let basis = orthonormal_basis(stack);
    CMatrix::<T>::identity(n, n) - &basis * basis.adjoint()
}

fn stack_columns<T: Real>(blocks: &[CMatrix<T>], rows: usize) -> CMatrix<T> {
    let cols: usize = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = CMatrix::<T>::zeros(rows, cols);
    let mut at = 0;
    for b in blocks {
        out.columns_mut(at, b.ncols()).copy_from(b);
        at += b.ncols();
    }
    out
}

/// Rank threshold for projected precoders and effective channels.
fn rank_tol<T: Real>() -> T {
    lit(1e-10)
}

/// Partial zero-forcing precoder and pseudo-inverse postcoder for user `k`.
///
/// The channel-matched precoder of user `k` is projected onto the
/// orthogonal complement of the `m` dominant right singular vectors of every
/// other user's channel and then re-orthonormalized. The postcoder is
/// `((H_k Q_k)^+)^H`, so that `D_k^H H_k Q_k = I`.
pub fn pzf_fd<T: Real>(
    channels: &[ChannelRealization<T>],
    k: usize,
    m: usize,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let svds = channels
        .iter()
        .map(|h| SortedSvd::new(&h.matrix))
        .collect::<Result<Vec<_>>>()?;
    pzf_fd_from_svds(channels, &svds, k, m)
}

pub(crate) fn pzf_fd_from_svds<T: Real>(
    channels: &[ChannelRealization<T>],
    svds: &[SortedSvd<T>],
    k: usize,
    m: usize,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let users = channels.len();
    if k >= users {
        return invalid(format!("user index {k} out of range for {users} users"));
    }
    let h = &channels[k];
    let n_t = h.n_t();
    if n_t < m * users {
        return Err(Error::Infeasible(format!(
            "PZF needs at least M*K = {} transmit antennas, have {n_t}",
            m * users
        )));
    }
    let (q_cm, _) = cm_fd_from_svd(&svds[k], m, h.n_r(), n_t)?;
    let q = if users > 1 {
        let others: Vec<CMatrix<T>> = (0..users)
            .filter(|&l| l != k)
            .map(|l| cm_fd_from_svd(&svds[l], m, channels[l].n_r(), n_t).map(|(v, _)| v))
            .collect::<Result<_>>()?;
        let projected = complement_projector(&stack_columns(&others, n_t)) * q_cm;
        polar_orthonormalize(&projected, rank_tol())?
    } else {
        q_cm
    };
    let effective = &h.matrix * &q;
    check_rank(&effective, "H_k Q_k")?;
    let d = pinv(&effective)?.adjoint();
    Ok((q, d))
}

fn check_rank<T: Real>(a: &CMatrix<T>, what: &str) -> Result<()> {
    let svd = SortedSvd::new(a)?;
    let s_max = svd.singular_values[0];
    let s_min = *svd.singular_values.last().unwrap();
    if svd.singular_values.len() < a.ncols() || !(s_max > T::zero()) || s_min <= rank_tol::<T>() * s_max {
        return Err(Error::SingularProjection(format!("{what} is rank deficient")));
    }
    Ok(())
}

/// Uplink counterpart of [`pzf_fd`]: the receive-side postcoder of user `k`
/// is the channel-matched postcoder projected away from the `m` dominant
/// left singular vectors of the other users' channels; the user transmits
/// on its channel-matched precoder.
pub fn pzf_fd_uplink<T: Real>(
    channels: &[ChannelRealization<T>],
    k: usize,
    m: usize,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let svds = channels
        .iter()
        .map(|h| SortedSvd::new(&h.matrix))
        .collect::<Result<Vec<_>>>()?;
    pzf_fd_uplink_from_svds(channels, &svds, k, m)
}

pub(crate) fn pzf_fd_uplink_from_svds<T: Real>(
    channels: &[ChannelRealization<T>],
    svds: &[SortedSvd<T>],
    k: usize,
    m: usize,
) -> Result<(CMatrix<T>, CMatrix<T>)> {
    let users = channels.len();
    if k >= users {
        return invalid(format!("user index {k} out of range for {users} users"));
    }
    let h = &channels[k];
    let n_r = h.n_r();
    if n_r < m * users {
        return Err(Error::Infeasible(format!(
            "uplink PZF needs at least M*K = {} receive antennas, have {n_r}",
            m * users
        )));
    }
    let (q, d_cm) = cm_fd_from_svd(&svds[k], m, n_r, h.n_t())?;
    let d = if users > 1 {
        let others: Vec<CMatrix<T>> = (0..users)
            .filter(|&l| l != k)
            .map(|l| cm_fd_from_svd(&svds[l], m, n_r, channels[l].n_t()).map(|(_, u)| u))
            .collect::<Result<_>>()?;
        let projected = complement_projector(&stack_columns(&others, n_r)) * d_cm;
        polar_orthonormalize(&projected, rank_tol())?
    } else {
        d_cm
    };
    Ok((q, d))
}

/// Scales every nonzero column to unit Euclidean norm.
pub fn normalize_columns<T: Real>(a: &mut CMatrix<T>) {
    for mut col in a.column_iter_mut() {
        let n = col.norm();
        if n > T::zero() {
            col /= Complex::new(n, T::zero());
        }
    }
}
