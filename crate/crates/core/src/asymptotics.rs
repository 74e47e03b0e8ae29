//! Large-array approximations of the spectral efficiency for the
//! fully-digital and beam-steering designs.
//!
//! Every function returns bit/s/Hz. Path gains `alpha` are the lumped gains
//! of [`PathComponent::lumped_gain`](crate::channel::PathComponent::lumped_gain),
//! so a channel reads `H = gamma * A_r diag(alpha) A_t^H`.

use std::collections::HashMap;
use std::sync::{OnceLock, RwLock};

use nalgebra::{Complex, ComplexField};
use serde::{Deserialize, Serialize};

use crate::channel::{sample_ray_angle, steering_overlap, ChannelParams, ChannelRealization};
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitian_eigenvalues, log2_det_whitened, SortedSvd};
use crate::metrics::NoiseModel;
use crate::rng::substream;
use crate::scalar::{from_usize, lit, to_f64, CMatrix, Real};

fn log2_det<T: Real>(r: &CMatrix<T>, a: &CMatrix<T>) -> Result<f64> {
    log2_det_whitened(r, a)
        .map(|v| to_f64(v).max(0.0))
        .ok_or_else(|| Error::Numerical("disturbance covariance is not positive definite".into()))
}

fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 0.0) {
        return invalid(format!("transmit power must be finite and nonnegative, got {p}"));
    }
    Ok(())
}

fn check_powers(p: &[f64], users: usize) -> Result<()> {
    if p.len() != users {
        return invalid(format!("expected {users} user powers, got {}", p.len()));
    }
    p.iter().try_for_each(|&x| check_power(x))
}

fn check_users<T: Real>(channels: &[ChannelRealization<T>]) -> Result<(usize, usize)> {
    let Some(first) = channels.first() else {
        return invalid("at least one user is required");
    };
    let (n_r, n_t) = (first.n_r(), first.n_t());
    if channels.iter().any(|h| h.n_r() != n_r || h.n_t() != n_t) {
        return invalid("all users must share the array sizes");
    }
    Ok((n_r, n_t))
}

fn diag<T: Real>(d: &[T]) -> CMatrix<T> {
    CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        d.len(),
        d.iter().map(|&x| Complex::new(x, T::zero())),
    ))
}

/// Dominant singular values of every user's channel and the eigenvalues of
/// the interference each user sees through its channel-matched receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSummary<T: Real> {
    pub n_r: usize,
    pub n_t: usize,
    /// `lambda_{k,q}`, descending.
    pub lambdas: Vec<Vec<T>>,
    /// `lambda_{k,q} / sqrt(n_t n_r)`.
    pub lambdas_normalized: Vec<Vec<T>>,
    /// Eigenvalues of `sum_{l != k} Lambda V^H Q_l Q_l^H V Lambda^H`,
    /// descending.
    pub mus: Vec<Vec<T>>,
    /// The interference matrices themselves.
    pub interference: Vec<CMatrix<T>>,
}

impl<T: Real> SpectralSummary<T> {
    /// Summary with every user transmitting on its channel-matched precoder.
    pub fn channel_matched(channels: &[ChannelRealization<T>], m: usize) -> Result<Self> {
        let svds = channels
            .iter()
            .map(|h| SortedSvd::new(&h.matrix))
            .collect::<Result<Vec<_>>>()?;
        let precoders: Vec<CMatrix<T>> = svds.iter().map(|s| s.dominant(m).2).collect();
        Self::build(channels, &svds, &precoders, m)
    }

    /// Summary for arbitrary downlink precoders.
    pub fn with_precoders(channels: &[ChannelRealization<T>], precoders: &[CMatrix<T>], m: usize) -> Result<Self> {
        let svds = channels
            .iter()
            .map(|h| SortedSvd::new(&h.matrix))
            .collect::<Result<Vec<_>>>()?;
        Self::build(channels, &svds, precoders, m)
    }

    fn build(
        channels: &[ChannelRealization<T>],
        svds: &[SortedSvd<T>],
        precoders: &[CMatrix<T>],
        m: usize,
    ) -> Result<Self> {
        let (n_r, n_t) = check_users(channels)?;
        if m == 0 || m > n_r.min(n_t) {
            return invalid(format!("stream count {m} must lie in 1..={}", n_r.min(n_t)));
        }
        if precoders.len() != channels.len() || precoders.iter().any(|q| q.nrows() != n_t) {
            return invalid("one n_t-row precoder per user is required");
        }
        let scale = (from_usize::<T>(n_r) * from_usize::<T>(n_t)).sqrt();
        let mut summary = Self {
            n_r,
            n_t,
            lambdas: Vec::new(),
            lambdas_normalized: Vec::new(),
            mus: Vec::new(),
            interference: Vec::new(),
        };
        for (k, svd) in svds.iter().enumerate() {
            let (_, s, v) = svd.dominant(m);
            let lv = diag(&s) * v.adjoint();
            let mut z = CMatrix::<T>::zeros(m, m);
            for (l, q) in precoders.iter().enumerate() {
                if l != k {
                    let g = &lv * q;
                    z += &g * g.adjoint();
                }
            }
            let mus = hermitian_eigenvalues(&z).into_iter().map(|x| x.max(T::zero())).collect();
            summary.lambdas_normalized.push(s.iter().map(|&x| x / scale).collect());
            summary.lambdas.push(s);
            summary.mus.push(mus);
            summary.interference.push(z);
        }
        Ok(summary)
    }

    pub fn num_users(&self) -> usize {
        self.lambdas.len()
    }

    pub fn streams(&self) -> usize {
        self.lambdas.first().map_or(0, Vec::len)
    }
}

/// Channel-matched downlink, per-stream form: each normalized singular
/// value is paired with the interference eigenvalue of the same rank.
pub fn cmfd_dl_asymptotic<T: Real>(s: &SpectralSummary<T>, p_t_w: f64, noise: &NoiseModel) -> Result<f64> {
    check_power(p_t_w)?;
    let c = p_t_w / (s.num_users() * s.streams()) as f64;
    let nn = (s.n_r * s.n_t) as f64;
    let sigma2 = noise.sigma2();
    let mut total = 0.0;
    for (lam, mu) in s.lambdas_normalized.iter().zip(&s.mus) {
        for (l, u) in lam.iter().zip(mu) {
            let l = to_f64(*l);
            total += (1.0 + nn * c * l * l / (sigma2 + c * to_f64(*u))).log2();
        }
    }
    Ok(total)
}

/// Channel-matched downlink, log-det form
/// `log2 det(I + c (sigma^2 I + c Z_k)^{-1} Lambda_k^2)`.
pub fn cmfd_dl_log_det<T: Real>(s: &SpectralSummary<T>, p_t_w: f64, noise: &NoiseModel) -> Result<f64> {
    check_power(p_t_w)?;
    let m = s.streams();
    let c: T = lit(p_t_w / (s.num_users() * m) as f64);
    let sigma2: T = lit(noise.sigma2());
    let mut total = 0.0;
    for (lam, z) in s.lambdas.iter().zip(&s.interference) {
        let r = CMatrix::<T>::identity(m, m).scale(sigma2) + z.scale(c);
        let a = diag(lam).scale(c.sqrt());
        total += log2_det(&r, &a)?;
    }
    Ok(total)
}

/// Channel-matched uplink for user `k` with the base station combining on
/// the dominant left singular vectors.
pub fn cmfd_ul_asymptotic<T: Real>(
    channels: &[ChannelRealization<T>],
    k: usize,
    p_t_w: &[f64],
    noise: &NoiseModel,
    m: usize,
) -> Result<f64> {
    check_users(channels)?;
    check_powers(p_t_w, channels.len())?;
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range"));
    }
    let svds = channels
        .iter()
        .map(|h| SortedSvd::new(&h.matrix))
        .collect::<Result<Vec<_>>>()?;
    let n = channels[0].n_r().min(channels[0].n_t());
    if m == 0 || m > n {
        return invalid(format!("stream count {m} must lie in 1..={n}"));
    }
    let (u_k, s_k, _) = svds[k].dominant(m);
    let mf = m as f64;
    let mut r = CMatrix::<T>::identity(m, m).scale(lit(noise.sigma2()));
    for (l, svd) in svds.iter().enumerate() {
        if l != k {
            let (u_l, s_l, _) = svd.dominant(m);
            let g = u_k.adjoint() * u_l * diag(&s_l);
            r += (&g * g.adjoint()).scale(lit(p_t_w[l] / mf));
        }
    }
    let a = diag(&s_k).scale(lit::<T>(p_t_w[k] / mf).sqrt());
    log2_det(&r, &a)
}

/// Interference-free downlink
/// `sum_k sum_q log2(1 + n_t n_r P/(M K) |lambda~|^2 / sigma^2)`.
pub fn pzf_dl_asymptotic<T: Real>(s: &SpectralSummary<T>, p_t_w: f64, noise: &NoiseModel) -> Result<f64> {
    check_power(p_t_w)?;
    let c = p_t_w / (s.num_users() * s.streams()) as f64;
    Ok(s.lambdas_normalized
        .iter()
        .map(|lam| pzf_streams(lam, s.n_r * s.n_t, c, noise.sigma2()))
        .sum())
}

/// Interference-free uplink rate of user `k`.
pub fn pzf_ul_asymptotic<T: Real>(s: &SpectralSummary<T>, k: usize, p_t_k_w: f64, noise: &NoiseModel) -> Result<f64> {
    check_power(p_t_k_w)?;
    let lam = s
        .lambdas_normalized
        .get(k)
        .ok_or_else(|| Error::InvalidArgument(format!("user index {k} out of range")))?;
    Ok(pzf_streams(lam, s.n_r * s.n_t, p_t_k_w / s.streams() as f64, noise.sigma2()))
}

/// `sum_q log2(1 + nn c |l_q|^2 / sigma2)`.
pub fn pzf_streams<T: Real>(lambdas_normalized: &[T], nn: usize, c: f64, sigma2: f64) -> f64 {
    lambdas_normalized
        .iter()
        .map(|&l| {
            let l = to_f64(l);
            (1.0 + nn as f64 * c * l * l / sigma2).log2()
        })
        .sum()
}

/// Which array sizes are taken to infinity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "NT_INF")]
    NtInf,
    #[serde(rename = "NR_INF")]
    NrInf,
    #[serde(rename = "BOTH_INF")]
    BothInf,
}

/// Steering-vector inner products between the beams of user `k` and the
/// paths of user `l`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTables<T: Real> {
    /// `f_r[k][l]`: `M x N_l`, entry `(m, n)` is `f_{N_R}(aoa of beam m of k, aoa of path n of l)`.
    pub f_r: Vec<Vec<CMatrix<T>>>,
    /// `f_t[k][l]`: `M x N_l`, entry `(m, n)` is `f_{N_T}(aod of beam m of k, aod of path n of l)`.
    pub f_t: Vec<Vec<CMatrix<T>>>,
    /// Beam-steered path indices of every user.
    pub selected: Vec<Vec<usize>>,
}

impl<T: Real> OverlapTables<T> {
    pub fn new(channels: &[ChannelRealization<T>], selected: &[Vec<usize>]) -> Result<Self> {
        let (n_r, n_t) = check_users(channels)?;
        if selected.len() != channels.len() {
            return invalid("one path selection per user is required");
        }
        let m = selected[0].len();
        for (k, sel) in selected.iter().enumerate() {
            if sel.len() != m || m == 0 {
                return invalid("every user must steer the same positive number of beams");
            }
            if sel.iter().any(|&i| i >= channels[k].paths.len()) {
                return invalid(format!("user {k}: selected path out of range"));
            }
        }
        let table = |k: usize, l: usize, rx: bool| -> Result<CMatrix<T>> {
            let beams = &channels[k].paths;
            let paths = &channels[l].paths;
            let mut f = CMatrix::<T>::zeros(m, paths.len());
            for (row, &b) in selected[k].iter().enumerate() {
                for (col, p) in paths.iter().enumerate() {
                    f[(row, col)] = if rx {
                        steering_overlap(beams[b].aoa_rad, p.aoa_rad, n_r)?
                    } else {
                        steering_overlap(beams[b].aod_rad, p.aod_rad, n_t)?
                    };
                }
            }
            Ok(f)
        };
        let users = channels.len();
        let mut f_r = Vec::with_capacity(users);
        let mut f_t = Vec::with_capacity(users);
        for k in 0..users {
            f_r.push((0..users).map(|l| table(k, l, true)).collect::<Result<Vec<_>>>()?);
            f_t.push((0..users).map(|l| table(k, l, false)).collect::<Result<Vec<_>>>()?);
        }
        Ok(Self { f_r, f_t, selected: selected.to_vec() })
    }

    pub fn streams(&self) -> usize {
        self.selected.first().map_or(0, Vec::len)
    }

    fn columns(a: &CMatrix<T>, idx: &[usize]) -> CMatrix<T> {
        a.select_columns(idx)
    }

    /// `D_k^H D_k`.
    fn gram_rx(&self, k: usize) -> CMatrix<T> {
        Self::columns(&self.f_r[k][k], &self.selected[k])
    }
}

fn selected_gains<T: Real>(h: &ChannelRealization<T>, sel: &[usize]) -> CMatrix<T> {
    let g: Vec<Complex<T>> = sel.iter().map(|&i| h.paths[i].lumped_gain()).collect();
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(g))
}

fn all_gains<T: Real>(h: &ChannelRealization<T>) -> CMatrix<T> {
    CMatrix::from_diagonal(&nalgebra::DVector::from_vec(h.lumped_gains()))
}

fn check_tables<T: Real>(channels: &[ChannelRealization<T>], t: &OverlapTables<T>) -> Result<()> {
    if t.f_r.len() != channels.len() {
        return invalid("overlap tables do not match the channel set");
    }
    Ok(())
}

/// Exact downlink ASE of beam steering written with the overlap tables.
pub fn an_dl_matrix_form<T: Real>(
    channels: &[ChannelRealization<T>],
    t: &OverlapTables<T>,
    p_t_w: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    check_power(p_t_w)?;
    check_tables(channels, t)?;
    let users = channels.len();
    let c: T = lit(p_t_w / (users * t.streams()) as f64);
    let sigma2: T = lit(noise.sigma2());
    let mut total = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let fl = &t.f_r[k][k] * all_gains(h);
        let mut r = t.gram_rx(k).scale(sigma2);
        for l in 0..users {
            if l != k {
                let g = (&fl * t.f_t[l][k].adjoint()).scale(h.gamma);
                r += (&g * g.adjoint()).scale(c);
            }
        }
        let a = (&fl * t.f_t[k][k].adjoint()).scale(h.gamma * c.sqrt());
        total += log2_det(&r, &a)?;
    }
    Ok(total)
}

/// Large-array downlink ASE of beam steering.
pub fn an_dl_asymptotic<T: Real>(
    channels: &[ChannelRealization<T>],
    t: &OverlapTables<T>,
    regime: Regime,
    p_t_w: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    check_power(p_t_w)?;
    check_tables(channels, t)?;
    let users = channels.len();
    let m = t.streams();
    let cf = p_t_w / (users * m) as f64;
    let c: T = lit(cf);
    let sigma2: T = lit(noise.sigma2());
    let mut total = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let sel = &t.selected[k];
        total += match regime {
            Regime::NtInf => {
                let g = t.gram_rx(k);
                let a = (&g * selected_gains(h, sel)).scale(h.gamma * c.sqrt());
                log2_det(&g.scale(sigma2), &a)?
            }
            Regime::NrInf => {
                let lc = selected_gains(h, sel).conjugate();
                let mut r = CMatrix::<T>::identity(m, m).scale(sigma2);
                for l in 0..users {
                    if l != k {
                        let b = OverlapTables::columns(&t.f_t[l][k], sel) * &lc;
                        r += (b.adjoint() * &b).scale(c * h.gamma * h.gamma);
                    }
                }
                let b = OverlapTables::columns(&t.f_t[k][k], sel) * &lc;
                log2_det(&r, &b.adjoint().scale(h.gamma * c.sqrt()))?
            }
            Regime::BothInf => both_inf_terms(h, sel, cf, noise.sigma2()),
        };
    }
    Ok(total)
}

/// `sum_{i in sel} log2(1 + c gamma^2 |alpha_i|^2 / sigma2)`.
fn both_inf_terms<T: Real>(h: &ChannelRealization<T>, sel: &[usize], c: f64, sigma2: f64) -> f64 {
    let g2 = to_f64(h.gamma).powi(2);
    sel.iter()
        .map(|&i| {
            let a = to_f64(h.paths[i].strength());
            (1.0 + c * g2 * a * a / sigma2).log2()
        })
        .sum()
}

/// Exact uplink ASE of user `k` for beam steering, via the overlap tables.
pub fn an_ul_matrix_form<T: Real>(
    channels: &[ChannelRealization<T>],
    t: &OverlapTables<T>,
    k: usize,
    p_t_w: &[f64],
    noise: &NoiseModel,
) -> Result<f64> {
    check_tables(channels, t)?;
    check_powers(p_t_w, channels.len())?;
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range"));
    }
    let m = t.streams() as f64;
    let mut r = t.gram_rx(k).scale(lit(noise.sigma2()));
    for (l, h) in channels.iter().enumerate() {
        if l != k {
            let g = (&t.f_r[k][l] * all_gains(h) * t.f_t[l][l].adjoint()).scale(h.gamma);
            r += (&g * g.adjoint()).scale(lit(p_t_w[l] / m));
        }
    }
    let h = &channels[k];
    let a = (&t.f_r[k][k] * all_gains(h) * t.f_t[k][k].adjoint()).scale(h.gamma * lit::<T>(p_t_w[k] / m).sqrt());
    log2_det(&r, &a)
}

/// Large-array uplink ASE of user `k` for beam steering. `NtInf` grows the
/// terminal arrays, `NrInf` the base-station array.
pub fn an_ul_asymptotic<T: Real>(
    channels: &[ChannelRealization<T>],
    t: &OverlapTables<T>,
    regime: Regime,
    k: usize,
    p_t_w: &[f64],
    noise: &NoiseModel,
) -> Result<f64> {
    check_tables(channels, t)?;
    check_powers(p_t_w, channels.len())?;
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range"));
    }
    let m = t.streams();
    let mf = m as f64;
    let sigma2 = noise.sigma2();
    let h = &channels[k];
    let sel = &t.selected[k];
    match regime {
        Regime::NrInf => {
            let b = OverlapTables::columns(&t.f_t[k][k], sel) * selected_gains(h, sel).conjugate();
            let a = b.adjoint().scale(h.gamma * lit::<T>(p_t_w[k] / mf).sqrt());
            log2_det(&CMatrix::<T>::identity(m, m).scale(lit(sigma2)), &a)
        }
        Regime::NtInf => {
            let mut r = t.gram_rx(k).scale(lit(sigma2));
            for (l, hl) in channels.iter().enumerate() {
                if l != k {
                    let g = OverlapTables::columns(&t.f_r[k][l], &t.selected[l]) * selected_gains(hl, &t.selected[l]);
                    r += (&g * g.adjoint()).scale(hl.gamma * hl.gamma * lit(p_t_w[l] / mf));
                }
            }
            let a = (OverlapTables::columns(&t.f_r[k][k], sel) * selected_gains(h, sel))
                .scale(h.gamma * lit::<T>(p_t_w[k] / mf).sqrt());
            log2_det(&r, &a)
        }
        Regime::BothInf => Ok(both_inf_terms(h, sel, p_t_w[k] / mf, sigma2)),
    }
}

/// Single-beam limits of the beam-steering ASE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingleBeamLimit {
    /// Transmit array unbounded: interference-free, noise-limited.
    #[serde(rename = "NT_INF")]
    NtInf,
    /// Receive array unbounded at finite SNR.
    #[serde(rename = "NR_INF")]
    NrInf,
    /// Receive array unbounded, noise negligible: interference-limited.
    #[serde(rename = "NR_INF_NOISE_FREE")]
    NrInfNoiseFree,
    #[serde(rename = "BOTH_INF")]
    BothInf,
}

fn check_single_beam<T: Real>(channels: &[ChannelRealization<T>], selected: &[usize]) -> Result<()> {
    check_users(channels)?;
    if selected.len() != channels.len() {
        return invalid("one selected path per user is required");
    }
    for (h, &s) in channels.iter().zip(selected) {
        if s >= h.paths.len() {
            return invalid("selected path out of range");
        }
    }
    Ok(())
}

/// `sum_i alpha_{src,i} f_{N_R}(aoa_rx, aoa_{src,i}) f_{N_T}(aod_{src,i}, aod_tx)`:
/// the gain of the channel of `src` between a receive beam at `aoa_rx`
/// and a transmit beam at `aod_tx`.
fn beam_gain<T: Real>(src: &ChannelRealization<T>, aoa_rx: T, aod_tx: T) -> Result<Complex<T>> {
    let (n_r, n_t) = (src.n_r(), src.n_t());
    let mut acc = Complex::new(T::zero(), T::zero());
    for p in &src.paths {
        acc += p.lumped_gain() * steering_overlap(aoa_rx, p.aoa_rad, n_r)? * steering_overlap(p.aod_rad, aod_tx, n_t)?;
    }
    Ok(acc)
}

/// Exact single-beam downlink ASE from the path parameters.
pub fn an_dl_exact_m1<T: Real>(
    channels: &[ChannelRealization<T>],
    selected: &[usize],
    p_t_w: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    check_power(p_t_w)?;
    check_single_beam(channels, selected)?;
    let c = p_t_w / channels.len() as f64;
    let mut total = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let beam = &h.paths[selected[k]];
        let g2 = to_f64(h.gamma).powi(2);
        let signal = c * g2 * to_f64(beam_gain(h, beam.aoa_rad, beam.aod_rad)?.modulus()).powi(2);
        let mut den = noise.sigma2();
        for (l, hl) in channels.iter().enumerate() {
            if l != k {
                let other = hl.paths[selected[l]].aod_rad;
                den += c * g2 * to_f64(beam_gain(h, beam.aoa_rad, other)?.modulus()).powi(2);
            }
        }
        total += (1.0 + signal / den).log2();
    }
    Ok(total)
}

/// Exact single-beam uplink ASE of user `k` from the path parameters.
pub fn an_ul_exact_m1<T: Real>(
    channels: &[ChannelRealization<T>],
    selected: &[usize],
    k: usize,
    p_t_w: &[f64],
    noise: &NoiseModel,
) -> Result<f64> {
    check_single_beam(channels, selected)?;
    check_powers(p_t_w, channels.len())?;
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range"));
    }
    let h = &channels[k];
    let beam = &h.paths[selected[k]];
    let signal = p_t_w[k] * to_f64(h.gamma).powi(2) * to_f64(beam_gain(h, beam.aoa_rad, beam.aod_rad)?.modulus()).powi(2);
    let mut den = noise.sigma2();
    for (l, hl) in channels.iter().enumerate() {
        if l != k {
            let own = hl.paths[selected[l]].aod_rad;
            den += p_t_w[l] * to_f64(hl.gamma).powi(2) * to_f64(beam_gain(hl, beam.aoa_rad, own)?.modulus()).powi(2);
        }
    }
    Ok((1.0 + signal / den).log2())
}

/// Single-beam downlink limits.
pub fn an_dl_limit_m1<T: Real>(
    channels: &[ChannelRealization<T>],
    selected: &[usize],
    limit: SingleBeamLimit,
    p_t_w: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    check_power(p_t_w)?;
    check_single_beam(channels, selected)?;
    let users = channels.len();
    let c = p_t_w / users as f64;
    let sigma2 = noise.sigma2();
    let mut total = 0.0;
    for (k, h) in channels.iter().enumerate() {
        let beam = &h.paths[selected[k]];
        let snr = c * to_f64(h.gamma).powi(2) * to_f64(beam.strength()).powi(2);
        let leak = || -> Result<f64> {
            let mut acc = 0.0;
            for (l, hl) in channels.iter().enumerate() {
                if l != k {
                    let f = steering_overlap(beam.aod_rad, hl.paths[selected[l]].aod_rad, h.n_t())?;
                    acc += to_f64(f.modulus()).powi(2);
                }
            }
            Ok(acc)
        };
        total += match limit {
            SingleBeamLimit::NtInf | SingleBeamLimit::BothInf => (1.0 + snr / sigma2).log2(),
            SingleBeamLimit::NrInf => (1.0 + snr / (sigma2 + snr * leak()?)).log2(),
            SingleBeamLimit::NrInfNoiseFree => {
                let s = leak()?;
                if !(s > 0.0) {
                    return invalid("interference-limited form needs at least two users with overlapping beams");
                }
                (1.0 + 1.0 / s).log2()
            }
        };
    }
    Ok(total)
}

/// Single-beam uplink limits for user `k`. The noise-free form assumes
/// equal transmit powers, as its ratio carries none.
pub fn an_ul_limit_m1<T: Real>(
    channels: &[ChannelRealization<T>],
    selected: &[usize],
    limit: SingleBeamLimit,
    k: usize,
    p_t_w: &[f64],
    noise: &NoiseModel,
) -> Result<f64> {
    check_single_beam(channels, selected)?;
    check_powers(p_t_w, channels.len())?;
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range"));
    }
    let sigma2 = noise.sigma2();
    let h = &channels[k];
    let beam = &h.paths[selected[k]];
    let rx_gain = |l: usize| -> f64 {
        let hl = &channels[l];
        to_f64(hl.gamma).powi(2) * to_f64(hl.paths[selected[l]].strength()).powi(2)
    };
    let leak = |l: usize| -> Result<f64> {
        let other = channels[l].paths[selected[l]].aoa_rad;
        Ok(to_f64(steering_overlap(beam.aoa_rad, other, h.n_r())?.modulus()).powi(2))
    };
    let signal = p_t_w[k] * rx_gain(k);
    Ok(match limit {
        // Limits here are named after the array that grows; the base
        // station array is the receive one.
        SingleBeamLimit::NrInf | SingleBeamLimit::BothInf => (1.0 + signal / sigma2).log2(),
        SingleBeamLimit::NtInf => {
            let mut den = sigma2;
            for l in (0..channels.len()).filter(|&l| l != k) {
                den += p_t_w[l] * rx_gain(l) * leak(l)?;
            }
            (1.0 + signal / den).log2()
        }
        SingleBeamLimit::NrInfNoiseFree => {
            let mut den = 0.0;
            for l in (0..channels.len()).filter(|&l| l != k) {
                den += rx_gain(l) * leak(l)?;
            }
            if !(den > 0.0) {
                return invalid("interference-limited form needs at least two users with overlapping beams");
            }
            (1.0 + rx_gain(k) / den).log2()
        }
    })
}

/// Number of angle pairs in the overlap expectation estimate.
pub const OVERLAP_SAMPLES: usize = 10_000;
const OVERLAP_SEED: u64 = 0x5eed_0f_a11;

type OverlapKey = (usize, u64, usize, u64);

fn overlap_cache() -> &'static RwLock<HashMap<OverlapKey, f64>> {
    static CACHE: OnceLock<RwLock<HashMap<OverlapKey, f64>>> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(HashMap::new()))
}

/// Monte Carlo estimate of `E |f_P(phi_1, phi_2)|^2` for independent angles
/// drawn from the channel generator's ray prior. Results are cached.
pub fn expected_overlap_sq(p: usize, params: &ChannelParams, samples: usize, seed: u64) -> Result<f64> {
    if p == 0 || samples == 0 {
        return invalid("array size and sample count must be positive");
    }
    params.validate()?;
    let key = (p, params.angular_spread_deg.to_bits(), samples, seed);
    if let Some(v) = overlap_cache().read().ok().and_then(|c| c.get(&key).copied()) {
        return Ok(v);
    }
    let mut rng = substream(seed, &[p as u64, params.angular_spread_deg.to_bits()]);
    let mut acc = 0.0;
    for _ in 0..samples {
        let a = sample_ray_angle(params, &mut rng);
        let b = sample_ray_angle(params, &mut rng);
        acc += steering_overlap(a, b, p)?.norm_sqr();
    }
    let v = acc / samples as f64;
    if let Ok(mut c) = overlap_cache().write() {
        c.insert(key, v);
    }
    Ok(v)
}

/// `E |f_P|^2` with the default sample budget and seed.
pub fn default_expected_overlap_sq(p: usize, params: &ChannelParams) -> Result<f64> {
    expected_overlap_sq(p, params, OVERLAP_SAMPLES, OVERLAP_SEED)
}

/// Downlink ASE for unbounded receive arrays and many users,
/// `1 / (ln 2 E|f_{N_T}|^2)`.
pub fn an_dl_large_k_limit(expected_overlap_sq: f64) -> Result<f64> {
    if !(expected_overlap_sq > 0.0 && expected_overlap_sq.is_finite()) {
        return invalid("overlap expectation must be positive");
    }
    Ok(1.0 / (std::f64::consts::LN_2 * expected_overlap_sq))
}

/// Per-user uplink rate for many users and unbounded terminal arrays,
/// `log2(1 + |alpha_k|^2 / ((K - 1) E[|alpha|^2 |f_{N_R}|^2]))`. It vanishes
/// as `K` grows.
pub fn an_ul_large_k_user(alpha_k_sq: f64, users: usize, expected_weighted_overlap: f64) -> Result<f64> {
    if users < 2 || !(expected_weighted_overlap > 0.0) || !(alpha_k_sq >= 0.0) {
        return invalid("need at least two users and a positive interference expectation");
    }
    Ok((1.0 + alpha_k_sq / ((users - 1) as f64 * expected_weighted_overlap)).log2())
}
