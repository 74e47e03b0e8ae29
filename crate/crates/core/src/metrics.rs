//! Achievable spectral efficiency, circuit power consumption and global
//! energy efficiency.

use serde::{Deserialize, Serialize};

use crate::beamformers::{Architecture, BeamformerSet, Link};
use crate::channel::{ChannelRealization, LinkDims};
use crate::error::{invalid, Error, Result};
use crate::linalg::{hermitianize, log2_det_whitened};
use crate::scalar::{lit, to_f64, CMatrix, Real};

/// Thermal noise at the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub bandwidth_hz: f64,
    pub noise_figure_db: f64,
    pub noise_psd_dbm_hz: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { bandwidth_hz: 500e6, noise_figure_db: 3.0, noise_psd_dbm_hz: -174.0 }
    }
}

impl NoiseModel {
    /// Noise power `F N0 W` in watts.
    pub fn sigma2(&self) -> f64 {
        10f64.powf((self.noise_figure_db + self.noise_psd_dbm_hz - 30.0) / 10.0) * self.bandwidth_hz
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0) || !self.sigma2().is_finite() || !(self.sigma2() > 0.0) {
            return invalid("noise model must give a positive finite noise power");
        }
        Ok(())
    }
}

/// Per-component power draw in watts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PowerModel {
    pub p_rfc_w: f64,
    pub p_dac_w: f64,
    pub p_adc_w: f64,
    pub p_pa_w: f64,
    pub p_lna_w: f64,
    pub p_bb_w: f64,
    pub p_ps_w: f64,
    pub p_ps_fixed_w: f64,
    pub p_sw_w: f64,
    pub p_element_w: f64,
    /// Power amplifier inefficiency.
    pub eta: f64,
    /// Count one LNA per receive antenna in the hybrid receiver. When false
    /// the LNA term scales with the transmit array size instead.
    pub correct_hy_rx_lna: bool,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self {
            p_rfc_w: 0.040,
            p_dac_w: 0.110,
            p_adc_w: 0.200,
            p_pa_w: 0.016,
            p_lna_w: 0.030,
            p_bb_w: 0.243,
            p_ps_w: 0.0195,
            p_ps_fixed_w: 0.001,
            p_sw_w: 0.005,
            p_element_w: 0.027,
            eta: 2.0,
            correct_hy_rx_lna: true,
        }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let parts = [
            self.p_rfc_w,
            self.p_dac_w,
            self.p_adc_w,
            self.p_pa_w,
            self.p_lna_w,
            self.p_bb_w,
            self.p_ps_w,
            self.p_ps_fixed_w,
            self.p_sw_w,
            self.p_element_w,
        ];
        if parts.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return invalid("component powers must be finite and nonnegative");
        }
        if !(self.eta > 1.0) || !self.eta.is_finite() {
            return invalid(format!("eta must exceed 1, got {}", self.eta));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    #[serde(rename = "TX")]
    Tx,
    #[serde(rename = "RX")]
    Rx,
}

/// Hardware counts of one transceiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayCounts {
    pub antennas: usize,
    pub rf_chains: usize,
    /// Phase levels of the fixed shifter bank (switch-and-phase-shifter only).
    pub phase_levels: usize,
    /// Antennas at the other end of the link; only the uncorrected hybrid
    /// receiver formula uses it.
    pub peer_antennas: usize,
}

/// Circuit power of one transceiver in watts.
pub fn consumed_power(kind: Architecture, side: Side, c: ArrayCounts, pm: &PowerModel) -> Result<f64> {
    if c.antennas == 0 {
        return invalid("antenna count must be at least 1");
    }
    let needs_rf = !matches!(kind, Architecture::CmFd | Architecture::PzfFd);
    if needs_rf && c.rf_chains == 0 {
        return invalid(format!("{kind} needs at least one RF chain"));
    }
    if kind == Architecture::SwPhsh && c.phase_levels == 0 {
        return invalid("switch-and-phase-shifter design needs at least one phase level");
    }
    let n = c.antennas as f64;
    let rf = c.rf_chains as f64;
    let nq = c.phase_levels as f64;
    let (conv, amp) = match side {
        Side::Tx => (pm.p_dac_w, pm.p_pa_w),
        Side::Rx => (pm.p_adc_w, pm.p_lna_w),
    };
    let p = match kind {
        Architecture::CmFd | Architecture::PzfFd => n * (pm.p_rfc_w + conv + amp) + pm.p_bb_w,
        Architecture::CmHy | Architecture::PzfHy => {
            let amp_count = match side {
                Side::Rx if !pm.correct_hy_rx_lna => {
                    if c.peer_antennas == 0 {
                        return invalid("peer antenna count is required by the uncorrected hybrid receiver");
                    }
                    c.peer_antennas as f64
                }
                _ => n,
            };
            rf * (pm.p_rfc_w + conv + n * pm.p_ps_w) + amp_count * amp + pm.p_bb_w
        }
        Architecture::An => rf * (pm.p_rfc_w + n * pm.p_element_w + conv),
        Architecture::SwPhsh => {
            rf * (pm.p_rfc_w + conv + nq * pm.p_ps_fixed_w) + n * (rf * pm.p_sw_w + amp) + pm.p_bb_w
        }
        Architecture::Sw => rf * (pm.p_rfc_w + conv + pm.p_sw_w) + rf * amp + pm.p_bb_w,
    };
    Ok(p)
}

/// Circuit power of the base station and of one terminal for a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CircuitPower {
    pub tx_w: f64,
    pub rx_w: f64,
}

pub fn circuit_power<T: Real>(bf: &BeamformerSet<T>, dims: LinkDims, pm: &PowerModel) -> Result<CircuitPower> {
    let tx = ArrayCounts {
        antennas: dims.n_t,
        rf_chains: bf.n_rf_tx,
        phase_levels: bf.n_q,
        peer_antennas: dims.n_r,
    };
    let rx = ArrayCounts {
        antennas: dims.n_r,
        rf_chains: bf.n_rf_rx,
        phase_levels: bf.n_q,
        peer_antennas: dims.n_t,
    };
    Ok(CircuitPower {
        tx_w: consumed_power(bf.kind, Side::Tx, tx, pm)?,
        rx_w: consumed_power(bf.kind, Side::Rx, rx, pm)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AseResult {
    /// bit/s/Hz
    pub total: f64,
    pub per_user: Vec<f64>,
    /// Some disturbance covariance needed diagonal loading.
    pub regularized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeResult {
    /// bit/J
    pub total: f64,
    pub consumed_power_w: f64,
}

/// Relative diagonal loading applied to a singular disturbance covariance.
pub const COVARIANCE_JITTER: f64 = 1e-12;

/// `log2 det(I + R^{-1} A A^H)` with `R` loaded by `1e-12 trace(R)/M` when
/// it is not numerically positive definite.
fn log_det_term<T: Real>(r: CMatrix<T>, a: &CMatrix<T>) -> Result<(f64, bool)> {
    let r = hermitianize(&r);
    if let Some(v) = log2_det_whitened(&r, a) {
        return Ok((to_f64(v).max(0.0), false));
    }
    let m = r.nrows();
    let trace = r.diagonal().iter().fold(T::zero(), |acc, z| acc + z.re);
    if !(trace > T::zero()) {
        // Only a zero postcoder gives an all-zero covariance; the signal
        // term then vanishes as well.
        if a.iter().all(|z| z.re == T::zero() && z.im == T::zero()) {
            return Ok((0.0, true));
        }
        return Err(Error::Numerical("disturbance covariance is zero while the signal is not".into()));
    }
    let load = trace * lit::<T>(COVARIANCE_JITTER) / lit::<T>(m as f64);
    let loaded = &r + CMatrix::<T>::identity(m, m).scale(load);
    let v = log2_det_whitened(&loaded, a)
        .ok_or_else(|| Error::Numerical("disturbance covariance is not positive definite".into()))?;
    Ok((to_f64(v).max(0.0), true))
}

fn check_set<T: Real>(channels: &[ChannelRealization<T>], bf: &BeamformerSet<T>) -> Result<usize> {
    let users = channels.len();
    if users == 0 || bf.precoders.len() != users || bf.postcoders.len() != users {
        return invalid(format!(
            "beamformer set has {} precoders and {} postcoders for {users} channels",
            bf.precoders.len(),
            bf.postcoders.len()
        ));
    }
    let m = bf.streams();
    for (k, h) in channels.iter().enumerate() {
        let (q, d) = (&bf.precoders[k], &bf.postcoders[k]);
        if q.shape() != (h.n_t(), m) || d.shape() != (h.n_r(), m) {
            return invalid(format!("user {k}: beamformer shapes do not match the channel"));
        }
    }
    Ok(m)
}

fn check_power(p: f64) -> Result<()> {
    if !(p.is_finite() && p >= 0.0) {
        return invalid(format!("transmit power must be finite and nonnegative, got {p}"));
    }
    Ok(())
}

/// Downlink ASE with `P_T` split evenly over the `K M` streams.
pub fn ase_downlink<T: Real>(
    channels: &[ChannelRealization<T>],
    bf: &BeamformerSet<T>,
    p_t_w: f64,
    noise: &NoiseModel,
) -> Result<AseResult> {
    check_power(p_t_w)?;
    let m = check_set(channels, bf)?;
    let users = channels.len();
    let per_stream: T = lit(p_t_w / (users * m) as f64);
    let sigma2: T = lit(noise.sigma2());
    let mut per_user = Vec::with_capacity(users);
    let mut regularized = false;
    for (k, h) in channels.iter().enumerate() {
        let d = &bf.postcoders[k];
        let dh = d.adjoint() * &h.matrix;
        let mut r = (d.adjoint() * d).scale(sigma2);
        for (l, q) in bf.precoders.iter().enumerate() {
            if l != k {
                let g = &dh * q;
                r += (&g * g.adjoint()).scale(per_stream);
            }
        }
        let a = (&dh * &bf.precoders[k]).scale(per_stream.sqrt());
        let (v, reg) = log_det_term(r, &a)?;
        regularized |= reg;
        per_user.push(v);
    }
    Ok(AseResult { total: per_user.iter().sum(), per_user, regularized })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserAse {
    pub ase: f64,
    pub regularized: bool,
}

/// Uplink ASE of user `k` under single-user detection at the base station.
pub fn ase_uplink_user<T: Real>(
    channels: &[ChannelRealization<T>],
    bf: &BeamformerSet<T>,
    k: usize,
    p_t_w: &[f64],
    noise: &NoiseModel,
) -> Result<UserAse> {
    let m = check_set(channels, bf)?;
    if p_t_w.len() != channels.len() {
        return invalid(format!("expected {} user powers, got {}", channels.len(), p_t_w.len()));
    }
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range"));
    }
    for &p in p_t_w {
        check_power(p)?;
    }
    let sigma2: T = lit(noise.sigma2());
    let d = &bf.postcoders[k];
    let mut r = (d.adjoint() * d).scale(sigma2);
    for (l, h) in channels.iter().enumerate() {
        if l != k {
            let g = d.adjoint() * &h.matrix * &bf.precoders[l];
            r += (&g * g.adjoint()).scale(lit(p_t_w[l] / m as f64));
        }
    }
    let a = (d.adjoint() * &channels[k].matrix * &bf.precoders[k]).scale(lit::<T>(p_t_w[k] / m as f64).sqrt());
    let (ase, regularized) = log_det_term(r, &a)?;
    Ok(UserAse { ase, regularized })
}

/// Uplink ASE of every user.
pub fn ase_uplink<T: Real>(
    channels: &[ChannelRealization<T>],
    bf: &BeamformerSet<T>,
    p_t_w: &[f64],
    noise: &NoiseModel,
) -> Result<AseResult> {
    let mut per_user = Vec::with_capacity(channels.len());
    let mut regularized = false;
    for k in 0..channels.len() {
        let u = ase_uplink_user(channels, bf, k, p_t_w, noise)?;
        regularized |= u.regularized;
        per_user.push(u.ase);
    }
    Ok(AseResult { total: per_user.iter().sum(), per_user, regularized })
}

/// `W ASE / (eta P_T + P_TX,c + K P_RX,c)`.
pub fn gee_from_parts(
    ase: f64,
    p_t_w: f64,
    tx_circuit_w: f64,
    rx_circuit_w: f64,
    users: usize,
    pm: &PowerModel,
    noise: &NoiseModel,
) -> Result<GeeResult> {
    check_power(p_t_w)?;
    let denom = pm.eta * p_t_w + tx_circuit_w + users as f64 * rx_circuit_w;
    if !(denom > 0.0) {
        return invalid("GEE denominator must be positive");
    }
    Ok(GeeResult { total: noise.bandwidth_hz * ase / denom, consumed_power_w: denom })
}

/// Downlink GEE; circuit power counts the base station once and every
/// terminal once.
pub fn gee_downlink<T: Real>(
    ase: &AseResult,
    p_t_w: f64,
    bf: &BeamformerSet<T>,
    dims: LinkDims,
    pm: &PowerModel,
    noise: &NoiseModel,
) -> Result<GeeResult> {
    if bf.link != Link::Downlink {
        return invalid("downlink GEE needs a downlink beamformer set");
    }
    let cp = circuit_power(bf, dims, pm)?;
    gee_from_parts(ase.total, p_t_w, cp.tx_w, cp.rx_w, bf.num_users(), pm, noise)
}

/// Uplink GEE of one user; only the user's own transmitter circuitry is
/// counted.
pub fn gee_uplink_user<T: Real>(
    ase_k: f64,
    p_t_k_w: f64,
    bf: &BeamformerSet<T>,
    dims: LinkDims,
    pm: &PowerModel,
    noise: &NoiseModel,
) -> Result<f64> {
    if bf.link != Link::Uplink {
        return invalid("uplink GEE needs an uplink beamformer set");
    }
    let cp = circuit_power(bf, dims, pm)?;
    Ok(gee_from_parts(ase_k, p_t_k_w, cp.tx_w, 0.0, 0, pm, noise)?.total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamformers::{build, DesignOptions};
    use crate::channel::{generate_channel, ChannelParams};
    use crate::linalg::SortedSvd;
    use crate::rng::substream;
    use approx::assert_relative_eq;
    use nalgebra::Complex;

    fn counts(antennas: usize, rf_chains: usize) -> ArrayCounts {
        ArrayCounts { antennas, rf_chains, phase_levels: 8, peer_antennas: 16 }
    }

    fn users(n: usize, dims: LinkDims, seed: u64) -> Vec<ChannelRealization<f64>> {
        (0..n)
            .map(|k| generate_channel(&ChannelParams::default(), dims, 40.0, &mut substream(seed, &[k as u64])).unwrap())
            .collect()
    }

    #[test]
    fn noise_power_in_watts() {
        let s = NoiseModel::default().sigma2();
        assert_relative_eq!(s, 10f64.powf(-20.1) * 5e8, max_relative = 1e-12);
        assert!((s - 3.98e-12).abs() < 0.01e-12);
    }

    #[test]
    fn circuit_power_examples() {
        let pm = PowerModel::default();
        let fd = consumed_power(Architecture::CmFd, Side::Tx, counts(64, 0), &pm).unwrap();
        assert_relative_eq!(fd, 10.867, max_relative = 1e-12);
        let hy = consumed_power(Architecture::CmHy, Side::Tx, counts(64, 3), &pm).unwrap();
        assert_relative_eq!(hy, 5.461, max_relative = 1e-12);
        let an = consumed_power(Architecture::An, Side::Tx, counts(64, 3), &pm).unwrap();
        assert_relative_eq!(an, 5.634, max_relative = 1e-12);
        let rx = consumed_power(Architecture::PzfFd, Side::Rx, counts(16, 0), &pm).unwrap();
        assert_relative_eq!(rx, 16.0 * 0.27 + 0.243, max_relative = 1e-12);
    }

    #[test]
    fn remaining_formulas() {
        let pm = PowerModel::default();
        let sp = consumed_power(Architecture::SwPhsh, Side::Tx, counts(32, 4), &pm).unwrap();
        assert_relative_eq!(sp, 4.0 * (0.040 + 0.110 + 8.0 * 0.001) + 32.0 * (4.0 * 0.005 + 0.016) + 0.243, max_relative = 1e-12);
        let sw = consumed_power(Architecture::Sw, Side::Rx, counts(32, 4), &pm).unwrap();
        assert_relative_eq!(sw, 4.0 * (0.040 + 0.200 + 0.005) + 4.0 * 0.030 + 0.243, max_relative = 1e-12);
        let an = consumed_power(Architecture::An, Side::Rx, counts(16, 2), &pm).unwrap();
        assert_relative_eq!(an, 2.0 * (0.040 + 16.0 * 0.027 + 0.200), max_relative = 1e-12);
    }

    #[test]
    fn hybrid_receiver_lna_reading() {
        let mut pm = PowerModel::default();
        let c = ArrayCounts { antennas: 8, rf_chains: 2, phase_levels: 0, peer_antennas: 64 };
        let base = 2.0 * (0.040 + 0.200 + 8.0 * 0.0195) + 0.243;
        let fixed = consumed_power(Architecture::PzfHy, Side::Rx, c, &pm).unwrap();
        assert_relative_eq!(fixed, base + 8.0 * 0.030, max_relative = 1e-12);
        pm.correct_hy_rx_lna = false;
        let verbatim = consumed_power(Architecture::PzfHy, Side::Rx, c, &pm).unwrap();
        assert_relative_eq!(verbatim, base + 64.0 * 0.030, max_relative = 1e-12);
    }

    #[test]
    fn gee_arithmetic() {
        let pm = PowerModel::default();
        let noise = NoiseModel::default();
        let tx = consumed_power(Architecture::CmFd, Side::Tx, counts(64, 0), &pm).unwrap();
        let rx = consumed_power(Architecture::CmFd, Side::Rx, counts(16, 0), &pm).unwrap();
        let g = gee_from_parts(40.0, 1.0, tx, rx, 4, &pm, &noise).unwrap();
        let denom = 2.0 + 10.867 + 4.0 * (16.0 * (0.040 + 0.200 + 0.030) + 0.243);
        assert_relative_eq!(g.consumed_power_w, denom, max_relative = 1e-12);
        assert_relative_eq!(denom, 31.119, max_relative = 1e-12);
        assert_relative_eq!(g.total, 2e10 / denom, max_relative = 1e-12);
        assert_eq!(gee_from_parts(0.0, 1.0, tx, rx, 4, &pm, &noise).unwrap().total, 0.0);
        let mut last = f64::INFINITY;
        for p in [0.0, 0.1, 1.0, 10.0] {
            let g = gee_from_parts(12.0, p, tx, rx, 4, &pm, &noise).unwrap().total;
            assert!(g < last);
            last = g;
        }
    }

    #[test]
    fn zero_power_gives_zero_ase() {
        let dims = LinkDims { n_r: 8, n_t: 32 };
        let hs = users(3, dims, 3);
        let bf = build(Architecture::PzfFd, &hs, 2, Link::Downlink, &DesignOptions::default()).unwrap();
        let r = ase_downlink(&hs, &bf, 0.0, &NoiseModel::default()).unwrap();
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn single_user_channel_matched_is_spectral() {
        let dims = LinkDims { n_r: 8, n_t: 24 };
        let hs = users(1, dims, 9);
        let noise = NoiseModel::default();
        let m = 3;
        let bf = build(Architecture::CmFd, &hs, m, Link::Downlink, &DesignOptions::default()).unwrap();
        let p = 1e-3;
        let got = ase_downlink(&hs, &bf, p, &noise).unwrap().total;
        let svd = SortedSvd::new(&hs[0].matrix).unwrap();
        let want: f64 = svd.singular_values[..m]
            .iter()
            .map(|s| (1.0 + p / m as f64 * s * s / noise.sigma2()).log2())
            .sum();
        assert_relative_eq!(got, want, max_relative = 1e-10);
    }

    #[test]
    fn unitary_rotation_invariance() {
        let dims = LinkDims { n_r: 8, n_t: 24 };
        let hs = users(3, dims, 21);
        let noise = NoiseModel::default();
        let bf = build(Architecture::CmHy, &hs, 2, Link::Downlink, &DesignOptions::default()).unwrap();
        let base = ase_downlink(&hs, &bf, 0.5, &noise).unwrap();
        let c = |re: f64, im: f64| Complex::new(re, im);
        let s = 0.5f64.sqrt();
        let u = CMatrix::<f64>::from_row_slice(2, 2, &[c(s, 0.0), c(0.0, s), c(0.0, s), c(s, 0.0)]);
        let v = CMatrix::<f64>::from_row_slice(2, 2, &[c(0.6, 0.0), c(-0.8, 0.0), c(0.8, 0.0), c(0.6, 0.0)]);
        let mut rot = bf.clone();
        for q in &mut rot.precoders {
            *q = &*q * &u;
        }
        for d in &mut rot.postcoders {
            *d = &*d * &v;
        }
        let turned = ase_downlink(&hs, &rot, 0.5, &noise).unwrap();
        for (a, b) in base.per_user.iter().zip(&turned.per_user) {
            assert_relative_eq!(a, b, max_relative = 1e-10);
        }
    }

    #[test]
    fn uplink_without_interference_is_single_user() {
        let dims = LinkDims { n_r: 32, n_t: 8 };
        let hs = users(3, dims, 5);
        let noise = NoiseModel::default();
        let bf = build(Architecture::CmFd, &hs, 2, Link::Uplink, &DesignOptions::default()).unwrap();
        let alone = ase_uplink_user(&hs, &bf, 1, &[0.0, 0.2, 0.0], &noise).unwrap().ase;
        let single = ase_downlink(&hs[1..2], &BeamformerSet {
            precoders: vec![bf.precoders[1].clone()],
            postcoders: vec![bf.postcoders[1].clone()],
            link: Link::Downlink,
            ..bf.clone()
        }, 0.2, &noise)
        .unwrap()
        .total;
        assert_relative_eq!(alone, single, max_relative = 1e-12);
        let loaded = ase_uplink_user(&hs, &bf, 1, &[0.2, 0.2, 0.2], &noise).unwrap().ase;
        assert!(loaded < alone);
    }

    #[test]
    fn rejects_bad_inputs() {
        let dims = LinkDims { n_r: 8, n_t: 16 };
        let hs = users(2, dims, 1);
        let bf = build(Architecture::CmFd, &hs, 1, Link::Downlink, &DesignOptions::default()).unwrap();
        let noise = NoiseModel::default();
        assert!(ase_downlink(&hs, &bf, -1.0, &noise).is_err());
        assert!(ase_downlink(&hs[..1], &bf, 1.0, &noise).is_err());
        assert!(ase_uplink_user(&hs, &bf, 0, &[1.0], &noise).is_err());
        let pm = PowerModel::default();
        assert!(consumed_power(Architecture::An, Side::Tx, counts(8, 0), &pm).is_err());
        assert!(consumed_power(Architecture::CmFd, Side::Tx, counts(0, 0), &pm).is_err());
        assert!(PowerModel { eta: 1.0, ..pm }.validate().is_err());
    }
}
