//! Precoder/postcoder construction for the seven beamforming architectures.

mod analog;
mod digital;
mod hybrid;
mod switch;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use analog::{an_beamsteer, select_paths, BeamSteering, DEFAULT_MIN_SEPARATION_DEG};
pub use digital::{cm_fd, normalize_columns, pzf_fd, pzf_fd_uplink};
pub use hybrid::{hybrid_factorize, HybridFactors, HybridOptions};
pub use switch::{
    nearest_phase_index, sw_mfn_select, sw_phsh_quantize, SwitchDesign, SwitchSelection,
    DEFAULT_PHASE_LEVELS,
};

use crate::channel::ChannelRealization;
use crate::error::{invalid, Error, Result};
use crate::linalg::SortedSvd;
use crate::scalar::{from_usize, CMatrix, Real};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Architecture {
    #[serde(rename = "CM_FD")]
    CmFd,
    #[serde(rename = "PZF_FD")]
    PzfFd,
    #[serde(rename = "CM_HY")]
    CmHy,
    #[serde(rename = "PZF_HY")]
    PzfHy,
    #[serde(rename = "AN")]
    An,
    #[serde(rename = "SW_PHSH")]
    SwPhsh,
    #[serde(rename = "SW")]
    Sw,
}

impl Architecture {
    pub const ALL: [Architecture; 7] = [
        Architecture::CmFd,
        Architecture::PzfFd,
        Architecture::CmHy,
        Architecture::PzfHy,
        Architecture::An,
        Architecture::SwPhsh,
        Architecture::Sw,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Architecture::CmFd => "CM-FD",
            Architecture::PzfFd => "PZF-FD",
            Architecture::CmHy => "CM-HY",
            Architecture::PzfHy => "PZF-HY",
            Architecture::An => "AN",
            Architecture::SwPhsh => "SW+PHSH",
            Architecture::Sw => "SW",
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .map(|c| c.to_ascii_uppercase())
            .collect();
        Ok(match key.as_str() {
            "CMFD" => Architecture::CmFd,
            "PZFFD" => Architecture::PzfFd,
            "CMHY" => Architecture::CmHy,
            "PZFHY" => Architecture::PzfHy,
            "AN" => Architecture::An,
            "SWPHSH" => Architecture::SwPhsh,
            "SW" => Architecture::Sw,
            _ => return invalid(format!("unknown architecture '{s}'")),
        })
    }
}

/// Fully-digital design used as an approximation target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FdTarget {
    #[serde(rename = "CM_FD")]
    ChannelMatched,
    #[serde(rename = "PZF_FD")]
    PartialZeroForcing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Link {
    #[serde(rename = "downlink")]
    Downlink,
    #[serde(rename = "uplink")]
    Uplink,
}

/// RF chain budget of the base station.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RfChainRule {
    /// `K M` chains at the base station, `M` at each terminal.
    #[default]
    #[serde(rename = "KM")]
    Shared,
    /// `M` chains at both ends.
    #[serde(rename = "M")]
    PerStream,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignOptions {
    pub hybrid: HybridOptions,
    /// Target approximated by CM-HY. Channel-matched by default; the
    /// partial zero-forcing setting reproduces the alternative reading in
    /// which both hybrid designs approximate the PZF matrices.
    pub cm_hy_target: FdTarget,
    /// Target quantized by SW+PHSH and thinned by SW.
    pub sw_target: FdTarget,
    pub n_q: usize,
    pub an_min_separation_deg: f64,
    pub rf_chains: RfChainRule,
}

impl Default for DesignOptions {
    fn default() -> Self {
        Self {
            hybrid: HybridOptions::default(),
            cm_hy_target: FdTarget::ChannelMatched,
            sw_target: FdTarget::ChannelMatched,
            n_q: DEFAULT_PHASE_LEVELS,
            an_min_separation_deg: DEFAULT_MIN_SEPARATION_DEG,
            rf_chains: RfChainRule::Shared,
        }
    }
}

/// Precoders and postcoders of all users for one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerSet<T: Real> {
    pub kind: Architecture,
    pub link: Link,
    /// `n_t x M` per user.
    pub precoders: Vec<CMatrix<T>>,
    /// `n_r x M` per user.
    pub postcoders: Vec<CMatrix<T>>,
    pub n_rf_tx: usize,
    pub n_rf_rx: usize,
    pub n_q: usize,
    /// Per-user path indices used by beam steering (empty otherwise).
    pub selected_paths: Vec<Vec<usize>>,
    /// Per-user flag: beam steering had to relax the separation rule.
    pub relaxed: Vec<bool>,
}

impl<T: Real> BeamformerSet<T> {
    pub fn num_users(&self) -> usize {
        self.precoders.len()
    }

    pub fn streams(&self) -> usize {
        self.precoders.first().map_or(0, |q| q.ncols())
    }
}

/// Transmit and receive RF chain counts.
pub fn rf_chains(rule: RfChainRule, link: Link, users: usize, m: usize) -> (usize, usize) {
    let bs = match rule {
        RfChainRule::Shared => users * m,
        RfChainRule::PerStream => m,
    };
    match link {
        Link::Downlink => (bs, m),
        Link::Uplink => (m, bs),
    }
}

/// Per-user work shared by every architecture of one trial.
struct Context<'a, T: Real> {
    channels: &'a [ChannelRealization<T>],
    svds: Vec<SortedSvd<T>>,
    m: usize,
    link: Link,
}

impl<'a, T: Real> Context<'a, T> {
    fn new(channels: &'a [ChannelRealization<T>], m: usize, link: Link) -> Result<Self> {
        if channels.is_empty() {
            return invalid("at least one user is required");
        }
        let svds = channels
            .iter()
            .map(|h| SortedSvd::new(&h.matrix))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { channels, svds, m, link })
    }

    fn fd(&self, target: FdTarget, k: usize) -> Result<(CMatrix<T>, CMatrix<T>)> {
        let h = &self.channels[k];
        match (target, self.link) {
            (FdTarget::ChannelMatched, _) => {
                digital::cm_fd_from_svd(&self.svds[k], self.m, h.n_r(), h.n_t())
            }
            (FdTarget::PartialZeroForcing, Link::Downlink) => {
                digital::pzf_fd_from_svds(self.channels, &self.svds, k, self.m)
            }
            (FdTarget::PartialZeroForcing, Link::Uplink) => {
                digital::pzf_fd_uplink_from_svds(self.channels, &self.svds, k, self.m)
            }
        }
    }
}

/// Hybrid approximation of a fully-digital pair.
fn hybridize<T: Real>(
    q: &CMatrix<T>,
    d: &CMatrix<T>,
    n_rf_tx: usize,
    n_rf_rx: usize,
    opts: &HybridOptions,
) -> Result<(HybridFactors<T>, HybridFactors<T>)> {
    let mut pre = hybrid_factorize(q, n_rf_tx, opts)?;
    pre.normalize_product_columns();
    let post = hybrid_factorize(d, n_rf_rx, opts)?;
    Ok((pre, post))
}

/// CM-HY factors for user `k`: hybrid approximation of the channel-matched
/// pair.
pub fn cm_hy<T: Real>(
    channels: &[ChannelRealization<T>],
    k: usize,
    m: usize,
    n_rf_tx: usize,
    n_rf_rx: usize,
    opts: &HybridOptions,
) -> Result<(HybridFactors<T>, HybridFactors<T>)> {
    check_user(channels, k)?;
    let (q, d) = cm_fd(&channels[k], m)?;
    hybridize(&q, &d, n_rf_tx, n_rf_rx, opts)
}

/// PZF-HY factors for user `k`: hybrid approximation of the partial
/// zero-forcing pair.
pub fn pzf_hy<T: Real>(
    channels: &[ChannelRealization<T>],
    k: usize,
    m: usize,
    n_rf_tx: usize,
    n_rf_rx: usize,
    opts: &HybridOptions,
) -> Result<(HybridFactors<T>, HybridFactors<T>)> {
    check_user(channels, k)?;
    let (q, d) = pzf_fd(channels, k, m)?;
    hybridize(&q, &d, n_rf_tx, n_rf_rx, opts)
}

fn check_user<T: Real>(channels: &[ChannelRealization<T>], k: usize) -> Result<()> {
    if k >= channels.len() {
        return invalid(format!("user index {k} out of range for {} users", channels.len()));
    }
    Ok(())
}

/// Builds the beamformers of every user for each requested architecture.
///
/// Per-architecture failures (for instance PZF with too few antennas) are
/// reported individually so one infeasible design does not hide the others.
pub fn build_all<T: Real>(
    kinds: &[Architecture],
    channels: &[ChannelRealization<T>],
    m: usize,
    link: Link,
    opts: &DesignOptions,
) -> Result<Vec<Result<BeamformerSet<T>>>> {
    let ctx = Context::new(channels, m, link)?;
    Ok(kinds.iter().map(|&kind| build_with(&ctx, kind, opts)).collect())
}

/// Builds the beamformers of every user for one architecture.
pub fn build<T: Real>(
    kind: Architecture,
    channels: &[ChannelRealization<T>],
    m: usize,
    link: Link,
    opts: &DesignOptions,
) -> Result<BeamformerSet<T>> {
    let ctx = Context::new(channels, m, link)?;
    build_with(&ctx, kind, opts)
}

fn build_with<T: Real>(ctx: &Context<'_, T>, kind: Architecture, opts: &DesignOptions) -> Result<BeamformerSet<T>> {
    let users = ctx.channels.len();
    let m = ctx.m;
    let (n_rf_tx, n_rf_rx) = rf_chains(opts.rf_chains, ctx.link, users, m);
    let mut set = BeamformerSet {
        kind,
        link: ctx.link,
        precoders: Vec::with_capacity(users),
        postcoders: Vec::with_capacity(users),
        n_rf_tx,
        n_rf_rx,
        n_q: 0,
        selected_paths: Vec::new(),
        relaxed: vec![false; users],
    };
    for k in 0..users {
        let (q, d) = match kind {
            Architecture::CmFd => ctx.fd(FdTarget::ChannelMatched, k)?,
            Architecture::PzfFd => ctx.fd(FdTarget::PartialZeroForcing, k)?,
            Architecture::CmHy | Architecture::PzfHy => {
                let target = if kind == Architecture::CmHy {
                    opts.cm_hy_target
                } else {
                    FdTarget::PartialZeroForcing
                };
                let (q, d) = ctx.fd(target, k)?;
                let (pre, post) = hybridize(&q, &d, n_rf_tx, n_rf_rx, &opts.hybrid)?;
                (pre.product, post.product)
            }
            Architecture::An => {
                let bs = an_beamsteer(&ctx.channels[k], m, opts.an_min_separation_deg)?;
                set.selected_paths.push(bs.selected);
                set.relaxed[k] = bs.relaxed;
                (bs.precoder, bs.postcoder)
            }
            Architecture::SwPhsh => {
                set.n_q = opts.n_q;
                let (q, d) = ctx.fd(opts.sw_target, k)?;
                let scale_t = T::one() / from_usize::<T>(q.nrows()).sqrt();
                let scale_r = T::one() / from_usize::<T>(d.nrows()).sqrt();
                let mut q = sw_phsh_quantize(&q, opts.n_q)?;
                let mut d = sw_phsh_quantize(&d, opts.n_q)?;
                q.scale_mut(scale_t);
                d.scale_mut(scale_r);
                (q, d)
            }
            Architecture::Sw => {
                let (q, d) = ctx.fd(opts.sw_target, k)?;
                let mut q = sw_mfn_select(&q, n_rf_tx.min(q.nrows()))?.composed;
                let d = sw_mfn_select(&d, n_rf_rx.min(d.nrows()))?.composed;
                normalize_columns(&mut q);
                (q, d)
            }
        };
        set.precoders.push(q);
        set.postcoders.push(d);
    }
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{generate_channel, ChannelParams, LinkDims};
    use crate::rng::substream;
    use nalgebra::ComplexField;

    fn channels(users: usize, dims: LinkDims) -> Vec<ChannelRealization<f64>> {
        (0..users)
            .map(|k| {
                generate_channel(&ChannelParams::default(), dims, 50.0, &mut substream(77, &[k as u64]))
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn architecture_names_round_trip() {
        for a in Architecture::ALL {
            assert_eq!(a.label().parse::<Architecture>().unwrap(), a);
            let json = serde_json::to_string(&a).unwrap();
            assert_eq!(serde_json::from_str::<Architecture>(&json).unwrap(), a);
        }
        assert_eq!("cm_fd".parse::<Architecture>().unwrap(), Architecture::CmFd);
        assert!("XYZ".parse::<Architecture>().is_err());
    }

    #[test]
    fn every_architecture_builds_with_expected_shapes() {
        let hs = channels(3, LinkDims { n_r: 8, n_t: 32 });
        let sets = build_all(&Architecture::ALL, &hs, 2, Link::Downlink, &DesignOptions::default()).unwrap();
        for set in sets {
            let set = set.unwrap();
            assert_eq!(set.num_users(), 3);
            assert_eq!((set.n_rf_tx, set.n_rf_rx), (6, 2));
            for (q, d) in set.precoders.iter().zip(&set.postcoders) {
                assert_eq!(q.shape(), (32, 2));
                assert_eq!(d.shape(), (8, 2));
            }
        }
    }

    #[test]
    fn switch_and_quantized_invariants() {
        let hs = channels(2, LinkDims { n_r: 8, n_t: 16 });
        let opts = DesignOptions::default();
        let sw = build(Architecture::Sw, &hs, 1, Link::Downlink, &opts).unwrap();
        for q in &sw.precoders {
            let nonzero = q.row_iter().filter(|r| r.iter().any(|z| z.modulus() > 0.0)).count();
            assert!(nonzero <= sw.n_rf_tx);
        }
        let ph = build(Architecture::SwPhsh, &hs, 1, Link::Downlink, &opts).unwrap();
        let step = std::f64::consts::TAU / 8.0;
        for q in &ph.precoders {
            for z in q.iter() {
                assert!((z.norm() - 1.0 / 4.0).abs() < 1e-14);
                let k = (z.arg() / step).round();
                assert!((z.arg() - k * step).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pzf_hy_infeasible_is_reported_per_architecture() {
        let hs = channels(4, LinkDims { n_r: 4, n_t: 6 });
        let sets = build_all(
            &[Architecture::CmFd, Architecture::PzfFd, Architecture::PzfHy],
            &hs,
            2,
            Link::Downlink,
            &DesignOptions::default(),
        )
        .unwrap();
        assert!(sets[0].is_ok());
        assert!(matches!(sets[1], Err(Error::Infeasible(_))));
        assert!(matches!(sets[2], Err(Error::Infeasible(_))));
    }

    #[test]
    fn uplink_rf_chains_swap() {
        assert_eq!(rf_chains(RfChainRule::Shared, Link::Uplink, 4, 2), (2, 8));
        assert_eq!(rf_chains(RfChainRule::Shared, Link::Downlink, 4, 2), (8, 2));
        assert_eq!(rf_chains(RfChainRule::PerStream, Link::Downlink, 4, 2), (2, 2));
    }

    #[test]
    fn hybrid_user_helpers() {
        let hs = channels(2, LinkDims { n_r: 8, n_t: 16 });
        let opts = HybridOptions::default();
        let (pre, post) = cm_hy(&hs, 0, 2, 4, 2, &opts).unwrap();
        assert_eq!(pre.rf.shape(), (16, 4));
        assert_eq!(post.rf.shape(), (8, 2));
        let (pre, _) = pzf_hy(&hs, 1, 2, 4, 2, &opts).unwrap();
        for c in pre.product.column_iter() {
            assert!((c.norm() - 1.0).abs() < 1e-12);
        }
        assert!(cm_hy(&hs, 5, 2, 4, 2, &opts).is_err());
    }
}
