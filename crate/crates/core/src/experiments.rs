//! Monte Carlo scenarios: sweeps over array sizes and transmit power,
//! asymptotic-formula validation, and GEE optimization objectives.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::{Arc, Mutex};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::asymptotics::{
    an_dl_asymptotic, an_dl_exact_m1, an_ul_asymptotic, cmfd_dl_asymptotic, cmfd_dl_log_det, cmfd_ul_asymptotic,
    pzf_dl_asymptotic, pzf_streams, pzf_ul_asymptotic, OverlapTables, Regime, SpectralSummary,
};
use crate::beamformers::{build, build_all, rf_chains, Architecture, BeamformerSet, DesignOptions, Link};
use crate::channel::{generate_channel, ChannelParams, ChannelRealization, LinkDims};
use crate::error::{invalid, Error, Result};
use crate::metrics::{
    ase_downlink, ase_uplink, consumed_power, gee_downlink, gee_from_parts, gee_uplink_user, ArrayCounts, NoiseModel,
    PowerModel, Side,
};
use crate::optimize::GeeObjective;
use crate::rng::substream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub k_users: usize,
    pub m_streams: usize,
    pub n_t: usize,
    pub n_r: usize,
    pub cell_radius_m: f64,
    pub min_distance_m: f64,
    pub p_t_dbw: f64,
    pub trials: usize,
    pub seed: u64,
    pub link: Link,
    pub architectures: Vec<Architecture>,
    pub channel: ChannelParams,
    pub noise: NoiseModel,
    pub power: PowerModel,
    pub design: DesignOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            k_users: 10,
            m_streams: 3,
            n_t: 64,
            n_r: 30,
            cell_radius_m: 100.0,
            min_distance_m: 5.0,
            p_t_dbw: 0.0,
            trials: 500,
            seed: 1,
            link: Link::Downlink,
            architectures: Architecture::ALL.to_vec(),
            channel: ChannelParams::default(),
            noise: NoiseModel::default(),
            power: PowerModel::default(),
            design: DesignOptions::default(),
        }
    }
}

pub fn dbw_to_w(dbw: f64) -> f64 {
    10f64.powf(dbw / 10.0)
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_users == 0 || self.m_streams == 0 || self.trials == 0 {
            return invalid("users, streams and trials must be positive");
        }
        if self.m_streams > self.n_t.min(self.n_r) {
            return invalid(format!(
                "{} streams exceed the smaller array ({} x {})",
                self.m_streams, self.n_r, self.n_t
            ));
        }
        if !(self.min_distance_m > 0.0 && self.min_distance_m < self.cell_radius_m && self.cell_radius_m.is_finite()) {
            return invalid("need 0 < min_distance_m < cell_radius_m");
        }
        if !self.p_t_dbw.is_finite() {
            return invalid("transmit power must be finite");
        }
        if self.architectures.is_empty() {
            return invalid("at least one architecture is required");
        }
        self.channel.validate()?;
        self.noise.validate()?;
        self.power.validate()
    }

    pub fn dims(&self) -> LinkDims {
        LinkDims { n_r: self.n_r, n_t: self.n_t }
    }

    /// Applies a JSON document on top of this configuration. Objects merge
    /// recursively; every other value replaces the current one. Unknown
    /// keys are rejected.
    pub fn merged_with(&self, overlay: &serde_json::Value) -> Result<Self> {
        let mut base = serde_json::to_value(self).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        merge_json(&mut base, overlay);
        serde_json::from_value(base).map_err(|e| Error::InvalidArgument(format!("config: {e}")))
    }

    pub fn merged_with_file(&self, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        let overlay: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))?;
        self.merged_with(&overlay)
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).unwrap_or_default();
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn merge_json(base: &mut serde_json::Value, overlay: &serde_json::Value) {
    match (base, overlay) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(k) {
                    Some(slot) => merge_json(slot, v),
                    None => {
                        b.insert(k.clone(), v.clone());
                    }
                }
            }
        }
        (b, o) => *b = o.clone(),
    }
}

const POSITION_STREAM: u64 = 0;
const CHANNEL_STREAM: u64 = 1;

/// Distance of user `k` in trial `t`, uniform over the annulus area.
pub fn user_distance(cfg: &ScenarioConfig, trial: u64, user: u64) -> f64 {
    let mut rng = substream(cfg.seed, &[trial, user, POSITION_STREAM]);
    let (a, b) = (cfg.min_distance_m.powi(2), cfg.cell_radius_m.powi(2));
    (a + rng.random::<f64>() * (b - a)).sqrt()
}

/// Channels of every user in trial `t`. The draws do not depend on
/// `dims`, so the same trial index yields the same propagation geometry at
/// every sweep point.
pub fn trial_channels(cfg: &ScenarioConfig, trial: u64, dims: LinkDims) -> Result<Vec<ChannelRealization<f64>>> {
    (0..cfg.k_users as u64)
        .map(|k| {
            let d = user_distance(cfg, trial, k);
            let mut rng = substream(cfg.seed, &[trial, k, CHANNEL_STREAM]);
            generate_channel(&cfg.channel, dims, d, &mut rng)
        })
        .collect()
}

/// ASE (bit/s/Hz) and GEE (bit/J) of one architecture in one trial. On the
/// uplink both are per-user averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub ase: f64,
    pub gee: f64,
}

fn evaluate_set(
    cfg: &ScenarioConfig,
    channels: &[ChannelRealization<f64>],
    bf: &BeamformerSet<f64>,
    dims: LinkDims,
    p_t_w: f64,
) -> Result<Sample> {
    match cfg.link {
        Link::Downlink => {
            let ase = ase_downlink(channels, bf, p_t_w, &cfg.noise)?;
            let gee = gee_downlink(&ase, p_t_w, bf, dims, &cfg.power, &cfg.noise)?;
            Ok(Sample { ase: ase.total, gee: gee.total })
        }
        Link::Uplink => {
            let powers = vec![p_t_w; channels.len()];
            let ase = ase_uplink(channels, bf, &powers, &cfg.noise)?;
            let mut gee = 0.0;
            for &a in &ase.per_user {
                gee += gee_uplink_user(a, p_t_w, bf, dims, &cfg.power, &cfg.noise)?;
            }
            let k = channels.len() as f64;
            Ok(Sample { ase: ase.total / k, gee: gee / k })
        }
    }
}

/// Evaluates every configured architecture of trial `t` at several
/// transmit powers; indexed `[power][architecture]`. Infeasible designs
/// give `None`.
pub fn evaluate_trial(cfg: &ScenarioConfig, trial: u64, dims: LinkDims, powers_w: &[f64]) -> Result<Vec<Vec<Option<Sample>>>> {
    let channels = trial_channels(cfg, trial, dims)?;
    let sets = build_all(&cfg.architectures, &channels, cfg.m_streams, cfg.link, &cfg.design)?;
    Ok(powers_w
        .iter()
        .map(|&p| {
            sets.iter()
                .map(|s| s.as_ref().ok().and_then(|bf| evaluate_set(cfg, &channels, bf, dims, p).ok()))
                .collect()
        })
        .collect())
}

/// One trial at the configured operating point, one entry per
/// architecture.
pub fn run_trial(cfg: &ScenarioConfig, trial: u64) -> Result<Vec<Option<Sample>>> {
    let mut v = evaluate_trial(cfg, trial, cfg.dims(), &[dbw_to_w(cfg.p_t_dbw)])?;
    Ok(v.pop().unwrap_or_default())
}

/// Sum with a fixed binary tree so the result does not depend on how the
/// values were produced.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        n => pairwise_sum(&v[..n / 2]) + pairwise_sum(&v[n / 2..]),
    }
}

/// Mean and population standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = pairwise_sum(v) / n;
    let dev: Vec<f64> = v.iter().map(|x| (x - mean).powi(2)).collect();
    (mean, (pairwise_sum(&dev) / n).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "N_T")]
    NT,
    #[serde(rename = "N_R")]
    NR,
    #[serde(rename = "P_T_dBW")]
    PT,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::NT => "N_T",
            Axis::NR => "N_R",
            Axis::PT => "P_T_dBW",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointStats {
    pub ase_mean: f64,
    pub ase_std: f64,
    pub gee_mean: f64,
    pub gee_std: f64,
    pub samples: usize,
}

impl PointStats {
    fn from_samples(s: &[Sample]) -> Self {
        let ase: Vec<f64> = s.iter().map(|x| x.ase).collect();
        let gee: Vec<f64> = s.iter().map(|x| x.gee).collect();
        let (ase_mean, ase_std) = mean_std(&ase);
        let (gee_mean, gee_std) = mean_std(&gee);
        Self { ase_mean, ase_std, gee_mean, gee_std, samples: s.len() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub architectures: Vec<Architecture>,
    /// `[value][architecture]`.
    pub stats: Vec<Vec<PointStats>>,
    pub seed: u64,
    pub trials: usize,
    pub config_hash: String,
}

fn axis_dims(cfg: &ScenarioConfig, axis: Axis, v: f64) -> Result<LinkDims> {
    let as_count = |v: f64| -> Result<usize> {
        if v >= 1.0 && v.fract() == 0.0 && v.is_finite() {
            Ok(v as usize)
        } else {
            invalid(format!("array size must be a positive integer, got {v}"))
        }
    };
    Ok(match axis {
        Axis::NT => LinkDims { n_r: cfg.n_r, n_t: as_count(v)? },
        Axis::NR => LinkDims { n_r: as_count(v)?, n_t: cfg.n_t },
        Axis::PT => cfg.dims(),
    })
}

/// Runs `cfg.trials` trials at every axis value. Trial `t` reuses the same
/// random streams at every value, so reordering `values` only reorders the
/// output.
pub fn sweep(cfg: &ScenarioConfig, axis: Axis, values: &[f64]) -> Result<SweepResult> {
    cfg.validate()?;
    if values.is_empty() {
        return invalid("sweep needs at least one axis value");
    }
    let dims: Vec<LinkDims> = values.iter().map(|&v| axis_dims(cfg, axis, v)).collect::<Result<_>>()?;
    if dims.iter().any(|d| cfg.m_streams > d.n_r.min(d.n_t)) {
        return invalid("every sweep point needs at least M antennas on both sides");
    }
    // per trial: [value][arch]
    let per_trial: Vec<Vec<Vec<Option<Sample>>>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| -> Result<Vec<Vec<Option<Sample>>>> {
            match axis {
                Axis::PT => {
                    let powers: Vec<f64> = values.iter().map(|&v| dbw_to_w(v)).collect();
                    evaluate_trial(cfg, t, cfg.dims(), &powers)
                }
                _ => {
                    let p = dbw_to_w(cfg.p_t_dbw);
                    dims.iter()
                        .map(|&d| evaluate_trial(cfg, t, d, &[p]).map(|mut v| v.pop().unwrap_or_default()))
                        .collect()
                }
            }
        })
        .collect::<Result<_>>()?;
    let stats = (0..values.len())
        .map(|i| {
            (0..cfg.architectures.len())
                .map(|a| {
                    let samples: Vec<Sample> = per_trial.iter().filter_map(|t| t[i][a]).collect();
                    PointStats::from_samples(&samples)
                })
                .collect()
        })
        .collect();
    Ok(SweepResult {
        axis,
        values: values.to_vec(),
        architectures: cfg.architectures.clone(),
        stats,
        seed: cfg.seed,
        trials: cfg.trials,
        config_hash: cfg.hash(),
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    axis: f64,
    arch: &'a str,
    ase_mean: f64,
    ase_std: f64,
    gee_mean: f64,
    gee_std: f64,
    trials: usize,
    seed: u64,
}

impl SweepResult {
    /// One row per (axis value, architecture); `trials` counts the
    /// feasible samples behind the row.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for (v, row) in self.values.iter().zip(&self.stats) {
            for (arch, s) in self.architectures.iter().zip(row) {
                out.serialize(CsvRow {
                    axis: *v,
                    arch: arch.label(),
                    ase_mean: s.ase_mean,
                    ase_std: s.ase_std,
                    gee_mean: s.gee_mean,
                    gee_std: s.gee_std,
                    trials: s.samples,
                    seed: self.seed,
                })
                .map_err(|e| Error::Numerical(format!("csv: {e}")))?;
            }
        }
        out.flush().map_err(|e| Error::Numerical(format!("csv: {e}")))
    }

    /// Companion document with the full configuration and sample counts.
    pub fn to_json(&self, cfg: &ScenarioConfig) -> serde_json::Value {
        serde_json::json!({
            "axis": self.axis,
            "values": self.values,
            "architectures": self.architectures,
            "seed": self.seed,
            "trials": self.trials,
            "config_hash": self.config_hash,
            "config": cfg,
            "samples": self.stats.iter()
                .map(|row| row.iter().map(|s| s.samples).collect::<Vec<_>>())
                .collect::<Vec<_>>(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub formula: String,
    pub dimension: usize,
    pub exact_mean: f64,
    pub asymptotic_mean: f64,
    pub rel_error: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub axis: Axis,
    pub link: Link,
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    pub fn rows_for<'a>(&'a self, formula: &'a str) -> impl Iterator<Item = &'a ValidationRow> + 'a {
        self.rows.iter().filter(move |r| r.formula == formula)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for r in &self.rows {
            out.serialize(r).map_err(|e| Error::Numerical(format!("csv: {e}")))?;
        }
        out.flush().map_err(|e| Error::Numerical(format!("csv: {e}")))
    }
}

/// `(formula, exact, asymptotic)` for one trial at one dimension.
type Pairs = Vec<(&'static str, f64, f64)>;

fn validation_pairs(cfg: &ScenarioConfig, channels: &[ChannelRealization<f64>]) -> Result<Pairs> {
    let m = cfg.m_streams;
    let p = dbw_to_w(cfg.p_t_dbw);
    let noise = &cfg.noise;
    let users = channels.len();
    let mut out: Pairs = Vec::new();
    let build_set = |a| build(a, channels, m, cfg.link, &cfg.design);
    let cm = build_set(Architecture::CmFd)?;
    let pzf = build_set(Architecture::PzfFd).ok();
    let an = build_set(Architecture::An)?;
    let tables = OverlapTables::new(channels, &an.selected_paths)?;
    match cfg.link {
        Link::Downlink => {
            let summary = SpectralSummary::channel_matched(channels, m)?;
            let exact_cm = ase_downlink(channels, &cm, p, noise)?.total;
            out.push(("CM-FD", exact_cm, cmfd_dl_asymptotic(&summary, p, noise)?));
            out.push(("CM-FD log-det", exact_cm, cmfd_dl_log_det(&summary, p, noise)?));
            if let Some(pzf) = &pzf {
                let exact = ase_downlink(channels, pzf, p, noise)?.total;
                out.push(("PZF-FD", exact, pzf_dl_asymptotic(&summary, p, noise)?));
            }
            let exact_an = ase_downlink(channels, &an, p, noise)?.total;
            for (name, r) in [("AN NT_INF", Regime::NtInf), ("AN NR_INF", Regime::NrInf), ("AN BOTH_INF", Regime::BothInf)] {
                out.push((name, exact_an, an_dl_asymptotic(channels, &tables, r, p, noise)?));
            }
            if m == 1 {
                let sel: Vec<usize> = an.selected_paths.iter().map(|s| s[0]).collect();
                out.push(("AN M=1 exact", exact_an, an_dl_exact_m1(channels, &sel, p, noise)?));
            }
        }
        Link::Uplink => {
            let powers = vec![p; users];
            let k = users as f64;
            let summary = SpectralSummary::channel_matched(channels, m)?;
            let exact_cm = ase_uplink(channels, &cm, &powers, noise)?.total / k;
            let mut asym = 0.0;
            for u in 0..users {
                asym += cmfd_ul_asymptotic(channels, u, &powers, noise, m)?;
            }
            out.push(("CM-FD", exact_cm, asym / k));
            if let Some(pzf) = &pzf {
                let exact = ase_uplink(channels, pzf, &powers, noise)?.total / k;
                let mut asym = 0.0;
                for u in 0..users {
                    asym += pzf_ul_asymptotic(&summary, u, p, noise)?;
                }
                out.push(("PZF-FD", exact, asym / k));
            }
            let exact_an = ase_uplink(channels, &an, &powers, noise)?.total / k;
            for (name, r) in [("AN NT_INF", Regime::NtInf), ("AN NR_INF", Regime::NrInf), ("AN BOTH_INF", Regime::BothInf)] {
                let mut asym = 0.0;
                for u in 0..users {
                    asym += an_ul_asymptotic(channels, &tables, r, u, &powers, noise)?;
                }
                out.push((name, exact_an, asym / k));
            }
        }
    }
    Ok(out)
}

/// Exact Monte Carlo means against each large-array formula along a ladder
/// of array sizes on `axis` (`N_T` or `N_R`). Uplink figures are per-user
/// averages.
pub fn validate_asymptotics(cfg: &ScenarioConfig, axis: Axis, ladder: &[usize]) -> Result<ValidationReport> {
    cfg.validate()?;
    if ladder.is_empty() {
        return invalid("ladder must contain at least one dimension");
    }
    if axis == Axis::PT {
        return invalid("validation ladders run over N_T or N_R");
    }
    let dims: Vec<LinkDims> = ladder.iter().map(|&n| axis_dims(cfg, axis, n as f64)).collect::<Result<_>>()?;
    let per_trial: Vec<Vec<Pairs>> = (0..cfg.trials as u64)
        .into_par_iter()
        .map(|t| {
            dims.iter()
                .map(|&d| validation_pairs(cfg, &trial_channels(cfg, t, d)?))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (i, &n) in ladder.iter().enumerate() {
        let mut names: Vec<&str> = Vec::new();
        for t in &per_trial {
            for (name, _, _) in &t[i] {
                if !names.contains(name) {
                    names.push(name);
                }
            }
        }
        for name in names {
            let (ex, asym): (Vec<f64>, Vec<f64>) = per_trial
                .iter()
                .flat_map(|t| t[i].iter().filter(|x| x.0 == name).map(|x| (x.1, x.2)))
                .unzip();
            let (e, _) = mean_std(&ex);
            let (a, _) = mean_std(&asym);
            rows.push(ValidationRow {
                formula: name.to_string(),
                dimension: n,
                exact_mean: e,
                asymptotic_mean: a,
                rel_error: (a - e).abs() / e.abs(),
                samples: ex.len(),
            });
        }
    }
    Ok(ValidationReport { axis, link: cfg.link, rows })
}

/// Circuit power of the base station and of one terminal, without building
/// the beamformers.
pub fn circuit_power_for(cfg: &ScenarioConfig, kind: Architecture, dims: LinkDims) -> Result<(f64, f64)> {
    let (n_rf_tx, n_rf_rx) = rf_chains(cfg.design.rf_chains, cfg.link, cfg.k_users, cfg.m_streams);
    let n_q = if kind == Architecture::SwPhsh { cfg.design.n_q } else { 0 };
    let tx = ArrayCounts { antennas: dims.n_t, rf_chains: n_rf_tx, phase_levels: n_q, peer_antennas: dims.n_r };
    let rx = ArrayCounts { antennas: dims.n_r, rf_chains: n_rf_rx, phase_levels: n_q, peer_antennas: dims.n_t };
    Ok((
        consumed_power(kind, Side::Tx, tx, &cfg.power)?,
        consumed_power(kind, Side::Rx, rx, &cfg.power)?,
    ))
}

fn downlink_denominator(cfg: &ScenarioConfig, kind: Architecture, dims: LinkDims, p_t_w: f64) -> Result<f64> {
    let (tx, rx) = circuit_power_for(cfg, kind, dims)?;
    Ok(gee_from_parts(1.0, p_t_w, tx, rx, cfg.k_users, &cfg.power, &cfg.noise)?.consumed_power_w)
}

type TrialSets = Vec<(Vec<ChannelRealization<f64>>, BeamformerSet<f64>)>;

/// Monte Carlo downlink GEE of one architecture. Channels and beamformers
/// are cached per array size, so power searches reuse them.
pub struct MonteCarloGee {
    cfg: ScenarioConfig,
    kind: Architecture,
    cache: Mutex<HashMap<(usize, usize), Arc<TrialSets>>>,
}

impl MonteCarloGee {
    pub fn new(cfg: &ScenarioConfig, kind: Architecture) -> Result<Self> {
        cfg.validate()?;
        if cfg.link != Link::Downlink {
            return invalid("GEE optimization runs on the downlink");
        }
        Ok(Self { cfg: cfg.clone(), kind, cache: Mutex::new(HashMap::new()) })
    }

    fn sets(&self, dims: LinkDims) -> Result<Arc<TrialSets>> {
        let key = (dims.n_t, dims.n_r);
        if let Some(s) = self.cache.lock().ok().and_then(|c| c.get(&key).cloned()) {
            return Ok(s);
        }
        let sets: TrialSets = (0..self.cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let ch = trial_channels(&self.cfg, t, dims)?;
                let bf = build(self.kind, &ch, self.cfg.m_streams, Link::Downlink, &self.cfg.design)?;
                Ok((ch, bf))
            })
            .collect::<Result<_>>()?;
        let sets = Arc::new(sets);
        if let Ok(mut c) = self.cache.lock() {
            c.insert(key, sets.clone());
        }
        Ok(sets)
    }
}

impl GeeObjective for MonteCarloGee {
    fn numerator(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64> {
        let sets = self.sets(LinkDims { n_r, n_t })?;
        let ase: Vec<f64> = sets
            .par_iter()
            .map(|(ch, bf)| ase_downlink(ch, bf, p_t_w, &self.cfg.noise).map(|a| a.total))
            .collect::<Result<_>>()?;
        Ok(self.cfg.noise.bandwidth_hz * mean_std(&ase).0)
    }

    fn denominator(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64> {
        downlink_denominator(&self.cfg, self.kind, LinkDims { n_r, n_t }, p_t_w)
    }
}

/// Large-array PZF-FD downlink GEE. The normalized singular values are
/// sampled once at the configured array sizes and reused for every size.
pub struct AsymptoticPzfGee {
    cfg: ScenarioConfig,
    /// `[trial][user][stream]`.
    lambdas: Vec<Vec<Vec<f64>>>,
}

impl AsymptoticPzfGee {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        cfg.validate()?;
        let lambdas = (0..cfg.trials as u64)
            .into_par_iter()
            .map(|t| {
                let ch = trial_channels(cfg, t, cfg.dims())?;
                Ok(SpectralSummary::channel_matched(&ch, cfg.m_streams)?.lambdas_normalized)
            })
            .collect::<Result<_>>()?;
        Ok(Self { cfg: cfg.clone(), lambdas })
    }
}

impl GeeObjective for AsymptoticPzfGee {
    fn numerator(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64> {
        let c = p_t_w / (self.cfg.k_users * self.cfg.m_streams) as f64;
        let sigma2 = self.cfg.noise.sigma2();
        let ase: Vec<f64> = self
            .lambdas
            .iter()
            .map(|users| users.iter().map(|l| pzf_streams(l, n_t * n_r, c, sigma2)).sum())
            .collect();
        Ok(self.cfg.noise.bandwidth_hz * mean_std(&ase).0)
    }

    fn denominator(&self, n_t: usize, n_r: usize, p_t_w: f64) -> Result<f64> {
        downlink_denominator(&self.cfg, Architecture::PzfFd, LinkDims { n_r, n_t }, p_t_w)
    }
}
