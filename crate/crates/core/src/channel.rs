//! Narrowband clustered mmWave channel for uniform linear arrays.
//!
//! A realization is the sum of `n_cl * n_ray` scattered rays plus an
//! optional line-of-sight ray, each contributing a rank-one term
//! `coef * a_r(aoa) a_t(aod)^H`. The full path list is kept alongside the
//! matrix so that beam-steering designs and closed-form analyses can work
//! directly on angles and gains.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Complex, ComplexField};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::scalar::{cis, from_usize, lit, CMatrix, CVector, Real};

/// Inter-element spacing of every array, in wavelengths.
pub const ELEMENT_SPACING_WAVELENGTHS: f64 = 0.5;

/// Largest magnitude an angle may take; the visible range is open.
const ANGLE_LIMIT: f64 = FRAC_PI_2 - 1e-9;

/// Half-wavelength uniform linear array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UlaGeometry {
    num_elements: usize,
}

impl UlaGeometry {
    pub fn new(num_elements: usize) -> Result<Self> {
        if num_elements == 0 {
            return invalid("array must have at least one element");
        }
        Ok(Self { num_elements })
    }

    pub fn num_elements(&self) -> usize {
        self.num_elements
    }

    pub fn element_spacing_wavelengths(&self) -> f64 {
        ELEMENT_SPACING_WAVELENGTHS
    }

    pub fn response<T: Real>(&self, phi: T) -> Result<CVector<T>> {
        ula_response(phi, self.num_elements)
    }
}

/// Unit-norm array response `a(phi)[m] = exp(-j pi m sin(phi)) / sqrt(n)`.
pub fn ula_response<T: Real>(phi: T, n: usize) -> Result<CVector<T>> {
    if n == 0 {
        return invalid("array length must be positive");
    }
    if !phi.is_finite() {
        return invalid("steering angle must be finite");
    }
    let scale = T::one() / from_usize::<T>(n).sqrt();
    let k = -T::pi() * phi.sin();
    Ok(CVector::from_iterator(
        n,
        (0..n).map(|m| cis(k * from_usize::<T>(m)) * scale),
    ))
}

/// Inner product `a(phi1)^H a(phi2)` of two length-`p` responses.
///
/// Evaluated as the Dirichlet kernel
/// `e^{j x (p-1)/2} sin(p x / 2) / (p sin(x / 2))` with
/// `x = pi (sin phi1 - sin phi2)`, which is the geometric-series closed form
/// with the common phase factored out. The sine difference is first wrapped
/// into `[-1, 1]` (the kernel has period 2 in it), so endfire pairs at
/// `+pi/2` and `-pi/2` are handled like equal sines, which return exactly one.
pub fn steering_overlap<T: Real>(phi1: T, phi2: T, p: usize) -> Result<Complex<T>> {
    if p == 0 {
        return invalid("array length must be positive");
    }
    if !phi1.is_finite() || !phi2.is_finite() {
        return invalid("steering angles must be finite");
    }
    let two = lit::<T>(2.0);
    let mut d = phi1.sin() - phi2.sin();
    if d > T::one() {
        d -= two;
    } else if d < -T::one() {
        d += two;
    }
    let x = T::pi() * d;
    let half = lit::<T>(0.5);
    let den = (x * half).sin();
    if den == T::zero() {
        return Ok(Complex::new(T::one(), T::zero()));
    }
    let pf = from_usize::<T>(p);
    let mag = (pf * x * half).sin() / (pf * den);
    Ok(cis(x * (pf - T::one()) * half) * mag)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathLossModel {
    /// Loss at 1 m, dB.
    pub intercept_db: f64,
    pub exponent_los: f64,
    pub exponent_nlos: f64,
    pub shadow_sigma_los_db: f64,
    pub shadow_sigma_nlos_db: f64,
}

impl Default for PathLossModel {
    fn default() -> Self {
        Self {
            intercept_db: 69.8,
            exponent_los: 2.0,
            exponent_nlos: 3.19,
            shadow_sigma_los_db: 5.2,
            shadow_sigma_nlos_db: 8.29,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub n_cl: usize,
    pub n_ray_per_cluster: usize,
    /// Variance of the complex ray gains; fixed to one by the model.
    pub gain_variance: f64,
    /// RMS angular spread of the rays around their cluster center, degrees.
    pub angular_spread_deg: f64,
    pub los_enabled: bool,
    pub carrier_hz: f64,
    pub pathloss_model: PathLossModel,
    pub los_prob_d1_m: f64,
    pub los_prob_d2_m: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            n_cl: 2,
            n_ray_per_cluster: 20,
            gain_variance: 1.0,
            angular_spread_deg: 5.0,
            los_enabled: true,
            carrier_hz: 73e9,
            pathloss_model: PathLossModel::default(),
            los_prob_d1_m: 20.0,
            los_prob_d2_m: 39.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_cl == 0 || self.n_ray_per_cluster == 0 {
            return invalid("n_cl and n_ray_per_cluster must be at least 1");
        }
        if self.gain_variance != 1.0 {
            return invalid("ray gains have unit variance in this channel model");
        }
        if !(self.angular_spread_deg >= 0.0 && self.angular_spread_deg.is_finite()) {
            return invalid("angular spread must be finite and nonnegative");
        }
        if !(self.los_prob_d1_m > 0.0 && self.los_prob_d2_m > 0.0) {
            return invalid("LOS probability distances must be positive");
        }
        let pl = &self.pathloss_model;
        if !(pl.exponent_los > 0.0 && pl.exponent_nlos > 0.0) {
            return invalid("path-loss exponents must be positive");
        }
        if !(pl.shadow_sigma_los_db >= 0.0 && pl.shadow_sigma_nlos_db >= 0.0) {
            return invalid("shadowing deviations must be nonnegative");
        }
        Ok(())
    }

    /// Number of scattered rays, `n_cl * n_ray_per_cluster`.
    pub fn num_rays(&self) -> usize {
        self.n_cl * self.n_ray_per_cluster
    }
}

/// Linear power attenuation `10^(-PL_dB / 10)` of a log-distance model.
pub fn path_loss_linear(d_m: f64, los: bool, params: &ChannelParams, shadow_db: f64) -> Result<f64> {
    if !(d_m > 0.0) || !d_m.is_finite() {
        return invalid(format!("distance must be positive, got {d_m}"));
    }
    let pl = &params.pathloss_model;
    let exponent = if los { pl.exponent_los } else { pl.exponent_nlos };
    let pl_db = pl.intercept_db + 10.0 * exponent * d_m.log10() + shadow_db;
    Ok(10f64.powf(-pl_db / 10.0))
}

/// `p(d) = min(d1 / d, 1) (1 - e^{-d/d2}) + e^{-d/d2}`.
pub fn los_probability(d_m: f64, params: &ChannelParams) -> Result<f64> {
    if !(d_m > 0.0) || !d_m.is_finite() {
        return invalid(format!("distance must be positive, got {d_m}"));
    }
    let e = (-d_m / params.los_prob_d2_m).exp();
    let p = (params.los_prob_d1_m / d_m).min(1.0) * (1.0 - e) + e;
    Ok(p.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathComponent<T: Real> {
    /// Complex gain. Scattered rays carry their unit-variance Gaussian draw;
    /// the LOS ray carries `e^{j theta} sqrt(n_cl n_ray)` so that every path
    /// enters the matrix with the same factor `gamma`.
    pub gain: Complex<T>,
    pub aod_rad: T,
    pub aoa_rad: T,
    pub path_loss_linear: T,
    pub cluster_index: usize,
    pub is_los: bool,
}

impl<T: Real> PathComponent<T> {
    /// Gain with the path loss folded in, `gain * sqrt(L)`.
    pub fn lumped_gain(&self) -> Complex<T> {
        self.gain * self.path_loss_linear.sqrt()
    }

    pub fn strength(&self) -> T {
        self.lumped_gain().modulus()
    }
}

/// Array sizes of a link: receive and transmit element counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkDims {
    pub n_r: usize,
    pub n_t: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization<T: Real> {
    /// `n_r x n_t` channel matrix.
    pub matrix: CMatrix<T>,
    /// Paths sorted by non-increasing [`PathComponent::strength`].
    pub paths: Vec<PathComponent<T>>,
    pub gamma: T,
    pub n_cl: usize,
    pub n_ray: usize,
    pub distance_m: T,
}

impl<T: Real> ChannelRealization<T> {
    pub fn n_r(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_t(&self) -> usize {
        self.matrix.ncols()
    }

    /// Total number of scattered rays `N = n_cl * n_ray`.
    pub fn num_rays(&self) -> usize {
        self.n_cl * self.n_ray
    }

    pub fn has_los(&self) -> bool {
        self.paths.iter().any(|p| p.is_los)
    }

    /// Builds a realization from a path list, sorting the paths and
    /// assembling the matrix.
    pub fn from_paths(
        mut paths: Vec<PathComponent<T>>,
        dims: LinkDims,
        n_cl: usize,
        n_ray: usize,
        distance_m: T,
    ) -> Result<Self> {
        if dims.n_r == 0 || dims.n_t == 0 {
            return invalid("array sizes must be positive");
        }
        if n_cl == 0 || n_ray == 0 {
            return invalid("cluster and ray counts must be positive");
        }
        paths.sort_by(|a, b| {
            b.strength()
                .partial_cmp(&a.strength())
                .unwrap_or(std::cmp::Ordering::Equal)
        });
        let gamma = (from_usize::<T>(dims.n_r) * from_usize::<T>(dims.n_t)
            / from_usize::<T>(n_cl * n_ray))
        .sqrt();
        let matrix = assemble(&paths, dims, gamma)?;
        Ok(Self { matrix, paths, gamma, n_cl, n_ray, distance_m })
    }

    /// Re-evaluates the matrix from `paths` and `gamma`.
    pub fn reconstruct(&self) -> Result<CMatrix<T>> {
        assemble(
            &self.paths,
            LinkDims { n_r: self.n_r(), n_t: self.n_t() },
            self.gamma,
        )
    }

    /// Same propagation paths seen through arrays of different sizes.
    pub fn with_dims(&self, dims: LinkDims) -> Result<Self> {
        Self::from_paths(self.paths.clone(), dims, self.n_cl, self.n_ray, self.distance_m)
    }

    /// Receive steering matrix, one column per path.
    pub fn steering_rx(&self) -> Result<CMatrix<T>> {
        steering_matrix(self.paths.iter().map(|p| p.aoa_rad), self.n_r())
    }

    /// Transmit steering matrix, one column per path.
    pub fn steering_tx(&self) -> Result<CMatrix<T>> {
        steering_matrix(self.paths.iter().map(|p| p.aod_rad), self.n_t())
    }

    pub fn lumped_gains(&self) -> Vec<Complex<T>> {
        self.paths.iter().map(|p| p.lumped_gain()).collect()
    }
}

fn steering_matrix<T: Real>(angles: impl ExactSizeIterator<Item = T>, n: usize) -> Result<CMatrix<T>> {
    let cols = angles
        .map(|phi| ula_response(phi, n))
        .collect::<Result<Vec<_>>>()?;
    if cols.is_empty() {
        return Ok(CMatrix::zeros(n, 0));
    }
    Ok(CMatrix::from_columns(&cols))
}

fn assemble<T: Real>(paths: &[PathComponent<T>], dims: LinkDims, gamma: T) -> Result<CMatrix<T>> {
    let mut h = CMatrix::<T>::zeros(dims.n_r, dims.n_t);
    for p in paths {
        let ar = ula_response(p.aoa_rad, dims.n_r)?;
        let at = ula_response(p.aod_rad, dims.n_t)?;
        let coef = p.lumped_gain() * gamma;
        h += (ar * coef) * at.adjoint();
    }
    Ok(h)
}

fn clip_angle(phi: f64) -> f64 {
    phi.clamp(-ANGLE_LIMIT, ANGLE_LIMIT)
}

fn uniform_angle<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    clip_angle(rng.random_range(-FRAC_PI_2..FRAC_PI_2))
}

/// Zero-mean Laplacian draw with the given standard deviation.
fn laplacian<R: Rng + ?Sized>(rng: &mut R, std_dev: f64) -> f64 {
    let b = std_dev / std::f64::consts::SQRT_2;
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).max(f64::MIN_POSITIVE).ln()
}

/// One ray angle from the generator's prior: a uniform cluster center plus
/// a Laplacian intra-cluster offset.
pub fn sample_ray_angle<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> f64 {
    let center = uniform_angle(rng);
    clip_angle(center + laplacian(rng, params.angular_spread_deg.to_radians()))
}

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> (f64, f64) {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (s * re, s * im)
}

/// Draws one channel realization.
///
/// All randomness is consumed in `f64` in a fixed order that does not
/// depend on the array sizes, so the same stream yields the same paths for
/// any `dims` and any scalar type.
pub fn generate_channel<T: Real, R: Rng + ?Sized>(
    params: &ChannelParams,
    dims: LinkDims,
    distance_m: f64,
    rng: &mut R,
) -> Result<ChannelRealization<T>> {
    params.validate()?;
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return invalid(format!("distance must be positive, got {distance_m}"));
    }
    let spread = params.angular_spread_deg.to_radians();
    let pl = &params.pathloss_model;
    let mut paths = Vec::with_capacity(params.num_rays() + 1);

    for cluster in 0..params.n_cl {
        let center_aod = uniform_angle(rng);
        let center_aoa = uniform_angle(rng);
        let z: f64 = StandardNormal.sample(rng);
        let shadow = pl.shadow_sigma_nlos_db * z;
        let loss = path_loss_linear(distance_m, false, params, shadow)?;
        for _ in 0..params.n_ray_per_cluster {
            let aod = clip_angle(center_aod + laplacian(rng, spread));
            let aoa = clip_angle(center_aoa + laplacian(rng, spread));
            let (re, im) = complex_gaussian(rng, params.gain_variance);
            paths.push(PathComponent {
                gain: Complex::new(lit(re), lit(im)),
                aod_rad: lit(aod),
                aoa_rad: lit(aoa),
                path_loss_linear: lit(loss),
                cluster_index: cluster,
                is_los: false,
            });
        }
    }

    // LOS draws are always consumed to keep the stream layout fixed.
    let u_los: f64 = rng.random();
    let theta: f64 = rng.random_range(0.0..2.0 * PI);
    let los_aod = uniform_angle(rng);
    let los_aoa = uniform_angle(rng);
    let z: f64 = StandardNormal.sample(rng);
    let los_shadow = pl.shadow_sigma_los_db * z;
    if params.los_enabled && u_los < los_probability(distance_m, params)? {
        let loss = path_loss_linear(distance_m, true, params, los_shadow)?;
        let scale = (params.num_rays() as f64).sqrt();
        paths.push(PathComponent {
            gain: Complex::new(lit(scale * theta.cos()), lit(scale * theta.sin())),
            aod_rad: lit(los_aod),
            aoa_rad: lit(los_aoa),
            path_loss_linear: lit(loss),
            cluster_index: params.n_cl,
            is_los: true,
        });
    }

    ChannelRealization::from_paths(
        paths,
        dims,
        params.n_cl,
        params.n_ray_per_cluster,
        lit(distance_m),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fro;
    use crate::rng::substream;
    use std::f64::consts::FRAC_PI_2;

    #[test]
    fn broadside_response_is_flat() {
        let a = ula_response(0.0_f64, 4).unwrap();
        for z in a.iter() {
            assert!((z.re - 0.5).abs() < 1e-15 && z.im.abs() < 1e-15);
        }
    }

    #[test]
    fn endfire_two_element_response_alternates() {
        let a = ula_response(FRAC_PI_2, 2).unwrap();
        let s = 1.0 / 2f64.sqrt();
        assert!((a[0].re - s).abs() < 1e-15);
        assert!((a[1].re + s).abs() < 1e-15 && a[1].im.abs() < 1e-15);
    }

    #[test]
    fn response_rejects_bad_input() {
        assert!(ula_response(f64::NAN, 4).is_err());
        assert!(ula_response(0.1_f64, 0).is_err());
        assert!(UlaGeometry::new(0).is_err());
        assert_eq!(UlaGeometry::new(3).unwrap().element_spacing_wavelengths(), 0.5);
    }

    #[test]
    fn overlap_special_values() {
        let f = steering_overlap(0.3_f64, 0.3, 17).unwrap();
        assert_eq!(f, Complex::new(1.0, 0.0));
        let g = steering_overlap(FRAC_PI_2, 0.0, 2).unwrap();
        assert!(g.norm() < 1e-15);
    }

    #[test]
    fn overlap_quarter_sine_offset() {
        // sin(phi1) - sin(phi2) = 0.25
        let phi1 = 0.25_f64.asin();
        let f = steering_overlap(phi1, 0.0, 4).unwrap();
        let expected = (PI / 2.0).sin() / (4.0 * (PI / 8.0).sin());
        assert!((f.norm() - expected).abs() < 1e-12);
        assert!((f.norm() - 0.65328).abs() < 1e-5);
        let a1 = ula_response(phi1, 4).unwrap();
        let a2 = ula_response(0.0, 4).unwrap();
        let direct = a1.dotc(&a2);
        assert!((direct - f).norm() < 1e-14);
    }

    #[test]
    fn overlap_opposite_endfire_matches_inner_product() {
        let edge = FRAC_PI_2 - 1e-9;
        for p in [2usize, 7, 27, 64] {
            for (a, b) in [(edge, -edge), (-edge, edge), (edge, -edge + 1e-3)] {
                let f = steering_overlap(a, b, p).unwrap();
                let direct = ula_response(a, p).unwrap().dotc(&ula_response(b, p).unwrap());
                assert!((direct - f).norm() < 1e-12, "p={p}: {f} vs {direct}");
            }
        }
    }

    #[test]
    fn path_loss_examples() {
        let params = ChannelParams::default();
        let at_1m = path_loss_linear(1.0, false, &params, 0.0).unwrap();
        assert!((at_1m - 10f64.powf(-6.98)).abs() < 1e-20);
        let los100 = path_loss_linear(100.0, true, &params, 0.0).unwrap();
        assert!((los100 / 10f64.powf(-10.98) - 1.0).abs() < 1e-12);
        assert!((los100 - 1.047e-11).abs() < 1e-14);
        assert!(path_loss_linear(0.0, true, &params, 0.0).is_err());
        assert!(path_loss_linear(-3.0, true, &params, 0.0).is_err());
    }

    #[test]
    fn los_probability_examples() {
        let params = ChannelParams::default();
        assert!((los_probability(1e-9, &params).unwrap() - 1.0).abs() < 1e-12);
        assert!((los_probability(20.0, &params).unwrap() - 1.0).abs() < 1e-15);
        let p = los_probability(100.0, &params).unwrap();
        let e = (-100.0f64 / 39.0).exp();
        assert!((p - (0.2 * (1.0 - e) + e)).abs() < 1e-15);
        assert!((p - 0.2615).abs() < 1e-4);
    }

    #[test]
    fn single_ray_channel_is_rank_one() {
        let params = ChannelParams {
            n_cl: 1,
            n_ray_per_cluster: 1,
            los_enabled: false,
            ..ChannelParams::default()
        };
        let dims = LinkDims { n_r: 6, n_t: 5 };
        let h: ChannelRealization<f64> =
            generate_channel(&params, dims, 50.0, &mut substream(3, &[0])).unwrap();
        assert_eq!(h.paths.len(), 1);
        let p = &h.paths[0];
        let expected = 30.0 * p.gain.norm_sqr() * p.path_loss_linear;
        let energy = fro(&h.matrix).powi(2);
        assert!((energy / expected - 1.0).abs() < 1e-12);
        let svd = crate::linalg::SortedSvd::new(&h.matrix).unwrap();
        assert!(svd.singular_values[1] < 1e-12 * svd.singular_values[0]);
    }

    #[test]
    fn generation_is_deterministic_and_sorted() {
        let params = ChannelParams::default();
        let dims = LinkDims { n_r: 8, n_t: 16 };
        let a: ChannelRealization<f64> =
            generate_channel(&params, dims, 30.0, &mut substream(11, &[4, 2])).unwrap();
        let b: ChannelRealization<f64> =
            generate_channel(&params, dims, 30.0, &mut substream(11, &[4, 2])).unwrap();
        assert_eq!(a, b);
        for w in a.paths.windows(2) {
            assert!(w[0].strength() >= w[1].strength());
        }
        let rec = a.reconstruct().unwrap();
        assert!(fro(&(rec - &a.matrix)) <= 1e-12 * fro(&a.matrix));
        assert!((a.gamma - (128.0f64 / 40.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn same_stream_gives_same_paths_for_other_dims() {
        let params = ChannelParams::default();
        let a: ChannelRealization<f64> = generate_channel(
            &params,
            LinkDims { n_r: 4, n_t: 8 },
            60.0,
            &mut substream(5, &[1]),
        )
        .unwrap();
        let b: ChannelRealization<f64> = generate_channel(
            &params,
            LinkDims { n_r: 32, n_t: 64 },
            60.0,
            &mut substream(5, &[1]),
        )
        .unwrap();
        assert_eq!(a.paths, b.paths);
        assert_eq!(a.with_dims(LinkDims { n_r: 32, n_t: 64 }).unwrap(), b);
    }

    #[test]
    fn invalid_params_rejected() {
        let mut params = ChannelParams::default();
        params.n_cl = 0;
        let r: Result<ChannelRealization<f64>> =
            generate_channel(&params, LinkDims { n_r: 2, n_t: 2 }, 10.0, &mut substream(0, &[]));
        assert!(r.is_err());
        let params = ChannelParams::default();
        let r: Result<ChannelRealization<f64>> =
            generate_channel(&params, LinkDims { n_r: 2, n_t: 2 }, 0.0, &mut substream(0, &[]));
        assert!(r.is_err());
    }
}
