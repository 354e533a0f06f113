//! Ground-truth and model channel synthesis: steering vectors, the coupling
//! Vandermonde factor, the four LoS wavefront models, the NLoS model, and
//! random scene sampling.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    exact_distance, ArrayConfig, SceneGeometry, Side,
};
use crate::numerics::CMat;

/// Linear and quadratic phase coefficients of a near-field steering vector.
///
/// Sign convention: receive-side curvature is nonnegative, transmit-side
/// curvature is nonpositive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteeringParams {
    /// Dimensionless linear coefficient (a direction cosine).
    pub linear: f64,
    /// Quadratic coefficient in 1/meters (wavefront curvature).
    pub quadratic: f64,
}

impl SteeringParams {
    pub fn new(linear: f64, quadratic: f64) -> Self {
        Self { linear, quadratic }
    }

    pub fn flat(linear: f64) -> Self {
        Self {
            linear,
            quadratic: 0.0,
        }
    }
}

/// One scattered propagation path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NlosPath {
    pub gain: Complex64,
    pub rx: SteeringParams,
    pub tx: SteeringParams,
    /// Angle of arrival at the receive array, radians.
    pub aoa: f64,
    /// Angle of departure from the transmit array, radians.
    pub aod: f64,
    /// Scatterer-to-receiver range, meters.
    pub rx_range: f64,
    /// Transmitter-to-scatterer range, meters.
    pub tx_range: f64,
}

impl NlosPath {
    /// Path from geometric parameters; the steering parameters follow the
    /// transformed-parameter conventions (rho_r = cos aoa, rho_t = -cos aod).
    pub fn from_geometry(
        gain: Complex64,
        aoa: f64,
        aod: f64,
        rx_range: f64,
        tx_range: f64,
    ) -> Self {
        let rho_r = aoa.cos();
        let rho_t = -aod.cos();
        Self {
            gain,
            rx: SteeringParams::new(rho_r, (1.0 - rho_r * rho_r) / (2.0 * rx_range)),
            tx: SteeringParams::new(rho_t, -(1.0 - rho_t * rho_t) / (2.0 * tx_range)),
            aoa,
            aod,
            rx_range,
            tx_range,
        }
    }
}

/// Per-path gains and transformed steering parameters for both link ends.
#[derive(Debug, Clone, Default)]
pub struct NlosPathSet {
    pub paths: Vec<NlosPath>,
}

impl NlosPathSet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }
}

/// LoS wavefront model selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LosModel {
    /// Non-uniform spherical wave: exact phase, per-element 1/r amplitude.
    Nuswm,
    /// Uniform spherical wave: exact phase, uniform amplitude.
    Uswm,
    /// Second-order Fresnel phase, uniform amplitude.
    Parabolic,
    /// Subarray-wise outer product: parabolic with the cross term linearized
    /// per subarray pair, so every subarray block is rank one.
    Sopm,
}

/// Ground-truth channel together with the parameters that generated it.
#[derive(Debug, Clone)]
pub struct ChannelPair {
    pub los: CMat,
    pub nlos: CMat,
    pub truth_geom: SceneGeometry,
    pub truth_paths: NlosPathSet,
}

impl ChannelPair {
    /// Total channel H = H_LoS + H_NLoS.
    pub fn total(&self) -> CMat {
        self.los.add(&self.nlos)
    }
}

/// Near-field steering vector: entry m is
/// exp(-j 2 pi / lambda (delta_m * linear + delta_m^2 * quadratic)).
pub fn steering_vector(config: &ArrayConfig, side: Side, params: SteeringParams) -> Vec<Complex64> {
    let k = 2.0 * std::f64::consts::PI / config.wavelength();
    let n = config.n(side);
    (0..n)
        .map(|m| {
            let d = config.element_offset(side, m).unwrap();
            Complex64::from_polar(1.0, -k * (d * params.linear + d * d * params.quadratic))
        })
        .collect()
}

/// Coupling Vandermonde factor: entry (m, n) is
/// exp(+j 2 pi / lambda * eta * delta_rm * delta_tn).
pub fn coupling_matrix(config: &ArrayConfig, eta: f64) -> CMat {
    let k = 2.0 * std::f64::consts::PI / config.wavelength();
    let dr: Vec<f64> = (0..config.n_rx)
        .map(|m| config.element_offset(Side::Rx, m).unwrap())
        .collect();
    let dt: Vec<f64> = (0..config.n_tx)
        .map(|n| config.element_offset(Side::Tx, n).unwrap())
        .collect();
    CMat::from_fn(config.n_rx, config.n_tx, |m, n| {
        Complex64::from_polar(1.0, k * eta * dr[m] * dt[n])
    })
}

/// Parabolic-model channel assembled from free transformed parameters:
/// gain * a_r a_t^H Hadamard Lambda(eta). This is the structure every LoS
/// estimate reconstructs.
pub fn parabolic_from_params(
    config: &ArrayConfig,
    rx: SteeringParams,
    tx: SteeringParams,
    eta: f64,
    gain: Complex64,
) -> CMat {
    let ar = steering_vector(config, Side::Rx, rx);
    let at = steering_vector(config, Side::Tx, tx);
    CMat::outer(&ar, &at)
        .hadamard(&coupling_matrix(config, eta))
        .scale(gain)
}

/// LoS channel under the chosen wavefront model.
///
/// All four models share the reference-element value `g` (the nominal complex
/// gain in `geom`); the spherical models fold the extra `exp(-j 2 pi R /
/// lambda)` reference phase into it.
pub fn los_channel(config: &ArrayConfig, geom: &SceneGeometry, model: LosModel) -> CMat {
    let g = geom.los_gain;
    let lambda = config.wavelength();
    let k = 2.0 * std::f64::consts::PI / lambda;
    let r0 = geom.range_m;
    match model {
        LosModel::Nuswm | LosModel::Uswm => {
            CMat::from_fn(config.n_rx, config.n_tx, |m, n| {
                let r = exact_distance(config, geom, m, n).unwrap();
                let amp = if model == LosModel::Nuswm { r0 / r } else { 1.0 };
                g * Complex64::from_polar(amp, -k * (r - r0))
            })
        }
        LosModel::Parabolic => parabolic_from_params(
            config,
            SteeringParams::new(geom.phi_rx(), geom.alpha_rx()),
            SteeringParams::new(geom.phi_tx(), geom.alpha_tx()),
            geom.eta(),
            g,
        ),
        LosModel::Sopm => {
            let eta = geom.eta();
            let alpha_r = geom.alpha_rx();
            let alpha_t = geom.alpha_tx();
            let (n_rs, n_ts) = (config.n_sub(Side::Rx), config.n_sub(Side::Tx));
            let mut h = CMat::zeros(config.n_rx, config.n_tx);
            for i in 0..config.k_rx {
                let nu_r = config.subarray_centroid(Side::Rx, i).unwrap();
                for j in 0..config.k_tx {
                    let nu_t = config.subarray_centroid(Side::Tx, j).unwrap();
                    let xi_r = geom.phi_rx() - eta * nu_t;
                    let xi_t = geom.phi_tx() + eta * nu_r;
                    let g_block = g * Complex64::from_polar(1.0, -k * eta * nu_r * nu_t);
                    let ar = steering_vector(config, Side::Rx, SteeringParams::new(xi_r, alpha_r));
                    let at = steering_vector(config, Side::Tx, SteeringParams::new(xi_t, alpha_t));
                    let block = CMat::outer(
                        &ar[i * n_rs..(i + 1) * n_rs],
                        &at[j * n_ts..(j + 1) * n_ts],
                    )
                    .scale(g_block);
                    h.set_block(i * n_rs, j * n_ts, &block);
                }
            }
            h
        }
    }
}

/// NLoS channel sqrt(1/L) sum_l g_l a_r a_t^H; the empty path set gives the
/// zero matrix.
pub fn nlos_channel(config: &ArrayConfig, paths: &NlosPathSet) -> CMat {
    let mut h = CMat::zeros(config.n_rx, config.n_tx);
    if paths.is_empty() {
        return h;
    }
    let scale = (1.0 / paths.len() as f64).sqrt();
    for p in &paths.paths {
        let ar = steering_vector(config, Side::Rx, p.rx);
        let at = steering_vector(config, Side::Tx, p.tx);
        h = h.add(&CMat::outer(&ar, &at).scale(p.gain * scale));
    }
    h
}

/// Scene randomization bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub r_min_m: f64,
    pub r_max_m: f64,
    /// Box for the three LoS angles, degrees.
    pub angle_min_deg: f64,
    pub angle_max_deg: f64,
    pub num_paths: usize,
    /// LoS-to-NLoS power ratio kappa; |g|^2 = kappa / (1 + kappa).
    pub kappa: f64,
    pub scatter_r_min_m: f64,
    pub scatter_r_max_m: f64,
    /// Box for the NLoS arrival/departure angles, degrees.
    pub scatter_angle_min_deg: f64,
    pub scatter_angle_max_deg: f64,
    pub truth_model: LosModel,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            r_min_m: 10.0,
            r_max_m: 200.0,
            angle_min_deg: -60.0,
            angle_max_deg: 60.0,
            num_paths: 3,
            kappa: 4.0,
            scatter_r_min_m: 5.0,
            scatter_r_max_m: 50.0,
            scatter_angle_min_deg: 30.0,
            scatter_angle_max_deg: 150.0,
            truth_model: LosModel::Nuswm,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min_m > 0.0) || self.r_max_m < self.r_min_m {
            return Err(Error::ConfigInvalid("bad range bounds".into()));
        }
        if self.angle_max_deg < self.angle_min_deg
            || self.scatter_angle_max_deg < self.scatter_angle_min_deg
        {
            return Err(Error::ConfigInvalid("bad angle box".into()));
        }
        if !(self.scatter_r_min_m > 0.0) || self.scatter_r_max_m < self.scatter_r_min_m {
            return Err(Error::ConfigInvalid("bad scatterer range bounds".into()));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::ConfigInvalid("kappa must be positive".into()));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

fn complex_normal(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(re * s, im * s)
}

/// Draw a random scene and synthesize its ground-truth channel pair.
///
/// The LoS gain has |g|^2 = kappa / (1 + kappa) with uniform random phase;
/// path gains are complex normal with variance 1 / (1 + kappa) before the
/// sqrt(1/L) combining factor of the NLoS sum.
pub fn sample_scene(
    config: &ArrayConfig,
    rng: &mut impl Rng,
    scene: &SceneConfig,
) -> Result<ChannelPair> {
    scene.validate()?;
    let deg = std::f64::consts::PI / 180.0;
    let range = uniform(rng, scene.r_min_m, scene.r_max_m);
    let theta_r = uniform(rng, scene.angle_min_deg, scene.angle_max_deg) * deg;
    let theta_t = uniform(rng, scene.angle_min_deg, scene.angle_max_deg) * deg;
    let phi_r = uniform(rng, scene.angle_min_deg, scene.angle_max_deg) * deg;

    let gain_mag = (scene.kappa / (1.0 + scene.kappa)).sqrt();
    let gain = Complex64::from_polar(gain_mag, rng.random_range(0.0..2.0 * std::f64::consts::PI));
    let geom = SceneGeometry::new(range, theta_r, theta_t, phi_r, gain);

    let path_var = 1.0 / (1.0 + scene.kappa);
    let mut paths = NlosPathSet::default();
    for _ in 0..scene.num_paths {
        let g = complex_normal(rng, path_var);
        let aoa = uniform(rng, scene.scatter_angle_min_deg, scene.scatter_angle_max_deg) * deg;
        let aod = uniform(rng, scene.scatter_angle_min_deg, scene.scatter_angle_max_deg) * deg;
        let rr = uniform(rng, scene.scatter_r_min_m, scene.scatter_r_max_m);
        let rt = uniform(rng, scene.scatter_r_min_m, scene.scatter_r_max_m);
        paths.paths.push(NlosPath::from_geometry(g, aoa, aod, rr, rt));
    }

    Ok(ChannelPair {
        los: los_channel(config, &geom, scene.truth_model),
        nlos: nlos_channel(config, &paths),
        truth_geom: geom,
        truth_paths: paths,
    })
}
