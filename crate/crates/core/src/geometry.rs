//! Array element coordinates, exact and approximate inter-element distances,
//! and the near-field validity-region criteria.
//!
//! Distances come in four flavors: the exact Euclidean distance between
//! elements, its second-order (parabolic) approximation, and the subarray-wise
//! outer-product (SOPM) linearization of the parabolic cross term. The
//! criteria (Fraunhofer distance, MIMO-ARD, SOPD, parabolic distance, UPD)
//! bound the ranges where each approximation is usable.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed used to convert carrier frequency to wavelength.
///
/// 3e8 m/s is the rounding that makes 60 GHz correspond to a 5 mm wavelength;
/// all quoted criterion values assume it.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Rx,
    Tx,
}

/// Static system geometry: antenna counts, RF-chain counts, spacing, carrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub n_rx: usize,
    pub n_tx: usize,
    pub k_rx: usize,
    pub k_tx: usize,
    /// Carrier frequency in Hz.
    pub carrier_freq: f64,
    /// Element spacing in meters.
    pub spacing: f64,
}

impl ArrayConfig {
    pub fn new(
        n_rx: usize,
        n_tx: usize,
        k_rx: usize,
        k_tx: usize,
        carrier_freq: f64,
        spacing: f64,
    ) -> Result<Self> {
        let cfg = Self {
            n_rx,
            n_tx,
            k_rx,
            k_tx,
            carrier_freq,
            spacing,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Config with the default half-wavelength element spacing.
    pub fn half_wavelength(
        n_rx: usize,
        n_tx: usize,
        k_rx: usize,
        k_tx: usize,
        carrier_freq: f64,
    ) -> Result<Self> {
        let lambda = SPEED_OF_LIGHT / carrier_freq;
        Self::new(n_rx, n_tx, k_rx, k_tx, carrier_freq, lambda / 2.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_rx == 0 || self.n_tx == 0 || self.k_rx == 0 || self.k_tx == 0 {
            return Err(Error::ConfigInvalid(
                "antenna and RF-chain counts must be positive".into(),
            ));
        }
        if self.n_rx % self.k_rx != 0 {
            return Err(Error::ConfigInvalid(format!(
                "k_rx = {} must divide n_rx = {}",
                self.k_rx, self.n_rx
            )));
        }
        if self.n_tx % self.k_tx != 0 {
            return Err(Error::ConfigInvalid(format!(
                "k_tx = {} must divide n_tx = {}",
                self.k_tx, self.n_tx
            )));
        }
        if !(self.spacing > 0.0) || !(self.carrier_freq > 0.0) {
            return Err(Error::ConfigInvalid(
                "spacing and carrier frequency must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_freq
    }

    pub fn n(&self, side: Side) -> usize {
        match side {
            Side::Rx => self.n_rx,
            Side::Tx => self.n_tx,
        }
    }

    pub fn k(&self, side: Side) -> usize {
        match side {
            Side::Rx => self.k_rx,
            Side::Tx => self.k_tx,
        }
    }

    /// Antennas per subarray on one side.
    pub fn n_sub(&self, side: Side) -> usize {
        self.n(side) / self.k(side)
    }

    /// Full-array aperture (N - 1) d.
    pub fn aperture(&self, side: Side) -> f64 {
        (self.n(side) as f64 - 1.0) * self.spacing
    }

    /// Subarray aperture (N_s - 1) d.
    pub fn subarray_aperture(&self, side: Side) -> f64 {
        (self.n_sub(side) as f64 - 1.0) * self.spacing
    }

    /// Signed offset of an element from the array center (0-based index).
    pub fn element_offset(&self, side: Side, index: usize) -> Result<f64> {
        let n = self.n(side);
        if index >= n {
            return Err(Error::IndexOutOfRange(format!(
                "element {index} on a {n}-element array"
            )));
        }
        Ok((index as f64 - (n as f64 - 1.0) / 2.0) * self.spacing)
    }

    /// Signed offset of a subarray centroid from the array center (0-based).
    pub fn subarray_centroid(&self, side: Side, subarray: usize) -> Result<f64> {
        let k = self.k(side);
        if subarray >= k {
            return Err(Error::IndexOutOfRange(format!(
                "subarray {subarray} of {k}"
            )));
        }
        let ns = self.n_sub(side) as f64;
        let n = self.n(side) as f64;
        Ok(((2.0 * subarray as f64 + 1.0) * ns - n) * self.spacing / 2.0)
    }

    /// Subarray containing a given element (both 0-based).
    pub fn subarray_of(&self, side: Side, index: usize) -> usize {
        index / self.n_sub(side)
    }
}

/// The five LoS geometry parameters plus the complex LoS gain.
///
/// Angles follow the two-ULA coordinate system: `elev_rx`/`elev_tx` are the
/// elevations of the receive and transmit arrays and `azim_rx` is the azimuth
/// of the receive array (the transmit azimuth is fixed at zero by choice of
/// coordinates).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneGeometry {
    pub range_m: f64,
    pub elev_rx: f64,
    pub elev_tx: f64,
    pub azim_rx: f64,
    pub los_gain: Complex64,
}

impl SceneGeometry {
    pub fn new(range_m: f64, elev_rx: f64, elev_tx: f64, azim_rx: f64, los_gain: Complex64) -> Self {
        assert!(range_m > 0.0, "range must be positive");
        Self {
            range_m,
            elev_rx,
            elev_tx,
            azim_rx,
            los_gain,
        }
    }

    /// Transformed linear phase parameter of the receive side,
    /// sin(theta_r) cos(phi_r).
    pub fn phi_rx(&self) -> f64 {
        self.elev_rx.sin() * self.azim_rx.cos()
    }

    /// Transformed linear phase parameter of the transmit side, sin(theta_t).
    pub fn phi_tx(&self) -> f64 {
        self.elev_tx.sin()
    }

    /// Quadratic phase parameter of the receive side, (1 - phi_r^2) / (2R) >= 0.
    pub fn alpha_rx(&self) -> f64 {
        let p = self.phi_rx();
        (1.0 - p * p) / (2.0 * self.range_m)
    }

    /// Quadratic phase parameter of the transmit side, -(1 - phi_t^2) / (2R) <= 0.
    pub fn alpha_tx(&self) -> f64 {
        let p = self.phi_tx();
        -(1.0 - p * p) / (2.0 * self.range_m)
    }

    /// Cross-coupling parameter cos(theta_r) cos(theta_t) / R.
    pub fn eta(&self) -> f64 {
        self.elev_rx.cos() * self.elev_tx.cos() / self.range_m
    }
}

/// Raw angle triple used by the criterion searches.
#[derive(Debug, Clone, Copy)]
struct Angles {
    theta_rx: f64,
    theta_tx: f64,
    phi_rx: f64,
}

/// Exact element-pair distance for raw parameters.
fn exact_dist_raw(r: f64, ang: Angles, delta_r: f64, delta_t: f64) -> f64 {
    let (sr, cr) = ang.theta_rx.sin_cos();
    let (st, ct) = ang.theta_tx.sin_cos();
    let (sp, cp) = ang.phi_rx.sin_cos();
    let z = r + delta_r * sr * cp - delta_t * st;
    let y = delta_r * sr * sp;
    let x = delta_r * cr - delta_t * ct;
    (z * z + y * y + x * x).sqrt()
}

/// Parabolic element-pair distance in the transformed-parameter form.
fn parabolic_dist_raw(r: f64, ang: Angles, delta_r: f64, delta_t: f64) -> f64 {
    let phi_r = ang.theta_rx.sin() * ang.phi_rx.cos();
    let phi_t = ang.theta_tx.sin();
    let alpha_r = (1.0 - phi_r * phi_r) / (2.0 * r);
    let alpha_t = -(1.0 - phi_t * phi_t) / (2.0 * r);
    let eta = ang.theta_rx.cos() * ang.theta_tx.cos() / r;
    r + delta_r * delta_r * alpha_r - delta_t * delta_t * alpha_t + delta_r * phi_r
        - delta_t * phi_t
        - eta * delta_r * delta_t
}

/// SOPM element-pair distance; `nu_r`, `nu_t` are the centroids of the
/// subarrays containing the two elements.
fn sopm_dist_raw(r: f64, ang: Angles, delta_r: f64, delta_t: f64, nu_r: f64, nu_t: f64) -> f64 {
    let phi_r = ang.theta_rx.sin() * ang.phi_rx.cos();
    let phi_t = ang.theta_tx.sin();
    let alpha_r = (1.0 - phi_r * phi_r) / (2.0 * r);
    let alpha_t = -(1.0 - phi_t * phi_t) / (2.0 * r);
    let eta = ang.theta_rx.cos() * ang.theta_tx.cos() / r;
    r + delta_r * delta_r * alpha_r - delta_t * delta_t * alpha_t
        + delta_r * (phi_r - eta * nu_t)
        - delta_t * (phi_t + eta * nu_r)
        + eta * nu_r * nu_t
}

fn scene_angles(geom: &SceneGeometry) -> Angles {
    Angles {
        theta_rx: geom.elev_rx,
        theta_tx: geom.elev_tx,
        phi_rx: geom.azim_rx,
    }
}

/// Euclidean distance between receive element `m` and transmit element `n`
/// (0-based indices).
pub fn exact_distance(
    config: &ArrayConfig,
    geom: &SceneGeometry,
    m: usize,
    n: usize,
) -> Result<f64> {
    let dr = config.element_offset(Side::Rx, m)?;
    let dt = config.element_offset(Side::Tx, n)?;
    Ok(exact_dist_raw(geom.range_m, scene_angles(geom), dr, dt))
}

/// Second-order (Fresnel) approximation of [`exact_distance`].
pub fn parabolic_distance(
    config: &ArrayConfig,
    geom: &SceneGeometry,
    m: usize,
    n: usize,
) -> Result<f64> {
    let dr = config.element_offset(Side::Rx, m)?;
    let dt = config.element_offset(Side::Tx, n)?;
    Ok(parabolic_dist_raw(geom.range_m, scene_angles(geom), dr, dt))
}

/// Subarray-wise linearization of the parabolic cross term. Within one
/// (i, j) subarray pair the result is additively separable in `m` and `n`.
pub fn sopm_distance(
    config: &ArrayConfig,
    geom: &SceneGeometry,
    m: usize,
    n: usize,
) -> Result<f64> {
    let dr = config.element_offset(Side::Rx, m)?;
    let dt = config.element_offset(Side::Tx, n)?;
    let nu_r = config.subarray_centroid(Side::Rx, config.subarray_of(Side::Rx, m))?;
    let nu_t = config.subarray_centroid(Side::Tx, config.subarray_of(Side::Tx, n))?;
    Ok(sopm_dist_raw(
        geom.range_m,
        scene_angles(geom),
        dr,
        dt,
        nu_r,
        nu_t,
    ))
}

/// Classical far-field boundary 2 A^2 / lambda.
pub fn fraunhofer_distance(aperture: f64, wavelength: f64) -> f64 {
    2.0 * aperture * aperture / wavelength
}

/// MIMO advanced Rayleigh distance 4 A_r A_t / lambda: the boundary beyond
/// which the whole-array outer-product approximation holds.
pub fn mimo_ard(config: &ArrayConfig) -> f64 {
    4.0 * config.aperture(Side::Rx) * config.aperture(Side::Tx) / config.wavelength()
}

/// Subarray-wise outer product distance 4 A_rs A_ts / lambda: the boundary
/// beyond which the SOPM worst-case phase error stays under pi/8.
pub fn sopd(config: &ArrayConfig) -> f64 {
    4.0 * config.subarray_aperture(Side::Rx) * config.subarray_aperture(Side::Tx)
        / config.wavelength()
}

/// Closed-form worst-case SOPM phase discrepancy bound
/// pi A_rs A_ts / (2 R lambda), in radians.
pub fn lemma1_bound(config: &ArrayConfig, range_m: f64) -> f64 {
    std::f64::consts::PI * config.subarray_aperture(Side::Rx) * config.subarray_aperture(Side::Tx)
        / (2.0 * range_m * config.wavelength())
}

/// Golden-section maximization of `f` on `[x0 - h, x0 + h]`, seeded with the
/// coarse argmax `x0`. Returns the best point seen; never worse than `f(x0)`,
/// so flat directions stay at the deterministic coarse tie-break.
fn golden_refine(f: &dyn Fn(f64) -> f64, x0: f64, h: f64, iters: usize) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let (mut best_x, mut best_f) = (x0, f(x0));
    let (mut lo, mut hi) = (x0 - h, x0 + h);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iters {
        if f1 > best_f {
            best_f = f1;
            best_x = x1;
        }
        if f2 > best_f {
            best_f = f2;
            best_x = x2;
        }
        if f1 > f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        }
    }
    (best_x, best_f)
}

/// Which approximate distance model a phase-error search compares against the
/// exact distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ErrModel {
    Parabolic,
    Sopm,
}

/// Phase error (radians) of the chosen model for one element pair at the
/// given angles.
fn phase_err(
    config: &ArrayConfig,
    model: ErrModel,
    r: f64,
    ang: Angles,
    m: usize,
    n: usize,
) -> f64 {
    let dr = config.element_offset(Side::Rx, m).unwrap();
    let dt = config.element_offset(Side::Tx, n).unwrap();
    let exact = exact_dist_raw(r, ang, dr, dt);
    let approx = match model {
        ErrModel::Parabolic => parabolic_dist_raw(r, ang, dr, dt),
        ErrModel::Sopm => {
            let nu_r = config
                .subarray_centroid(Side::Rx, config.subarray_of(Side::Rx, m))
                .unwrap();
            let nu_t = config
                .subarray_centroid(Side::Tx, config.subarray_of(Side::Tx, n))
                .unwrap();
            sopm_dist_raw(r, ang, dr, dt, nu_r, nu_t)
        }
    };
    2.0 * std::f64::consts::PI / config.wavelength() * (exact - approx).abs()
}

/// Result of a brute-force phase-error maximization.
#[derive(Debug, Clone, Copy)]
pub struct PhaseErrorReport {
    pub max_error_rad: f64,
    pub theta_rx: f64,
    pub theta_tx: f64,
    pub phi_rx: f64,
    pub delta_rx: f64,
    pub delta_tx: f64,
    /// Closed-form bound at the same range (Lemma-1 style); only meaningful
    /// for the SOPM searches.
    pub analytic_bound_rad: f64,
}

impl PhaseErrorReport {
    /// Check the KKT-predicted worst-case structure: edge antennas on both
    /// sides, placed antipodally (the canonical form theta_t = theta_r + pi,
    /// phi_r = 0 with both offsets positive). The parameterization has a
    /// reflection symmetry (delta -> -delta with theta -> theta + pi), so the
    /// comparison is between the physical displacement directions, within
    /// `angle_tol` radians.
    pub fn matches_expected_structure(&self, config: &ArrayConfig, angle_tol: f64) -> bool {
        let half = config.spacing / 2.0;
        let edge_r = (self.delta_rx.abs() - config.aperture(Side::Rx) / 2.0).abs() < half;
        let edge_t = (self.delta_tx.abs() - config.aperture(Side::Tx) / 2.0).abs() < half;
        // Unit displacement directions of the two antennas from their array
        // references; the worst case wants them opposed (and the receive one
        // in the x-z plane, which opposition to a y = 0 vector implies).
        let (sr, cr) = self.theta_rx.sin_cos();
        let (st, ct) = self.theta_tx.sin_cos();
        let (sp, cp) = self.phi_rx.sin_cos();
        let sgn_r = self.delta_rx.signum();
        let sgn_t = self.delta_tx.signum();
        let u_r = [sgn_r * cr, sgn_r * sr * sp, sgn_r * sr * cp];
        let u_t = [sgn_t * ct, 0.0, sgn_t * st];
        let dot = u_r[0] * u_t[0] + u_r[1] * u_t[1] + u_r[2] * u_t[2];
        let antipodal = dot <= -(angle_tol.cos());
        edge_r && edge_t && antipodal
    }
}

/// Distance between two angles mod 2 pi.
#[cfg(test)]
fn angle_dist(a: f64, b: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let d = (a - b).rem_euclid(two_pi);
    d.min(two_pi - d)
}

/// Maximize the model phase error over the full angle box and all element
/// pairs: coarse grid (corner element pairs) -> coordinate-wise golden
/// refinement -> exhaustive element-pair scan -> second refinement.
fn max_phase_error(
    config: &ArrayConfig,
    model: ErrModel,
    r: f64,
    grid_density: usize,
) -> PhaseErrorReport {
    let two_pi = 2.0 * std::f64::consts::PI;
    let q = grid_density.max(8);
    let corners: Vec<(usize, usize)> = vec![
        (0, 0),
        (0, config.n_tx - 1),
        (config.n_rx - 1, 0),
        (config.n_rx - 1, config.n_tx - 1),
    ];
    let err_over = |ang: Angles, pairs: &[(usize, usize)]| -> f64 {
        pairs
            .iter()
            .map(|&(m, n)| phase_err(config, model, r, ang, m, n))
            .fold(0.0, f64::max)
    };

    // Coarse scan; strict > keeps the lowest-index tie-break.
    let mut best = Angles {
        theta_rx: 0.0,
        theta_tx: 0.0,
        phi_rx: 0.0,
    };
    let mut best_err = -1.0;
    for it in 0..q {
        for ir in 0..q {
            for ip in 0..q {
                let ang = Angles {
                    theta_rx: ir as f64 / q as f64 * two_pi,
                    theta_tx: it as f64 / q as f64 * two_pi,
                    phi_rx: ip as f64 / q as f64 * two_pi,
                };
                let e = err_over(ang, &corners);
                if e > best_err {
                    best_err = e;
                    best = ang;
                }
            }
        }
    }

    let step = two_pi / q as f64;
    let refine = |mut ang: Angles, pairs: &[(usize, usize)]| -> (Angles, f64) {
        let mut val = err_over(ang, pairs);
        for _ in 0..3 {
            let (x, v) = golden_refine(
                &|t| {
                    err_over(
                        Angles {
                            theta_rx: t,
                            ..ang
                        },
                        pairs,
                    )
                },
                ang.theta_rx,
                step,
                40,
            );
            if v > val {
                ang.theta_rx = x;
                val = v;
            }
            let (x, v) = golden_refine(
                &|t| {
                    err_over(
                        Angles {
                            theta_tx: t,
                            ..ang
                        },
                        pairs,
                    )
                },
                ang.theta_tx,
                step,
                40,
            );
            if v > val {
                ang.theta_tx = x;
                val = v;
            }
            let (x, v) = golden_refine(
                &|t| err_over(Angles { phi_rx: t, ..ang }, pairs),
                ang.phi_rx,
                step,
                40,
            );
            if v > val {
                ang.phi_rx = x;
                val = v;
            }
        }
        (ang, val)
    };

    let (mut ang, _) = refine(best, &corners);

    // Exhaustive element-pair scan at the refined angles.
    let mut best_pair = (0usize, 0usize);
    let mut best_pair_err = -1.0;
    for m in 0..config.n_rx {
        for n in 0..config.n_tx {
            let e = phase_err(config, model, r, ang, m, n);
            if e > best_pair_err {
                best_pair_err = e;
                best_pair = (m, n);
            }
        }
    }
    let pair = [best_pair];
    let (ang2, err2) = refine(ang, &pair);
    ang = ang2;

    PhaseErrorReport {
        max_error_rad: err2,
        theta_rx: ang.theta_rx,
        theta_tx: ang.theta_tx,
        phi_rx: ang.phi_rx,
        delta_rx: config.element_offset(Side::Rx, best_pair.0).unwrap(),
        delta_tx: config.element_offset(Side::Tx, best_pair.1).unwrap(),
        analytic_bound_rad: lemma1_bound(config, r),
    }
}

/// Brute-force verification of the worst-case SOPM phase error at one range.
///
/// Maximizes (2 pi / lambda) |exact - sopm| over the full angle box and all
/// element pairs. `grid_density` is the coarse points-per-angle count (64 is
/// plenty; the error surface is a low-order trig polynomial).
pub fn lemma1_bruteforce(
    config: &ArrayConfig,
    range_m: f64,
    grid_density: usize,
) -> PhaseErrorReport {
    max_phase_error(config, ErrModel::Sopm, range_m, grid_density)
}

const SEARCH_LO: f64 = 0.1;
const SEARCH_HI: f64 = 10_000.0;
const SEARCH_TOL: f64 = 0.01;

/// Smallest range at which the parabolic model's worst-case phase error drops
/// to pi/8, found by bisection. Returns 0 for degenerate arrays where the
/// models coincide.
pub fn parabolic_validity_distance(config: &ArrayConfig) -> Result<f64> {
    let threshold = std::f64::consts::PI / 8.0;
    let err_at = |r: f64| max_phase_error(config, ErrModel::Parabolic, r, 32).max_error_rad;
    bisect_criterion(&err_at, threshold)
}

/// Smallest range at which the SOPM worst-case phase error drops to pi/8
/// (the empirical counterpart of [`sopd`]).
pub fn sopm_validity_distance(config: &ArrayConfig) -> Result<f64> {
    let threshold = std::f64::consts::PI / 8.0;
    let err_at = |r: f64| max_phase_error(config, ErrModel::Sopm, r, 32).max_error_rad;
    bisect_criterion(&err_at, threshold)
}

/// Find the smallest R in the bracket with err(R) <= threshold.
fn bisect_criterion(err_at: &dyn Fn(f64) -> f64, threshold: f64) -> Result<f64> {
    if err_at(SEARCH_LO) <= threshold {
        return Ok(0.0);
    }
    if err_at(SEARCH_HI) > threshold {
        return Err(Error::SearchFailed(format!(
            "phase error still above threshold at {SEARCH_HI} m"
        )));
    }
    let (mut lo, mut hi) = (SEARCH_LO, SEARCH_HI);
    while hi - lo > SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        if err_at(mid) > threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Which link the uniform-power criterion describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerMode {
    /// Element pairs across both arrays.
    Los,
    /// Receive array against a point scatterer.
    Nlos,
}

/// Worst-case (over the angle box) ratio of minimum to maximum received power
/// across element pairs, (r_min / r_max)^2, at one range.
fn worst_power_ratio(config: &ArrayConfig, mode: PowerMode, r: f64) -> f64 {
    let q = 48usize;
    let two_pi = 2.0 * std::f64::consts::PI;
    let ratio_at = |ang: Angles| ratio_one_angle(config, mode, r, ang);

    let mut best = Angles {
        theta_rx: 0.0,
        theta_tx: 0.0,
        phi_rx: 0.0,
    };
    let mut best_ratio = f64::INFINITY;
    let qt = if mode == PowerMode::Los { q } else { 1 };
    for it in 0..qt {
        for ir in 0..q {
            for ip in 0..q {
                let ang = Angles {
                    theta_rx: ir as f64 / q as f64 * two_pi,
                    theta_tx: it as f64 / qt as f64 * two_pi,
                    phi_rx: ip as f64 / q as f64 * two_pi,
                };
                let v = ratio_at(ang);
                if v < best_ratio {
                    best_ratio = v;
                    best = ang;
                }
            }
        }
    }
    // Golden refinement of the minimum (negate to reuse the maximizer).
    let step = two_pi / q as f64;
    let mut ang = best;
    let mut val = best_ratio;
    for _ in 0..2 {
        let (x, v) = golden_refine(
            &|t| {
                -ratio_at(Angles {
                    theta_rx: t,
                    ..ang
                })
            },
            ang.theta_rx,
            step,
            40,
        );
        if -v < val {
            ang.theta_rx = x;
            val = -v;
        }
        if mode == PowerMode::Los {
            let (x, v) = golden_refine(
                &|t| {
                    -ratio_at(Angles {
                        theta_tx: t,
                        ..ang
                    })
                },
                ang.theta_tx,
                step,
                40,
            );
            if -v < val {
                ang.theta_tx = x;
                val = -v;
            }
        }
        let (x, v) = golden_refine(
            &|t| -ratio_at(Angles { phi_rx: t, ..ang }),
            ang.phi_rx,
            step,
            40,
        );
        if -v < val {
            ang.phi_rx = x;
            val = -v;
        }
    }
    val
}

/// (r_min / r_max)^2 over element pairs for one angle configuration.
///
/// r^2 is a convex quadratic in the element offsets, so the maximum over the
/// offset box sits at a corner and the minimum at the clamped stationary
/// point; both get snapped to the element lattice.
fn ratio_one_angle(config: &ArrayConfig, mode: PowerMode, r: f64, ang: Angles) -> f64 {
    let (sr, cr) = ang.theta_rx.sin_cos();
    let (st, ct) = ang.theta_tx.sin_cos();
    let (sp, cp) = ang.phi_rx.sin_cos();
    let a = sr * cp;
    let c = sr * sp;

    let half_r = config.aperture(Side::Rx) / 2.0;
    let dist = |dr: f64, dt: f64| exact_dist_raw(r, ang, dr, dt);

    let snap = |x: f64, side: Side| -> Vec<f64> {
        let d = config.spacing;
        let n = config.n(side) as f64;
        let idx = x / d + (n - 1.0) / 2.0;
        let mut out = Vec::with_capacity(2);
        for i in [idx.floor(), idx.ceil()] {
            let i = i.clamp(0.0, n - 1.0);
            out.push((i - (n - 1.0) / 2.0) * d);
        }
        out
    };

    match mode {
        PowerMode::Nlos => {
            // 1-D quadratic in delta_r: endpoints give the max, the clamped
            // stationary point gives the min.
            let denom = a * a + c * c + cr * cr;
            let dr_star = if denom > 1e-12 {
                (-a * r / denom).clamp(-half_r, half_r)
            } else {
                0.0
            };
            let mut rmin = f64::INFINITY;
            for dr in snap(dr_star, Side::Rx) {
                rmin = rmin.min(dist(dr, 0.0));
            }
            let rmax = dist(-half_r, 0.0).max(dist(half_r, 0.0));
            (rmin / rmax).powi(2)
        }
        PowerMode::Los => {
            let half_t = config.aperture(Side::Tx) / 2.0;
            // Stationary point of the convex quadratic r^2(delta_r, delta_t).
            let a11 = a * a + c * c + cr * cr;
            let a22 = st * st + ct * ct; // = 1
            let a12 = -(a * st + cr * ct);
            let (b1, b2) = (-a * r, st * r);
            let det = a11 * a22 - a12 * a12;
            let (u0, v0) = if det.abs() > 1e-12 {
                (
                    ((b1 * a22 - a12 * b2) / det).clamp(-half_r, half_r),
                    ((a11 * b2 - a12 * b1) / det).clamp(-half_t, half_t),
                )
            } else {
                (0.0, 0.0)
            };
            // Candidate minimizers: clamped interior point plus the four
            // box-edge 1-D minimizers.
            let mut cands: Vec<(f64, f64)> = vec![(u0, v0)];
            for &u in &[-half_r, half_r] {
                let v = if a22.abs() > 1e-12 {
                    ((b2 - a12 * u) / a22).clamp(-half_t, half_t)
                } else {
                    0.0
                };
                cands.push((u, v));
            }
            for &v in &[-half_t, half_t] {
                let u = if a11.abs() > 1e-12 {
                    ((b1 - a12 * v) / a11).clamp(-half_r, half_r)
                } else {
                    0.0
                };
                cands.push((u, v));
            }
            let mut rmin = f64::INFINITY;
            for (u, v) in cands {
                for du in snap(u, Side::Rx) {
                    for dv in snap(v, Side::Tx) {
                        rmin = rmin.min(dist(du, dv));
                    }
                }
            }
            let mut rmax: f64 = 0.0;
            for &u in &[-half_r, half_r] {
                for &v in &[-half_t, half_t] {
                    rmax = rmax.max(dist(u, v));
                }
            }
            (rmin / rmax).powi(2)
        }
    }
}

/// Uniform power distance: smallest range at which the worst-case
/// min-to-max received power ratio across element pairs stays at or above
/// `threshold` for every angle configuration.
pub fn uniform_power_distance(
    config: &ArrayConfig,
    threshold: f64,
    mode: PowerMode,
) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "power threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let ratio_at = |r: f64| worst_power_ratio(config, mode, r);
    if ratio_at(SEARCH_LO) >= threshold {
        return Ok(0.0);
    }
    if ratio_at(SEARCH_HI) < threshold {
        return Err(Error::SearchFailed(format!(
            "power ratio below threshold even at {SEARCH_HI} m"
        )));
    }
    let (mut lo, mut hi) = (SEARCH_LO, SEARCH_HI);
    while hi - lo > SEARCH_TOL {
        let mid = 0.5 * (lo + hi);
        if ratio_at(mid) < threshold {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
