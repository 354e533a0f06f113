//! LoS channel estimation by alternating subarray-wise array-gain
//! maximization (ASAGM).
//!
//! Stage one alternates low-dimensional grid searches: a receive half-step
//! jointly picks the per-transmit-subarray auxiliary parameters xi_r,j and
//! one curvature alpha_r (transmit side fixed), then a transmit half-step
//! mirrors it. Stage two ties the auxiliary estimates back to the physical
//! parameters (phi_r, phi_t, eta) with a closed-form linear regression, and a
//! scalar least squares fits the complex gain.

use num_complex::Complex64;

use crate::channel::{parabolic_from_params, SteeringParams};
use crate::error::{Error, Result};
use crate::frontend::{subarray_block, whiten, HybridFrontend};
use crate::geometry::Side;
use crate::numerics::{cdot, normalize, solve_lower, CMat};
use crate::OpCounters;

/// Uniform search grid for one side's (xi, alpha) parameters.
///
/// The xi grid spans [-1, 1]. The curvature grid starts at exactly 0 and runs
/// to +1/(2 r_min) on the receive side, -1/(2 r_min) on the transmit side, so
/// index 0 is always the far-field point.
#[derive(Debug, Clone)]
pub struct ParamGrid {
    pub xi: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl ParamGrid {
    pub fn receive(q_xi: usize, q_alpha: usize, r_min: f64) -> Result<Self> {
        Self::with_bounds(q_xi, -1.0, 1.0, q_alpha, 1.0 / (2.0 * r_min))
    }

    pub fn transmit(q_xi: usize, q_alpha: usize, r_min: f64) -> Result<Self> {
        Self::with_bounds(q_xi, -1.0, 1.0, q_alpha, -1.0 / (2.0 * r_min))
    }

    pub fn with_bounds(
        q_xi: usize,
        xi_lo: f64,
        xi_hi: f64,
        q_alpha: usize,
        alpha_hi: f64,
    ) -> Result<Self> {
        if q_xi < 2 || q_alpha < 1 {
            return Err(Error::ConfigInvalid(
                "need q_xi >= 2 and q_alpha >= 1".into(),
            ));
        }
        if !(xi_hi > xi_lo) || !alpha_hi.is_finite() {
            return Err(Error::ConfigInvalid("bad grid bounds".into()));
        }
        let xi = (0..q_xi)
            .map(|q| xi_lo + (xi_hi - xi_lo) * q as f64 / (q_xi - 1) as f64)
            .collect();
        let alpha = if q_alpha == 1 {
            vec![0.0]
        } else {
            (0..q_alpha)
                .map(|q| alpha_hi * q as f64 / (q_alpha - 1) as f64)
                .collect()
        };
        Ok(Self { xi, alpha })
    }
}

/// Auxiliary-parameter state of the alternating search. `xi_rx` has one entry
/// per transmit subarray, `xi_tx` one per receive subarray.
#[derive(Debug, Clone)]
pub struct AsagmState {
    pub xi_rx: Vec<f64>,
    pub xi_rx_idx: Vec<usize>,
    pub alpha_rx: f64,
    pub alpha_rx_idx: usize,
    pub xi_tx: Vec<f64>,
    pub xi_tx_idx: Vec<usize>,
    pub alpha_tx: f64,
    pub alpha_tx_idx: usize,
    /// Canonical bilinear objective at the current parameters; valid once a
    /// transmit half-step has run.
    pub objective: f64,
    have_tx: bool,
}

impl AsagmState {
    pub fn new(k_rx: usize, k_tx: usize) -> Self {
        Self {
            xi_rx: vec![0.0; k_tx],
            xi_rx_idx: vec![0; k_tx],
            alpha_rx: 0.0,
            alpha_rx_idx: 0,
            xi_tx: vec![0.0; k_rx],
            xi_tx_idx: vec![0; k_rx],
            alpha_tx: 0.0,
            alpha_tx_idx: 0,
            objective: 0.0,
            have_tx: false,
        }
    }

    pub fn has_transmit_estimates(&self) -> bool {
        self.have_tx
    }

    /// Mark the transmit-side parameters as already estimated (used by tests
    /// that drive single half-steps).
    pub fn set_transmit_estimates(
        &mut self,
        xi_tx_idx: Vec<usize>,
        alpha_tx_idx: usize,
        grid_tx: &ParamGrid,
    ) {
        self.xi_tx = xi_tx_idx.iter().map(|&q| grid_tx.xi[q]).collect();
        self.xi_tx_idx = xi_tx_idx;
        self.alpha_tx = grid_tx.alpha[alpha_tx_idx];
        self.alpha_tx_idx = alpha_tx_idx;
        self.have_tx = true;
        self.objective = -1.0;
    }
}

/// Per-subarray whitened observation blocks and their whiteners.
#[derive(Debug, Clone)]
pub struct WhitenedBlocks {
    /// blocks[i][j] = L_i^{-1} Y_{i,j}.
    pub blocks: Vec<Vec<CMat>>,
    /// L_i per receive subarray.
    pub whiteners: Vec<CMat>,
}

/// Slice the observation into subarray blocks and whiten each against its
/// receive combiner block.
pub fn whiten_blocks(y: &CMat, frontend: &HybridFrontend) -> Result<WhitenedBlocks> {
    let cfg = frontend.config();
    let mut blocks = Vec::with_capacity(cfg.k_rx);
    let mut whiteners = Vec::with_capacity(cfg.k_rx);
    for i in 0..cfg.k_rx {
        let mut row = Vec::with_capacity(cfg.k_tx);
        let mut whitener = None;
        for j in 0..cfg.k_tx {
            let blk = subarray_block(y, frontend, i, j)?;
            let obs = whiten(&blk, frontend.combiner_block(i), 0.0)?;
            row.push(obs.data);
            whitener.get_or_insert(obs.whitener);
        }
        blocks.push(row);
        whiteners.push(whitener.unwrap());
    }
    Ok(WhitenedBlocks { blocks, whiteners })
}

/// Normalized effective steering vector of one subarray: the receive side is
/// whitened through L_i, the transmit side is the precoded steering slice.
pub fn effective_steering(
    frontend: &HybridFrontend,
    side: Side,
    subarray: usize,
    whitener: Option<&CMat>,
    params: SteeringParams,
) -> Result<Vec<Complex64>> {
    let cfg = frontend.config();
    let n_s = cfg.n_sub(side);
    let base = subarray * n_s;
    let k = 2.0 * std::f64::consts::PI / cfg.wavelength();
    let slice: Vec<Complex64> = (0..n_s)
        .map(|t| {
            let d = cfg.element_offset(side, base + t)?;
            Ok(Complex64::from_polar(
                1.0,
                -k * (d * params.linear + d * d * params.quadratic),
            ))
        })
        .collect::<Result<_>>()?;
    let v = match side {
        Side::Rx => {
            let projected = frontend.combiner_block(subarray).herm_mul_vec(&slice);
            match whitener {
                Some(l) => solve_lower(l, &projected),
                None => projected,
            }
        }
        Side::Tx => frontend.precoder_block(subarray).herm_mul_vec(&slice),
    };
    normalize(&v)
}

/// Bilinear array-gain metric |a_r^H (Y a_t)|.
///
/// The contraction order is fixed (Y a_t first) so every caller produces
/// bit-identical values for identical parameters.
pub fn gain_metric(y_block: &CMat, a_bar_rx: &[Complex64], a_bar_tx: &[Complex64]) -> f64 {
    let z = y_block.mul_vec(a_bar_tx);
    cdot(a_bar_rx, &z).norm()
}

/// Transmit-noncoherent metric ||Y^H a_r||_2 used by the very first receive
/// half-step, before any transmit estimates exist.
fn row_energy_metric(y_block: &CMat, a_bar_rx: &[Complex64]) -> f64 {
    (0..y_block.cols())
        .map(|t| cdot(a_bar_rx, y_block.col(t)).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Canonical objective: the sum of G_{i,j} over all subarray pairs at the
/// state's parameters, with a fixed evaluation and accumulation order.
pub fn bilinear_objective(
    state: &AsagmState,
    data: &WhitenedBlocks,
    frontend: &HybridFrontend,
    counters: &mut OpCounters,
) -> Result<f64> {
    let cfg = frontend.config();
    let mut total = 0.0;
    for j in 0..cfg.k_tx {
        for i in 0..cfg.k_rx {
            let ar = effective_steering(
                frontend,
                Side::Rx,
                i,
                Some(&data.whiteners[i]),
                SteeringParams::new(state.xi_rx[j], state.alpha_rx),
            )?;
            let at = effective_steering(
                frontend,
                Side::Tx,
                j,
                None,
                SteeringParams::new(state.xi_tx[i], state.alpha_tx),
            )?;
            counters.asagm_metric_evals += 1;
            total += gain_metric(&data.blocks[i][j], &ar, &at);
        }
    }
    Ok(total)
}

/// One receive half-step: for every candidate curvature, pick the best xi_r,j
/// per transmit subarray, then pick the curvature with the best total. The
/// first call (no transmit estimates yet) scores candidates with the
/// row-energy metric instead of the bilinear one.
pub fn asagm_receive_step(
    state: &mut AsagmState,
    data: &WhitenedBlocks,
    frontend: &HybridFrontend,
    grid: &ParamGrid,
    counters: &mut OpCounters,
) -> Result<()> {
    let cfg = frontend.config();
    let (k_rx, k_tx) = (cfg.k_rx, cfg.k_tx);

    // Fixed transmit factors Y_{i,j} a_t for the bilinear mode.
    let bilinear = state.have_tx;
    let mut fixed: Vec<Vec<Vec<Complex64>>> = Vec::new();
    if bilinear {
        for i in 0..k_rx {
            let mut row = Vec::with_capacity(k_tx);
            for j in 0..k_tx {
                let at = effective_steering(
                    frontend,
                    Side::Tx,
                    j,
                    None,
                    SteeringParams::new(state.xi_tx[i], state.alpha_tx),
                )?;
                row.push(data.blocks[i][j].mul_vec(&at));
            }
            fixed.push(row);
        }
    }

    let mut best_total = -1.0;
    let mut best_alpha_idx = 0;
    let mut best_xi_idx = vec![0usize; k_tx];
    for (ai, &alpha) in grid.alpha.iter().enumerate() {
        let mut best_j: Vec<(f64, usize)> = vec![(-1.0, 0); k_tx];
        for (qi, &xi) in grid.xi.iter().enumerate() {
            let ars: Vec<Vec<Complex64>> = (0..k_rx)
                .map(|i| {
                    effective_steering(
                        frontend,
                        Side::Rx,
                        i,
                        Some(&data.whiteners[i]),
                        SteeringParams::new(xi, alpha),
                    )
                })
                .collect::<Result<_>>()?;
            for j in 0..k_tx {
                let mut s = 0.0;
                for (i, ar) in ars.iter().enumerate() {
                    counters.asagm_metric_evals += 1;
                    s += if bilinear {
                        cdot(ar, &fixed[i][j]).norm()
                    } else {
                        row_energy_metric(&data.blocks[i][j], ar)
                    };
                }
                if s > best_j[j].0 {
                    best_j[j] = (s, qi);
                }
            }
        }
        let total: f64 = best_j.iter().map(|(s, _)| s).sum();
        if total > best_total {
            best_total = total;
            best_alpha_idx = ai;
            for (j, (_, qi)) in best_j.iter().enumerate() {
                best_xi_idx[j] = *qi;
            }
        }
    }

    let mut candidate = state.clone();
    candidate.alpha_rx_idx = best_alpha_idx;
    candidate.alpha_rx = grid.alpha[best_alpha_idx];
    for j in 0..k_tx {
        candidate.xi_rx_idx[j] = best_xi_idx[j];
        candidate.xi_rx[j] = grid.xi[best_xi_idx[j]];
    }
    if !bilinear {
        // Initialization step: adopt unconditionally; the objective becomes
        // meaningful once transmit estimates exist.
        *state = candidate;
        return Ok(());
    }
    // The scan maximizes the same objective, but its accumulation order
    // differs from the canonical one; re-evaluate canonically and keep the
    // old parameters on a rounding-level regression so the recorded
    // objective never decreases.
    let obj = bilinear_objective(&candidate, data, frontend, counters)?;
    if obj >= state.objective {
        candidate.objective = obj;
        *state = candidate;
    }
    Ok(())
}

/// One transmit half-step, the mirror of [`asagm_receive_step`] with the
/// roles of (i, j) and (r, t) swapped.
pub fn asagm_transmit_step(
    state: &mut AsagmState,
    data: &WhitenedBlocks,
    frontend: &HybridFrontend,
    grid: &ParamGrid,
    counters: &mut OpCounters,
) -> Result<()> {
    let cfg = frontend.config();
    let (k_rx, k_tx) = (cfg.k_rx, cfg.k_tx);

    // Fixed receive steerings a_r(xi_r,j, alpha_r) per block.
    let mut fixed: Vec<Vec<Vec<Complex64>>> = Vec::with_capacity(k_rx);
    for i in 0..k_rx {
        let mut row = Vec::with_capacity(k_tx);
        for j in 0..k_tx {
            row.push(effective_steering(
                frontend,
                Side::Rx,
                i,
                Some(&data.whiteners[i]),
                SteeringParams::new(state.xi_rx[j], state.alpha_rx),
            )?);
        }
        fixed.push(row);
    }

    let mut best_total = -1.0;
    let mut best_alpha_idx = 0;
    let mut best_xi_idx = vec![0usize; k_rx];
    for (ai, &alpha) in grid.alpha.iter().enumerate() {
        let mut best_i: Vec<(f64, usize)> = vec![(-1.0, 0); k_rx];
        for (qi, &xi) in grid.xi.iter().enumerate() {
            let ats: Vec<Vec<Complex64>> = (0..k_tx)
                .map(|j| {
                    effective_steering(frontend, Side::Tx, j, None, SteeringParams::new(xi, alpha))
                })
                .collect::<Result<_>>()?;
            for i in 0..k_rx {
                let mut s = 0.0;
                for (j, at) in ats.iter().enumerate() {
                    counters.asagm_metric_evals += 1;
                    s += gain_metric(&data.blocks[i][j], &fixed[i][j], at);
                }
                if s > best_i[i].0 {
                    best_i[i] = (s, qi);
                }
            }
        }
        let total: f64 = best_i.iter().map(|(s, _)| s).sum();
        if total > best_total {
            best_total = total;
            best_alpha_idx = ai;
            for (i, (_, qi)) in best_i.iter().enumerate() {
                best_xi_idx[i] = *qi;
            }
        }
    }

    let mut candidate = state.clone();
    candidate.alpha_tx_idx = best_alpha_idx;
    candidate.alpha_tx = grid.alpha[best_alpha_idx];
    for i in 0..k_rx {
        candidate.xi_tx_idx[i] = best_xi_idx[i];
        candidate.xi_tx[i] = grid.xi[best_xi_idx[i]];
    }
    let obj = bilinear_objective(&candidate, data, frontend, counters)?;
    if !state.have_tx {
        candidate.have_tx = true;
        candidate.objective = obj;
        *state = candidate;
        return Ok(());
    }
    if obj >= state.objective {
        candidate.objective = obj;
        *state = candidate;
    }
    Ok(())
}

/// Result of the linear regression tying the auxiliary estimates to the
/// physical parameters.
#[derive(Debug, Clone, Copy)]
pub struct LinearFit {
    pub phi_rx: f64,
    pub phi_tx: f64,
    pub eta: f64,
    /// False when every centroid is zero (single subarrays on both sides), in
    /// which case eta is reported as 0.
    pub eta_identifiable: bool,
}

/// Least-squares fit of (phi_r, phi_t, eta) to the auxiliary estimates under
/// the constraints xi_r,j = phi_r - s eta nu_t,j and
/// xi_t,i = phi_t + s eta nu_r,i, where `eta_scale` = s is 1 by default (set
/// it to the element spacing for the alternative constraint convention).
///
/// With centered centroids the solution decouples into means and a scalar
/// ratio; a generic 3x3 normal-equation solve guards non-centered layouts.
pub fn fit_linear_params(
    xi_rx: &[f64],
    xi_tx: &[f64],
    nu_rx: &[f64],
    nu_tx: &[f64],
    eta_scale: f64,
) -> LinearFit {
    assert_eq!(xi_rx.len(), nu_tx.len(), "one xi_r per transmit subarray");
    assert_eq!(xi_tx.len(), nu_rx.len(), "one xi_t per receive subarray");
    let s = eta_scale;
    let nu_sq: f64 =
        nu_rx.iter().map(|v| v * v).sum::<f64>() + nu_tx.iter().map(|v| v * v).sum::<f64>();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    if nu_sq == 0.0 {
        return LinearFit {
            phi_rx: mean(xi_rx),
            phi_tx: mean(xi_tx),
            eta: 0.0,
            eta_identifiable: false,
        };
    }
    let centered = {
        let scale = nu_rx.iter().chain(nu_tx).fold(0.0f64, |a, v| a.max(v.abs()));
        nu_rx.iter().sum::<f64>().abs() <= 1e-9 * scale
            && nu_tx.iter().sum::<f64>().abs() <= 1e-9 * scale
    };
    if centered {
        let num: f64 = nu_rx.iter().zip(xi_tx).map(|(nu, xi)| nu * xi).sum::<f64>()
            - nu_tx.iter().zip(xi_rx).map(|(nu, xi)| nu * xi).sum::<f64>();
        return LinearFit {
            phi_rx: mean(xi_rx),
            phi_tx: mean(xi_tx),
            eta: num / (s * nu_sq),
            eta_identifiable: true,
        };
    }
    // Generic 3x3 normal equations for x = (phi_r, phi_t, eta).
    let mut ata = [[0.0f64; 3]; 3];
    let mut atb = [0.0f64; 3];
    let mut add_row = |row: [f64; 3], y: f64| {
        for a in 0..3 {
            for b in 0..3 {
                ata[a][b] += row[a] * row[b];
            }
            atb[a] += row[a] * y;
        }
    };
    for (xi, nu) in xi_tx.iter().zip(nu_rx) {
        add_row([0.0, 1.0, s * nu], *xi);
    }
    for (xi, nu) in xi_rx.iter().zip(nu_tx) {
        add_row([1.0, 0.0, -s * nu], *xi);
    }
    match solve3(ata, atb) {
        Some(x) => LinearFit {
            phi_rx: x[0],
            phi_tx: x[1],
            eta: x[2],
            eta_identifiable: true,
        },
        None => LinearFit {
            phi_rx: mean(xi_rx),
            phi_tx: mean(xi_tx),
            eta: 0.0,
            eta_identifiable: false,
        },
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&p, &q| a[p][col].abs().total_cmp(&a[q][col].abs()))?;
        if a[piv][col].abs() < 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..3 {
            if row == col {
                continue;
            }
            let f = a[row][col] / a[col][col];
            for k in col..3 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

/// Scalar least-squares gain against the parabolic reconstruction:
/// g = <vec(W^H A F), vec(Y)> / ||vec(W^H A F)||^2.
pub fn fit_gain(
    y: &CMat,
    frontend: &HybridFrontend,
    phi_rx: f64,
    alpha_rx: f64,
    phi_tx: f64,
    alpha_tx: f64,
    eta: f64,
) -> Result<Complex64> {
    let a = parabolic_from_params(
        frontend.config(),
        SteeringParams::new(phi_rx, alpha_rx),
        SteeringParams::new(phi_tx, alpha_tx),
        eta,
        Complex64::ONE,
    );
    let m = frontend
        .combiner()
        .hermitian()
        .mul(&a.mul(&frontend.precoder()));
    let denom = m.frob_norm().powi(2);
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::ZeroRegressor);
    }
    Ok(cdot(m.as_vec(), y.as_vec()) / denom)
}

/// Full LoS estimate with its generating parameters and the recorded
/// objective trace (one entry per half-step once both sides have estimates).
#[derive(Debug, Clone)]
pub struct LosEstimate {
    pub phi_rx: f64,
    pub phi_tx: f64,
    pub alpha_rx: f64,
    pub alpha_tx: f64,
    pub eta: f64,
    pub eta_identifiable: bool,
    pub gain: Complex64,
    pub channel: CMat,
    pub state: AsagmState,
    pub objective_trace: Vec<f64>,
}

/// Run the whole LoS stage: whitening, `t_iter` alternating rounds, the
/// linear regression, and the gain fit. The returned channel satisfies the
/// reconstruction identity `channel = gain * a_r a_t^H (.) Lambda(eta)` by
/// construction.
pub fn estimate_los(
    y: &CMat,
    frontend: &HybridFrontend,
    grid_rx: &ParamGrid,
    grid_tx: &ParamGrid,
    t_iter: usize,
    eta_scale: f64,
    counters: &mut OpCounters,
) -> Result<LosEstimate> {
    if t_iter == 0 {
        return Err(Error::ConfigInvalid("t_iter must be at least 1".into()));
    }
    let cfg = frontend.config();
    let data = whiten_blocks(y, frontend)?;
    let mut state = AsagmState::new(cfg.k_rx, cfg.k_tx);
    let mut trace = Vec::with_capacity(2 * t_iter);
    for _ in 0..t_iter {
        asagm_receive_step(&mut state, &data, frontend, grid_rx, counters)?;
        if state.have_tx {
            trace.push(state.objective);
        }
        asagm_transmit_step(&mut state, &data, frontend, grid_tx, counters)?;
        trace.push(state.objective);
    }

    let nu_rx: Vec<f64> = (0..cfg.k_rx)
        .map(|i| cfg.subarray_centroid(Side::Rx, i))
        .collect::<Result<_>>()?;
    let nu_tx: Vec<f64> = (0..cfg.k_tx)
        .map(|j| cfg.subarray_centroid(Side::Tx, j))
        .collect::<Result<_>>()?;
    let fit = fit_linear_params(&state.xi_rx, &state.xi_tx, &nu_rx, &nu_tx, eta_scale);

    let gain = fit_gain(
        y,
        frontend,
        fit.phi_rx,
        state.alpha_rx,
        fit.phi_tx,
        state.alpha_tx,
        fit.eta,
    )?;
    let channel = parabolic_from_params(
        cfg,
        SteeringParams::new(fit.phi_rx, state.alpha_rx),
        SteeringParams::new(fit.phi_tx, state.alpha_tx),
        fit.eta,
        gain,
    );
    Ok(LosEstimate {
        phi_rx: fit.phi_rx,
        phi_tx: fit.phi_tx,
        alpha_rx: state.alpha_rx,
        alpha_tx: state.alpha_tx,
        eta: fit.eta,
        eta_identifiable: fit.eta_identifiable,
        gain,
        channel,
        state,
        objective_trace: trace,
    })
}
