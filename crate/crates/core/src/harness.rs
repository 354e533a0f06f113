//! Monte-Carlo experiment driver: config parsing, deterministic trials,
//! parameter sweeps, distance-criteria and complexity reports, CSV emission.
//!
//! Seeding is hierarchical: every trial derives independent scene, frontend,
//! and noise streams from (base_seed, trial_index) alone, so adding or
//! removing estimators never changes the sampled scenes, and sweep points
//! share common random numbers (the sweep value enters as a parameter, not as
//! a seed).

use std::time::Instant;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    genie_ls_estimate, genie_pe_estimate, joint_omp_estimate, GenieInfo, GeoGrid,
};
use crate::channel::SceneConfig;
use crate::error::{Error, Result};
use crate::frontend::{build_frontend, receive, HybridFrontend, ModulusConvention};
use crate::geometry::{
    fraunhofer_distance, lemma1_bound, lemma1_bruteforce, mimo_ard, parabolic_validity_distance,
    sopd, uniform_power_distance, ArrayConfig, PowerMode, Side,
};
use crate::los::{estimate_los, ParamGrid};
use crate::nlos::{build_polar_dictionary, estimate_nlos, PolarDictionary, StoppingRule};
use crate::numerics::CMat;
use crate::{channel, OpCounters};

/// Normalized mean square error ||est - truth||_F^2 / ||truth||_F^2.
pub fn nmse(estimate: &CMat, truth: &CMat) -> Result<f64> {
    if estimate.rows() != truth.rows() || estimate.cols() != truth.cols() {
        return Err(Error::DimensionMismatch("nmse operands".into()));
    }
    let denom = truth.frob_norm().powi(2);
    if denom == 0.0 {
        return Err(Error::ZeroTruth);
    }
    Ok(estimate.sub(truth).frob_norm().powi(2) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArraySpec {
    pub n_rx: usize,
    pub n_tx: usize,
    pub k_rx: usize,
    pub k_tx: usize,
    pub carrier_freq_hz: f64,
    /// Element spacing override; half-wavelength when absent.
    pub spacing_m: Option<f64>,
}

impl Default for ArraySpec {
    fn default() -> Self {
        Self {
            n_rx: 64,
            n_tx: 64,
            k_rx: 4,
            k_tx: 2,
            carrier_freq_hz: 60.0e9,
            spacing_m: None,
        }
    }
}

impl ArraySpec {
    pub fn to_config(&self) -> Result<ArrayConfig> {
        match self.spacing_m {
            Some(d) => ArrayConfig::new(
                self.n_rx,
                self.n_tx,
                self.k_rx,
                self.k_tx,
                self.carrier_freq_hz,
                d,
            ),
            None => ArrayConfig::half_wavelength(
                self.n_rx,
                self.n_tx,
                self.k_rx,
                self.k_tx,
                self.carrier_freq_hz,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendSpec {
    pub m_rx: usize,
    pub m_tx: usize,
    pub modulus: ModulusConvention,
}

impl Default for FrontendSpec {
    fn default() -> Self {
        Self {
            m_rx: 32,
            m_tx: 32,
            modulus: ModulusConvention::InvSqrtN,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    /// The two-stage pipeline: alternating array-gain maximization for the
    /// LoS part, sensing-matrix-refinement OMP for the NLoS part.
    AsagmSmr,
    /// OMP over the full joint polar dictionary, estimating LoS and NLoS
    /// together with sparsity L + 1.
    JointOmp,
    /// Least squares over the true path structure (performance floor).
    GenieLs,
    /// Geometric grid search restricted to the neighborhood of the truth,
    /// followed by joint OMP on the residual.
    GeniePe,
}

impl EstimatorKind {
    pub fn name(&self) -> &'static str {
        match self {
            EstimatorKind::AsagmSmr => "asagm_smr",
            EstimatorKind::JointOmp => "joint_omp",
            EstimatorKind::GenieLs => "genie_ls",
            EstimatorKind::GeniePe => "genie_pe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AsagmSpec {
    pub q_xi: usize,
    pub q_alpha: usize,
    pub t_iter: usize,
    /// Smallest range the curvature grid must cover.
    pub r_min_m: f64,
    /// Use the constraint convention with an extra element-spacing factor in
    /// the linear regression.
    pub spacing_constraint_factor: bool,
}

impl Default for AsagmSpec {
    fn default() -> Self {
        Self {
            q_xi: 320,
            q_alpha: 7,
            t_iter: 3,
            r_min_m: 10.0,
            spacing_constraint_factor: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NlosSpec {
    pub q_angle: usize,
    pub q_curv: usize,
    /// Smallest scatterer range the curvature grid must cover.
    pub r_min_m: f64,
    /// Assumed per-side sparsity; the true path count when absent.
    pub l_hat: Option<usize>,
    pub stopping: StoppingRule,
}

impl Default for NlosSpec {
    fn default() -> Self {
        Self {
            q_angle: 128,
            q_curv: 7,
            r_min_m: 5.0,
            l_hat: None,
            stopping: StoppingRule::FixedSparsity,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeSpec {
    pub q_theta: usize,
    pub q_range: usize,
    pub neighborhood: usize,
}

impl Default for PeSpec {
    fn default() -> Self {
        Self {
            q_theta: 64,
            q_range: 64,
            neighborhood: 5,
        }
    }
}

/// Parameters of the out-of-scope schemes that appear only in the analytical
/// complexity table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplexitySpec {
    pub t_grad: u64,
    pub q_eta: u64,
}

impl Default for ComplexitySpec {
    fn default() -> Self {
        Self {
            t_grad: 10,
            q_eta: 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Distance,
    Snr,
    Pilots,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub points: Vec<f64>,
    /// SNR in dB used when the sweep axis is not SNR itself.
    pub snr_db: f64,
    pub trials: usize,
    pub base_seed: u64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            axis: SweepAxis::Snr,
            points: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            snr_db: 10.0,
            trials: 100,
            base_seed: 7_240_821,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub array: ArraySpec,
    pub scene: SceneConfig,
    pub frontend: FrontendSpec,
    pub estimators: Vec<EstimatorKind>,
    pub asagm: AsagmSpec,
    pub nlos: NlosSpec,
    pub pe: PeSpec,
    pub complexity: ComplexitySpec,
    pub sweep: SweepSpec,
    /// Write measured wall times into the CSV; disable for byte-identical
    /// reruns.
    pub record_timing: bool,
    /// Worker threads; `XLMIMO_THREADS` or all cores when absent.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            array: ArraySpec::default(),
            scene: SceneConfig::default(),
            frontend: FrontendSpec::default(),
            estimators: vec![
                EstimatorKind::AsagmSmr,
                EstimatorKind::JointOmp,
                EstimatorKind::GenieLs,
                EstimatorKind::GeniePe,
            ],
            asagm: AsagmSpec::default(),
            nlos: NlosSpec::default(),
            pe: PeSpec::default(),
            complexity: ComplexitySpec::default(),
            sweep: SweepSpec::default(),
            record_timing: true,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults: everything halved from the headline setup so the
    /// joint-OMP baseline stays tractable.
    pub fn desk_scale() -> Self {
        Self::default()
    }

    /// Headline-scale setup: 128-antenna arrays, 64 beams, full grids. The
    /// joint-OMP baseline trips its column-evaluation guard at this scale.
    pub fn paper_scale() -> Self {
        Self {
            array: ArraySpec {
                n_rx: 128,
                n_tx: 128,
                k_rx: 4,
                k_tx: 2,
                carrier_freq_hz: 60.0e9,
                spacing_m: None,
            },
            frontend: FrontendSpec {
                m_rx: 64,
                m_tx: 64,
                modulus: ModulusConvention::InvSqrtN,
            },
            asagm: AsagmSpec {
                q_xi: 640,
                q_alpha: 7,
                ..AsagmSpec::default()
            },
            nlos: NlosSpec {
                q_angle: 256,
                q_curv: 7,
                ..NlosSpec::default()
            },
            pe: PeSpec {
                q_theta: 196,
                q_range: 256,
                neighborhood: 5,
            },
            ..Self::default()
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    fn l_hat(&self) -> usize {
        self.nlos.l_hat.unwrap_or(self.scene.num_paths)
    }

    fn thread_count(&self) -> usize {
        self.threads
            .or_else(|| {
                std::env::var("XLMIMO_THREADS")
                    .ok()
                    .and_then(|v| v.parse().ok())
            })
            .unwrap_or(0) // rayon: 0 picks the default
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimatorOutcome {
    pub estimator: EstimatorKind,
    /// NaN when the estimator failed; see `error`.
    pub nmse: f64,
    pub error: Option<String>,
    pub wall_ms: f64,
    pub counters: OpCounters,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrialRecord {
    pub sweep_value: f64,
    pub trial_index: u64,
    pub outcomes: Vec<EstimatorOutcome>,
}

impl TrialRecord {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("record serializes")
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn stream(base: u64, trial: u64, role: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(splitmix(splitmix(splitmix(base) ^ trial) ^ role))
}

/// Run one trial: sample the scene, build the frontend, receive pilots, and
/// run every configured estimator. Deterministic given (base seed, sweep
/// value, trial index); estimator failures are recorded, not propagated.
pub fn run_trial(
    cfg: &ExperimentConfig,
    sweep_value: f64,
    trial_index: u64,
) -> Result<TrialRecord> {
    run_trial_inner(cfg, sweep_value, trial_index, false).map(|(rec, _)| rec)
}

/// Like [`run_trial`] but also returns the ASAGM objective trace when the
/// two-stage estimator is configured.
pub fn run_trial_with_trace(
    cfg: &ExperimentConfig,
    sweep_value: f64,
    trial_index: u64,
) -> Result<(TrialRecord, Option<Vec<f64>>)> {
    run_trial_inner(cfg, sweep_value, trial_index, true)
}

fn run_trial_inner(
    cfg: &ExperimentConfig,
    sweep_value: f64,
    trial_index: u64,
    want_trace: bool,
) -> Result<(TrialRecord, Option<Vec<f64>>)> {
    let array = cfg.array.to_config()?;

    let mut scene_cfg = cfg.scene.clone();
    let mut frontend_spec = cfg.frontend;
    let mut snr_db = cfg.sweep.snr_db;
    match cfg.sweep.axis {
        SweepAxis::Distance => {
            scene_cfg.r_min_m = sweep_value;
            scene_cfg.r_max_m = sweep_value;
        }
        SweepAxis::Snr => snr_db = sweep_value,
        SweepAxis::Pilots => {
            let m = sweep_value.round() as usize;
            frontend_spec.m_rx = m;
            frontend_spec.m_tx = m;
        }
    }
    if frontend_spec.m_rx % array.k_rx != 0 || frontend_spec.m_tx % array.k_tx != 0 {
        return Err(Error::ConfigInvalid(format!(
            "beam counts ({}, {}) must be divisible by the RF-chain counts ({}, {})",
            frontend_spec.m_rx, frontend_spec.m_tx, array.k_rx, array.k_tx
        )));
    }
    let noise_var = 10f64.powf(-snr_db / 10.0);

    let base = cfg.sweep.base_seed;
    let mut rng_scene = stream(base, trial_index, 1);
    let mut rng_frontend = stream(base, trial_index, 2);
    let mut rng_noise = stream(base, trial_index, 3);

    let pair = channel::sample_scene(&array, &mut rng_scene, &scene_cfg)?;
    let truth = pair.total();
    let fe = build_frontend(
        &array,
        &mut rng_frontend,
        frontend_spec.m_rx / array.k_rx,
        frontend_spec.m_tx / array.k_tx,
        frontend_spec.modulus,
    )?;
    let y = receive(&fe, &truth, &mut rng_noise, noise_var)?;

    let needs_dicts = cfg.estimators.iter().any(|e| {
        matches!(
            e,
            EstimatorKind::AsagmSmr | EstimatorKind::JointOmp | EstimatorKind::GeniePe
        )
    });
    let dicts = if needs_dicts {
        Some((
            build_polar_dictionary(
                &array,
                Side::Rx,
                cfg.nlos.q_angle,
                cfg.nlos.q_curv,
                cfg.nlos.r_min_m,
            )?,
            build_polar_dictionary(
                &array,
                Side::Tx,
                cfg.nlos.q_angle,
                cfg.nlos.q_curv,
                cfg.nlos.r_min_m,
            )?,
        ))
    } else {
        None
    };
    let l_hat = cfg.l_hat();

    let mut outcomes = Vec::with_capacity(cfg.estimators.len());
    let mut trace = None;
    for &estimator in &cfg.estimators {
        let mut counters = OpCounters::default();
        let t0 = Instant::now();
        let result = run_estimator(
            estimator,
            cfg,
            &fe,
            &y,
            &pair,
            dicts.as_ref(),
            l_hat,
            noise_var,
            &mut counters,
            if want_trace { Some(&mut trace) } else { None },
        );
        let wall_ms = t0.elapsed().as_secs_f64() * 1e3;
        let (value, error) = match result.and_then(|h| nmse(&h, &truth)) {
            Ok(v) => (v, None),
            Err(e) => (f64::NAN, Some(e.to_string())),
        };
        outcomes.push(EstimatorOutcome {
            estimator,
            nmse: value,
            error,
            wall_ms,
            counters,
        });
    }
    Ok((
        TrialRecord {
            sweep_value,
            trial_index,
            outcomes,
        },
        trace,
    ))
}

#[allow(clippy::too_many_arguments)]
fn run_estimator(
    estimator: EstimatorKind,
    cfg: &ExperimentConfig,
    fe: &HybridFrontend,
    y: &CMat,
    pair: &channel::ChannelPair,
    dicts: Option<&(PolarDictionary, PolarDictionary)>,
    l_hat: usize,
    noise_var: f64,
    counters: &mut OpCounters,
    trace_out: Option<&mut Option<Vec<f64>>>,
) -> Result<CMat> {
    let array = fe.config();
    match estimator {
        EstimatorKind::AsagmSmr => {
            let grid_rx = ParamGrid::receive(cfg.asagm.q_xi, cfg.asagm.q_alpha, cfg.asagm.r_min_m)?;
            let grid_tx =
                ParamGrid::transmit(cfg.asagm.q_xi, cfg.asagm.q_alpha, cfg.asagm.r_min_m)?;
            let eta_scale = if cfg.asagm.spacing_constraint_factor {
                array.spacing
            } else {
                1.0
            };
            let los = estimate_los(
                y,
                fe,
                &grid_rx,
                &grid_tx,
                cfg.asagm.t_iter,
                eta_scale,
                counters,
            )?;
            if let Some(out) = trace_out {
                *out = Some(los.objective_trace.clone());
            }
            let (dict_rx, dict_tx) = dicts.expect("dictionaries built for asagm_smr");
            let nlos = estimate_nlos(
                y,
                fe,
                Some(&los.channel),
                dict_rx,
                dict_tx,
                l_hat,
                l_hat,
                cfg.nlos.stopping,
                noise_var,
                counters,
            )?;
            Ok(los.channel.add(&nlos.channel))
        }
        EstimatorKind::JointOmp => {
            let (dict_rx, dict_tx) = dicts.expect("dictionaries built for joint_omp");
            joint_omp_estimate(y, fe, dict_rx, dict_tx, l_hat + 1, counters)
        }
        EstimatorKind::GenieLs => genie_ls_estimate(
            y,
            fe,
            GenieInfo {
                geom: &pair.truth_geom,
                paths: &pair.truth_paths,
            },
        ),
        EstimatorKind::GeniePe => {
            let deg = std::f64::consts::PI / 180.0;
            let grid = GeoGrid::uniform(
                cfg.pe.q_theta,
                cfg.pe.q_range,
                cfg.scene.angle_min_deg * deg,
                cfg.scene.angle_max_deg * deg,
                cfg.scene.r_min_m,
                cfg.scene.r_max_m,
            )?;
            let (dict_rx, dict_tx) = dicts.expect("dictionaries built for genie_pe");
            genie_pe_estimate(
                y,
                fe,
                &grid,
                GenieInfo {
                    geom: &pair.truth_geom,
                    paths: &pair.truth_paths,
                },
                cfg.pe.neighborhood,
                dict_rx,
                dict_tx,
                l_hat,
                counters,
            )
        }
    }
}

/// One aggregated CSV row.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub estimator: EstimatorKind,
    pub mean_nmse: f64,
    pub trials: usize,
    pub mean_time_ms: f64,
    pub mean_metric_evals: f64,
    pub errors: usize,
}

/// Run the configured sweep and aggregate per (point, estimator). Trials run
/// concurrently; the reduction is ordered by (point, trial), so serial and
/// parallel execution produce identical rows.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.thread_count())
        .build()
        .map_err(|e| Error::ConfigInvalid(format!("thread pool: {e}")))?;
    let tasks: Vec<(usize, u64)> = cfg
        .sweep
        .points
        .iter()
        .enumerate()
        .flat_map(|(pi, _)| (0..cfg.sweep.trials as u64).map(move |t| (pi, t)))
        .collect();
    let mut records: Vec<(usize, u64, TrialRecord)> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(pi, t)| {
                let rec = run_trial(cfg, cfg.sweep.points[pi], t)?;
                Ok((pi, t, rec))
            })
            .collect::<Result<Vec<_>>>()
    })?;
    records.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

    let mut rows = Vec::new();
    for (pi, &point) in cfg.sweep.points.iter().enumerate() {
        for (ei, &estimator) in cfg.estimators.iter().enumerate() {
            let mut sum = 0.0;
            let mut ok = 0usize;
            let mut errors = 0usize;
            let mut time_sum = 0.0;
            let mut eval_sum = 0.0;
            for (_, _, rec) in records.iter().filter(|(p, _, _)| *p == pi) {
                let outcome = &rec.outcomes[ei];
                if outcome.nmse.is_nan() {
                    errors += 1;
                } else {
                    sum += outcome.nmse;
                    ok += 1;
                }
                time_sum += outcome.wall_ms;
                eval_sum += outcome.counters.total() as f64;
            }
            let n_trials = cfg.sweep.trials.max(1);
            rows.push(SweepRow {
                sweep_value: point,
                estimator,
                mean_nmse: if ok > 0 { sum / ok as f64 } else { f64::NAN },
                trials: cfg.sweep.trials,
                mean_time_ms: time_sum / n_trials as f64,
                mean_metric_evals: eval_sum / n_trials as f64,
                errors,
            });
        }
    }
    Ok(rows)
}

/// Render sweep rows as the contract CSV: one `#` timestamp header line, then
/// the fixed column set.
pub fn sweep_csv(cfg: &ExperimentConfig, rows: &[SweepRow]) -> String {
    let mut out = String::new();
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    out.push_str(&format!("# generated at unix {stamp}\n"));
    out.push_str("sweep_value,estimator,mean_nmse,nmse_db,trials,mean_time_ms,metric_evals,errors\n");
    for r in rows {
        let db = 10.0 * r.mean_nmse.log10();
        let time = if cfg.record_timing { r.mean_time_ms } else { 0.0 };
        out.push_str(&format!(
            "{},{},{:.6e},{:.3},{},{:.3},{:.1},{}\n",
            r.sweep_value,
            r.estimator.name(),
            r.mean_nmse,
            db,
            r.trials,
            time,
            r.mean_metric_evals,
            r.errors
        ));
    }
    out
}

/// Distance-criteria CSV for one array configuration.
pub fn criteria_csv(config: &ArrayConfig, power_threshold: f64) -> Result<String> {
    let lambda = config.wavelength();
    let mut out = String::from("criterion,meters\n");
    out.push_str(&format!(
        "fraunhofer_rx,{:.4}\n",
        fraunhofer_distance(config.aperture(Side::Rx), lambda)
    ));
    out.push_str(&format!(
        "fraunhofer_tx,{:.4}\n",
        fraunhofer_distance(config.aperture(Side::Tx), lambda)
    ));
    out.push_str(&format!("mimo_ard,{:.4}\n", mimo_ard(config)));
    out.push_str(&format!("sopd,{:.4}\n", sopd(config)));
    out.push_str(&format!(
        "parabolic_distance,{:.4}\n",
        parabolic_validity_distance(config)?
    ));
    out.push_str(&format!(
        "upd_los,{:.4}\n",
        uniform_power_distance(config, power_threshold, PowerMode::Los)?
    ));
    out.push_str(&format!(
        "upd_nlos,{:.4}\n",
        uniform_power_distance(config, power_threshold, PowerMode::Nlos)?
    ));
    Ok(out)
}

/// Brute-force Lemma-1 style verification CSV over a list of ranges.
pub fn lemma1_csv(config: &ArrayConfig, ranges: &[f64], grid_density: usize) -> String {
    let mut out = String::from("range_m,bound_rad,bruteforce_rad,ratio,structure_ok\n");
    for &r in ranges {
        let rep = lemma1_bruteforce(config, r, grid_density);
        let bound = lemma1_bound(config, r);
        out.push_str(&format!(
            "{},{:.6e},{:.6e},{:.4},{}\n",
            r,
            bound,
            rep.max_error_rad,
            rep.max_error_rad / bound,
            rep.matches_expected_structure(config, 0.2)
        ));
    }
    out
}

/// Analytical complexity figures plus measured counter growth ratios from
/// instrumented dry runs on a small probe setup.
pub fn complexity_csv(cfg: &ExperimentConfig) -> Result<String> {
    let m_r = cfg.frontend.m_rx as u64;
    let m_t = cfg.frontend.m_tx as u64;
    let (k_r, k_t) = (cfg.array.k_rx as u64, cfg.array.k_tx as u64);
    let (q_xi, q_alpha) = (cfg.asagm.q_xi as u64, cfg.asagm.q_alpha as u64);
    let q_d = (cfg.nlos.q_angle * cfg.nlos.q_curv) as u64;
    let (q_theta, q_range) = (cfg.pe.q_theta as u64, cfg.pe.q_range as u64);
    let l_hat = cfg.l_hat() as u64;
    let (n_r, n_t) = (cfg.array.n_rx as u64, cfg.array.n_tx as u64);
    let t_iter = cfg.asagm.t_iter as u64;

    let proposed_los = t_iter * (k_t * m_r * q_xi * q_alpha + k_r * m_t * q_xi * q_alpha);
    let pe_los = m_r * m_t * (q_theta.pow(3) * q_range + cfg.complexity.t_grad * n_r * n_t);
    let proposed_nlos = l_hat * m_r * m_t * (q_d + q_d);
    let omp_nlos = l_hat * m_r * m_t * q_d * q_d;
    let joint_cui = (l_hat + 1) * m_r * m_t * q_d * q_d;
    let joint_3s = (l_hat + 1) * cfg.complexity.q_eta * q_d * q_d * n_r.min(n_t);

    let mut out = String::from("metric,value\n");
    out.push_str(&format!("formula_proposed_los,{:.6e}\n", proposed_los as f64));
    out.push_str(&format!("formula_pe_los,{:.6e}\n", pe_los as f64));
    out.push_str(&format!("formula_proposed_nlos,{:.6e}\n", proposed_nlos as f64));
    out.push_str(&format!("formula_omp_nlos,{:.6e}\n", omp_nlos as f64));
    out.push_str(&format!("formula_joint_omp,{:.6e}\n", joint_cui as f64));
    out.push_str(&format!("formula_3s_mmv_uomp,{:.6e}\n", joint_3s as f64));

    let measured = measure_growth()?;
    out.push_str(&format!("measured_asagm_evals_q,{}\n", measured.asagm_q));
    out.push_str(&format!("measured_asagm_evals_2q,{}\n", measured.asagm_2q));
    out.push_str(&format!(
        "measured_asagm_ratio,{:.4}\n",
        measured.asagm_2q as f64 / measured.asagm_q as f64
    ));
    out.push_str(&format!("measured_smr_side_evals_q,{}\n", measured.side_q));
    out.push_str(&format!("measured_smr_side_evals_2q,{}\n", measured.side_2q));
    out.push_str(&format!(
        "measured_smr_side_ratio,{:.4}\n",
        measured.side_2q as f64 / measured.side_q as f64
    ));
    out.push_str(&format!("measured_joint_evals_q,{}\n", measured.joint_q));
    out.push_str(&format!("measured_joint_evals_2q,{}\n", measured.joint_2q));
    out.push_str(&format!(
        "measured_joint_ratio,{:.4}\n",
        measured.joint_2q as f64 / measured.joint_q as f64
    ));
    Ok(out)
}

/// Measured counters at grid size Q and 2Q on the probe setup.
pub struct GrowthMeasurement {
    pub asagm_q: u64,
    pub asagm_2q: u64,
    pub side_q: u64,
    pub side_2q: u64,
    pub joint_q: u64,
    pub joint_2q: u64,
}

/// Instrumented dry runs for the growth-law checks: one small scene, repeated
/// with a doubled ASAGM xi grid and a doubled dictionary angle grid.
pub fn measure_growth() -> Result<GrowthMeasurement> {
    let probe = ExperimentConfig {
        array: ArraySpec {
            n_rx: 32,
            n_tx: 32,
            k_rx: 4,
            k_tx: 2,
            carrier_freq_hz: 60.0e9,
            spacing_m: None,
        },
        frontend: FrontendSpec {
            m_rx: 16,
            m_tx: 16,
            modulus: ModulusConvention::InvSqrtN,
        },
        asagm: AsagmSpec {
            q_xi: 64,
            q_alpha: 3,
            t_iter: 2,
            ..AsagmSpec::default()
        },
        nlos: NlosSpec {
            q_angle: 32,
            q_curv: 2,
            ..NlosSpec::default()
        },
        estimators: vec![EstimatorKind::AsagmSmr, EstimatorKind::JointOmp],
        sweep: SweepSpec {
            trials: 1,
            points: vec![10.0],
            ..SweepSpec::default()
        },
        ..ExperimentConfig::default()
    };
    let run = |c: &ExperimentConfig| -> Result<OpCounters> {
        let rec = run_trial(c, 10.0, 0)?;
        let mut total = OpCounters::default();
        for o in &rec.outcomes {
            total.asagm_metric_evals += o.counters.asagm_metric_evals;
            total.side_corr_evals += o.counters.side_corr_evals;
            total.refined_corr_evals += o.counters.refined_corr_evals;
            total.joint_corr_evals += o.counters.joint_corr_evals;
            total.pe_metric_evals += o.counters.pe_metric_evals;
        }
        Ok(total)
    };
    let base = run(&probe)?;
    let mut asagm2 = probe.clone();
    asagm2.asagm.q_xi *= 2;
    let with_2qxi = run(&asagm2)?;
    let mut dict2 = probe.clone();
    dict2.nlos.q_angle *= 2;
    let with_2qd = run(&dict2)?;
    Ok(GrowthMeasurement {
        asagm_q: base.asagm_metric_evals,
        asagm_2q: with_2qxi.asagm_metric_evals,
        side_q: base.side_corr_evals,
        side_2q: with_2qd.side_corr_evals,
        joint_q: base.joint_corr_evals,
        joint_2q: with_2qd.joint_corr_evals,
    })
}
