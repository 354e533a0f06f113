//! Acceptance gate: one test per criterion, each printing a pass line with
//! the measured values. Tolerances are pinned in the assertions.

use num_complex::Complex64;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use xlmimo::baselines::joint_omp_details;
use xlmimo::channel::{los_channel, parabolic_from_params, LosModel, SceneConfig, SteeringParams};
use xlmimo::frontend::{build_frontend, receive, ModulusConvention};
use xlmimo::geometry::{
    fraunhofer_distance, lemma1_bound, lemma1_bruteforce, mimo_ard, parabolic_validity_distance,
    sopd, uniform_power_distance, ArrayConfig, PowerMode, SceneGeometry, Side,
};
use xlmimo::harness::{
    measure_growth, nmse, run_sweep, sweep_csv, ArraySpec, AsagmSpec, EstimatorKind,
    ExperimentConfig, FrontendSpec, NlosSpec, PeSpec, SweepAxis, SweepSpec,
};
use xlmimo::los::{estimate_los, ParamGrid};
use xlmimo::nlos::{build_polar_dictionary, estimate_nlos, StoppingRule};
use xlmimo::numerics::CMat;
use xlmimo::OpCounters;

fn paper_array() -> ArrayConfig {
    ArrayConfig::half_wavelength(128, 128, 4, 2, 60.0e9).unwrap()
}

fn pass(n: usize, name: &str, detail: &str) {
    println!("acceptance {n} ({name}): PASS [{detail}]");
}

#[test]
fn acceptance_01_distance_criteria_reproduce_reported_values() {
    // 256-element ULA at 60 GHz: Fraunhofer distance ~ 163 m.
    let lambda = 0.005;
    let fd = fraunhofer_distance(255.0 * lambda / 2.0, lambda);
    assert!((fd - 163.0).abs() <= 1.0, "FD {fd} not within 1 m of 163");

    let cfg = paper_array();
    let ard = mimo_ard(&cfg);
    assert!((ard - 80.6).abs() <= 0.1, "MIMO-ARD {ard} not within 0.1 of 80.6");

    let pd = parabolic_validity_distance(&cfg).unwrap();
    assert!(
        (pd - 4.5).abs() <= 0.15 * 4.5,
        "parabolic distance {pd} not within 15% of 4.5"
    );

    let upd_los = uniform_power_distance(&cfg, 0.9, PowerMode::Los).unwrap();
    assert!(
        (upd_los - 12.0).abs() <= 0.2 * 12.0,
        "LoS UPD {upd_los} not within 20% of 12"
    );
    let upd_nlos = uniform_power_distance(&cfg, 0.9, PowerMode::Nlos).unwrap();
    assert!(
        (upd_nlos - 6.0).abs() <= 0.2 * 6.0,
        "NLoS UPD {upd_nlos} not within 20% of 6"
    );
    pass(
        1,
        "distance criteria",
        &format!("fd {fd:.1}, ard {ard:.2}, parabolic {pd:.2}, upd {upd_los:.2}/{upd_nlos:.2}"),
    );
}

#[test]
fn acceptance_02_lemma1_brute_force_matches_bound_and_structure() {
    let cfg = paper_array();
    let mut details = String::new();
    for r in [50.0, 100.0, 200.0] {
        let rep = lemma1_bruteforce(&cfg, r, 64);
        let bound = lemma1_bound(&cfg, r);
        let ratio = rep.max_error_rad / bound;
        assert!(
            (ratio - 1.0).abs() <= 0.05,
            "R = {r}: brute force {:.4e} vs bound {bound:.4e} (ratio {ratio:.4})",
            rep.max_error_rad
        );
        assert!(
            rep.matches_expected_structure(&cfg, 0.2),
            "R = {r}: argmax structure mismatch: {rep:?}"
        );
        details.push_str(&format!("R{r}:{ratio:.4} "));
    }
    // Beyond the SOPD the worst error stays below pi/8 with 10% slack for the
    // higher-order remainder.
    let threshold = std::f64::consts::PI / 8.0 * 1.1;
    for r in [sopd(&cfg), 2.0 * sopd(&cfg)] {
        let rep = lemma1_bruteforce(&cfg, r, 48);
        assert!(
            rep.max_error_rad <= threshold,
            "R = {r}: error {:.4e} above pi/8 + slack",
            rep.max_error_rad
        );
    }
    pass(2, "lemma-1 verification", details.trim());
}

#[test]
fn acceptance_03_model_degeneracy() {
    // Single-antenna subarrays collapse the subarray model onto the
    // parabolic one.
    let cfg = ArrayConfig::half_wavelength(64, 64, 64, 64, 60.0e9).unwrap();
    let geom = SceneGeometry::new(15.0, 0.7, -0.4, 0.35, Complex64::new(0.8, -0.2));
    let sopm = los_channel(&cfg, &geom, LosModel::Sopm);
    let para = los_channel(&cfg, &geom, LosModel::Parabolic);
    let rel = sopm.sub(&para).frob_norm() / para.frob_norm();
    assert!(rel <= 1e-12, "SOPM vs parabolic at K = N: {rel:.3e}");

    // Every subarray block of the SOPM channel is rank one to machine
    // precision (all 2x2 minors vanish relative to the entry scale).
    let cfg = paper_array();
    let h = los_channel(&cfg, &geom, LosModel::Sopm);
    let (n_rs, n_ts) = (32, 64);
    let scale = geom.los_gain.norm_sqr();
    let mut worst: f64 = 0.0;
    for bi in 0..4 {
        for bj in 0..2 {
            let blk = h.block(bi * n_rs, bj * n_ts, n_rs, n_ts);
            for r in 1..n_rs {
                for c in 1..n_ts {
                    let minor = blk[(0, 0)] * blk[(r, c)] - blk[(r, 0)] * blk[(0, c)];
                    worst = worst.max(minor.norm() / scale);
                }
            }
        }
    }
    assert!(worst < 1e-12, "largest relative 2x2 minor {worst:.3e}");
    pass(
        3,
        "model degeneracy",
        &format!("K=N gap {rel:.2e}, worst minor {worst:.2e}"),
    );
}

#[test]
fn acceptance_04_noiseless_on_grid_exactness() {
    // Desk-scale array and frontend.
    let cfg = ArrayConfig::half_wavelength(64, 64, 4, 2, 60.0e9).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let fe = build_frontend(&cfg, &mut rng, 8, 16, ModulusConvention::InvSqrtN).unwrap();
    let grid_rx = ParamGrid::receive(321, 5, 10.0).unwrap();
    let grid_tx = ParamGrid::transmit(321, 5, 10.0).unwrap();

    // (a) eta = 0 on-grid truth: the subarray model coincides with the
    // parabolic one, so every stage is exact.
    let (qr, ar_idx, qt, at_idx) = (101usize, 2usize, 222usize, 3usize);
    let g0 = Complex64::new(0.65, -0.55);
    let truth = parabolic_from_params(
        &cfg,
        SteeringParams::new(grid_rx.xi[qr], grid_rx.alpha[ar_idx]),
        SteeringParams::new(grid_tx.xi[qt], grid_tx.alpha[at_idx]),
        0.0,
        g0,
    );
    let y = receive(&fe, &truth, &mut rng, 0.0).unwrap();
    let mut counters = OpCounters::default();
    let est = estimate_los(&y, &fe, &grid_rx, &grid_tx, 3, 1.0, &mut counters).unwrap();
    assert_eq!(est.state.xi_rx_idx, vec![qr; 2], "xi_r grid indices");
    assert_eq!(est.state.xi_tx_idx, vec![qt; 4], "xi_t grid indices");
    assert_eq!(est.state.alpha_rx_idx, ar_idx);
    assert_eq!(est.state.alpha_tx_idx, at_idx);
    let los_nmse = nmse(&est.channel, &truth).unwrap();
    assert!(los_nmse < 1e-12, "LoS reconstruction NMSE {los_nmse:.3e}");

    // (b) consistent on-grid truth with nonzero coupling: all auxiliary grid
    // indices and the regressed parameters are recovered exactly.
    let step = grid_rx.xi[1] - grid_rx.xi[0];
    let nu_r_base = 16.0 * cfg.spacing / 2.0; // 0.02 m
    let eta = step / nu_r_base;
    let (phi_r_idx, phi_t_idx) = (160usize, 150usize);
    let phi_r = grid_rx.xi[phi_r_idx];
    let phi_t = grid_tx.xi[phi_t_idx];
    let (alpha_r, alpha_t) = (grid_rx.alpha[1], grid_tx.alpha[2]);
    // xi_r,j = phi_r -/+ 2 steps; xi_t,i = phi_t -/+ {3, 1} steps.
    let mut h = CMat::zeros(64, 64);
    for i in 0..4usize {
        let nu_r = cfg.subarray_centroid(Side::Rx, i).unwrap();
        for j in 0..2usize {
            let nu_t = cfg.subarray_centroid(Side::Tx, j).unwrap();
            let xi_r = phi_r - eta * nu_t;
            let xi_t = phi_t + eta * nu_r;
            let g_blk = g0 * Complex64::from_polar(
                1.0,
                -2.0 * std::f64::consts::PI / cfg.wavelength() * eta * nu_r * nu_t,
            );
            let block = parabolic_from_params(
                &cfg,
                SteeringParams::new(xi_r, alpha_r),
                SteeringParams::new(xi_t, alpha_t),
                0.0,
                g_blk,
            );
            h.set_block(i * 16, j * 32, &block.block(i * 16, j * 32, 16, 32));
        }
    }
    let y = receive(&fe, &h, &mut rng, 0.0).unwrap();
    let mut counters = OpCounters::default();
    let est = estimate_los(&y, &fe, &grid_rx, &grid_tx, 3, 1.0, &mut counters).unwrap();
    assert_eq!(
        est.state.xi_rx_idx,
        vec![phi_r_idx + 2, phi_r_idx - 2],
        "coupled xi_r indices"
    );
    assert_eq!(
        est.state.xi_tx_idx,
        vec![phi_t_idx - 3, phi_t_idx - 1, phi_t_idx + 1, phi_t_idx + 3],
        "coupled xi_t indices"
    );
    assert_eq!(est.state.alpha_rx_idx, 1);
    assert_eq!(est.state.alpha_tx_idx, 2);
    assert!((est.phi_rx - phi_r).abs() < 1e-9);
    assert!((est.phi_tx - phi_t).abs() < 1e-9);
    assert!((est.eta - eta).abs() < 1e-9 * eta.abs());

    // (c) scattered component synthesized from dictionary columns recovers
    // exactly through SMR-OMP. The 2 m minimum range keeps the curvature
    // atoms well separated for a 128-element aperture.
    let paper = paper_array();
    let fe128 = build_frontend(&paper, &mut rng, 16, 32, ModulusConvention::InvSqrtN).unwrap();
    let dict_rx = build_polar_dictionary(&paper, Side::Rx, 64, 3, 2.0).unwrap();
    let dict_tx = build_polar_dictionary(&paper, Side::Tx, 64, 3, 2.0).unwrap();
    // Well separated (angle, curvature) picks.
    let (c1, c2) = (10 * 3 + 2, 40 * 3 + 1);
    let (d1, d2) = (50 * 3, 20 * 3 + 2);
    let truth = CMat::outer(dict_rx.columns.col(c1), dict_tx.columns.col(d1))
        .scale(Complex64::new(0.9, -0.3))
        .add(&CMat::outer(dict_rx.columns.col(c2), dict_tx.columns.col(d2))
            .scale(Complex64::new(-0.5, 0.6)));
    let y = receive(&fe128, &truth, &mut rng, 0.0).unwrap();
    let mut counters = OpCounters::default();
    let est = estimate_nlos(
        &y,
        &fe128,
        None,
        &dict_rx,
        &dict_tx,
        2,
        2,
        StoppingRule::FixedSparsity,
        0.0,
        &mut counters,
    )
    .unwrap();
    let smr_nmse = nmse(&est.channel, &truth).unwrap();
    assert!(smr_nmse < 1e-12, "SMR reconstruction NMSE {smr_nmse:.3e}");
    pass(
        4,
        "noiseless on-grid exactness",
        &format!("los {los_nmse:.2e}, smr {smr_nmse:.2e}"),
    );
}

#[test]
fn acceptance_05_smr_equals_joint_omp_under_containment() {
    // Random 2-sparse on-grid instances: distinct dictionary atoms per side,
    // random-phase gains with non-degenerate magnitudes, SNR 20 dB.
    let cfg = ArrayConfig::half_wavelength(16, 16, 4, 2, 60.0e9).unwrap();
    let dict_rx = build_polar_dictionary(&cfg, Side::Rx, 32, 1, 5.0).unwrap();
    let dict_tx = build_polar_dictionary(&cfg, Side::Tx, 32, 1, 5.0).unwrap();
    let noise_var = 0.01; // SNR 20 dB
    let mut contained = 0usize;
    let mut equal = 0usize;
    for trial in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let a1 = rng.random_range(1..31usize);
        let a2 = (a1 + rng.random_range(4..27usize)) % 30 + 1;
        let b1 = rng.random_range(1..31usize);
        let b2 = (b1 + rng.random_range(4..27usize)) % 30 + 1;
        let mut gain = |r: &mut ChaCha8Rng| {
            Complex64::from_polar(
                r.random_range(0.5..1.5),
                r.random_range(0.0..2.0 * std::f64::consts::PI),
            )
        };
        let truth = CMat::outer(dict_rx.columns.col(a1), dict_tx.columns.col(b1))
            .scale(gain(&mut rng))
            .add(
                &CMat::outer(dict_rx.columns.col(a2), dict_tx.columns.col(b2))
                    .scale(gain(&mut rng)),
            );
        let fe = build_frontend(&cfg, &mut rng, 4, 8, ModulusConvention::InvSqrtN).unwrap();
        let y = receive(&fe, &truth, &mut rng, noise_var).unwrap();
        let mut c1 = OpCounters::default();
        let mut c2 = OpCounters::default();
        let joint = joint_omp_details(&y, &fe, &dict_rx, &dict_tx, 2, &mut c1).unwrap();
        let smr = estimate_nlos(
            &y,
            &fe,
            None,
            &dict_rx,
            &dict_tx,
            2,
            2,
            StoppingRule::FixedSparsity,
            noise_var,
            &mut c2,
        )
        .unwrap();
        let covers = joint
            .support
            .iter()
            .all(|(a, b)| smr.support_rx.contains(a) && smr.support_tx.contains(b));
        if covers {
            contained += 1;
            assert_eq!(
                joint.channel, smr.channel,
                "trial {trial}: containment held but outputs differ"
            );
            equal += 1;
        }
    }
    assert!(
        contained >= 90,
        "containment rate {contained}/100 below 90%"
    );
    pass(
        5,
        "oracle equivalence",
        &format!("containment {contained}/100, exact matches {equal}"),
    );
}

#[test]
fn acceptance_06_asagm_objective_monotone_over_1000_trials() {
    let cfg = ArrayConfig::half_wavelength(16, 16, 4, 2, 60.0e9).unwrap();
    let grid_rx = ParamGrid::receive(33, 3, 10.0).unwrap();
    let grid_tx = ParamGrid::transmit(33, 3, 10.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut half_steps = 0usize;
    for trial in 0..1000 {
        let fe = build_frontend(&cfg, &mut rng, 2, 4, ModulusConvention::InvSqrtN).unwrap();
        let h = CMat::from_fn(16, 16, |_, _| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let noise_var = rng.random_range(0.01..2.0);
        let y = receive(&fe, &h, &mut rng, noise_var).unwrap();
        let mut counters = OpCounters::default();
        let est = estimate_los(&y, &fe, &grid_rx, &grid_tx, 3, 1.0, &mut counters).unwrap();
        for w in est.objective_trace.windows(2) {
            assert!(
                w[1] >= w[0],
                "trial {trial}: objective decreased ({} -> {})",
                w[0],
                w[1]
            );
            half_steps += 1;
        }
    }
    pass(
        6,
        "asagm monotonicity",
        &format!("{half_steps} half-step transitions, zero violations"),
    );
}

fn fig5_config() -> ExperimentConfig {
    ExperimentConfig {
        array: ArraySpec {
            n_rx: 64,
            n_tx: 64,
            k_rx: 4,
            k_tx: 2,
            carrier_freq_hz: 60.0e9,
            spacing_m: None,
        },
        frontend: FrontendSpec {
            m_rx: 32,
            m_tx: 32,
            modulus: ModulusConvention::InvSqrtN,
        },
        scene: SceneConfig {
            r_min_m: 90.0,
            r_max_m: 100.0,
            ..SceneConfig::default()
        },
        estimators: vec![
            EstimatorKind::AsagmSmr,
            EstimatorKind::JointOmp,
            EstimatorKind::GenieLs,
        ],
        asagm: AsagmSpec {
            q_xi: 320,
            q_alpha: 7,
            t_iter: 3,
            ..AsagmSpec::default()
        },
        nlos: NlosSpec {
            q_angle: 128,
            q_curv: 7,
            ..NlosSpec::default()
        },
        sweep: SweepSpec {
            axis: SweepAxis::Snr,
            points: vec![-10.0, -5.0, 0.0, 5.0, 10.0, 15.0, 20.0],
            snr_db: 10.0,
            trials: 200,
            base_seed: 2025,
        },
        record_timing: false,
        ..ExperimentConfig::default()
    }
}

#[test]
fn acceptance_07_snr_sweep_ordering_and_monotonicity() {
    let cfg = fig5_config();
    let rows = run_sweep(&cfg).unwrap();
    let at = |point: f64, est: EstimatorKind| -> f64 {
        rows.iter()
            .find(|r| r.sweep_value == point && r.estimator == est)
            .expect("row present")
            .mean_nmse
    };
    // (a) proposed strictly decreasing in SNR.
    let proposed: Vec<f64> = cfg
        .sweep
        .points
        .iter()
        .map(|&p| at(p, EstimatorKind::AsagmSmr))
        .collect();
    for (i, w) in proposed.windows(2).enumerate() {
        assert!(
            w[1] < w[0],
            "proposed NMSE not strictly decreasing at point {}: {:?}",
            cfg.sweep.points[i + 1],
            proposed
        );
    }
    // (b) below the joint-OMP baseline at every point >= 5 dB.
    for &p in cfg.sweep.points.iter().filter(|&&p| p >= 5.0) {
        let (a, j) = (at(p, EstimatorKind::AsagmSmr), at(p, EstimatorKind::JointOmp));
        assert!(a < j, "at {p} dB proposed {a:.3e} >= joint OMP {j:.3e}");
    }
    // (c) above the genie floor everywhere.
    for &p in &cfg.sweep.points {
        let (a, g) = (at(p, EstimatorKind::AsagmSmr), at(p, EstimatorKind::GenieLs));
        assert!(a > g, "at {p} dB proposed {a:.3e} <= genie LS {g:.3e}");
    }
    let db: Vec<String> = proposed.iter().map(|v| format!("{:.1}", 10.0 * v.log10())).collect();
    pass(7, "snr sweep qualitative", &format!("proposed dB: {}", db.join(",")));
}

#[test]
fn acceptance_08_distance_sweep_flat_beyond_upd() {
    let mut cfg = fig5_config();
    cfg.estimators = vec![EstimatorKind::AsagmSmr];
    cfg.scene = SceneConfig::default();
    cfg.sweep = SweepSpec {
        axis: SweepAxis::Distance,
        points: vec![10.0, 20.0, 40.0, 60.0, 80.0, 100.0, 140.0, 200.0],
        snr_db: 10.0,
        trials: 200,
        base_seed: 808,
    };
    let rows = run_sweep(&cfg).unwrap();
    let at = |point: f64| -> f64 {
        10.0 * rows
            .iter()
            .find(|r| r.sweep_value == point)
            .unwrap()
            .mean_nmse
            .log10()
    };
    let reference = at(100.0);
    for &p in cfg.sweep.points.iter().filter(|&&p| p >= 20.0) {
        let v = at(p);
        assert!(
            v <= reference + 3.0,
            "NMSE at {p} m ({v:.2} dB) degrades more than 3 dB from 100 m ({reference:.2} dB)"
        );
    }
    let vals: Vec<String> = cfg.sweep.points.iter().map(|&p| format!("{:.1}", at(p))).collect();
    pass(8, "distance sweep qualitative", &format!("dB: {}", vals.join(",")));
}

#[test]
fn acceptance_09_complexity_growth_laws() {
    let m = measure_growth().unwrap();
    let asagm_ratio = m.asagm_2q as f64 / m.asagm_q as f64;
    assert!(
        (asagm_ratio - 2.0).abs() <= 0.1,
        "ASAGM count ratio {asagm_ratio} not 2x within 5%"
    );
    let side_ratio = m.side_2q as f64 / m.side_q as f64;
    assert!(
        (side_ratio - 2.0).abs() <= 0.1,
        "SMR side-correlation ratio {side_ratio} not 2x within 5%"
    );
    let joint_ratio = m.joint_2q as f64 / m.joint_q as f64;
    assert!(
        (joint_ratio - 4.0).abs() <= 0.4,
        "joint-OMP ratio {joint_ratio} not 4x within 10%"
    );
    pass(
        9,
        "complexity scaling",
        &format!("asagm x{asagm_ratio:.3}, side x{side_ratio:.3}, joint x{joint_ratio:.3}"),
    );
}

#[test]
fn acceptance_10_sweep_determinism() {
    let cfg = ExperimentConfig {
        array: ArraySpec {
            n_rx: 16,
            n_tx: 16,
            k_rx: 4,
            k_tx: 2,
            carrier_freq_hz: 60.0e9,
            spacing_m: None,
        },
        frontend: FrontendSpec {
            m_rx: 8,
            m_tx: 8,
            modulus: ModulusConvention::InvSqrtN,
        },
        estimators: vec![EstimatorKind::AsagmSmr, EstimatorKind::GenieLs],
        asagm: AsagmSpec {
            q_xi: 33,
            q_alpha: 3,
            t_iter: 2,
            ..AsagmSpec::default()
        },
        nlos: NlosSpec {
            q_angle: 16,
            q_curv: 2,
            ..NlosSpec::default()
        },
        pe: PeSpec {
            q_theta: 8,
            q_range: 8,
            neighborhood: 3,
        },
        sweep: SweepSpec {
            axis: SweepAxis::Snr,
            points: vec![0.0, 10.0],
            snr_db: 10.0,
            trials: 4,
            base_seed: 1010,
        },
        record_timing: false,
        threads: Some(1),
        ..ExperimentConfig::default()
    };
    // The only allowed difference between runs is the '#' timestamp header.
    let strip = |csv: String| -> String {
        csv.lines()
            .filter(|l| !l.starts_with('#'))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let a = strip(sweep_csv(&cfg, &run_sweep(&cfg).unwrap()));
    let b = strip(sweep_csv(&cfg, &run_sweep(&cfg).unwrap()));
    assert_eq!(a, b, "serial reruns differ");
    let mut cfg_par = cfg.clone();
    cfg_par.threads = Some(4);
    let c = strip(sweep_csv(&cfg_par, &run_sweep(&cfg_par).unwrap()));
    assert_eq!(a, c, "serial vs parallel differ");
    pass(10, "determinism", "byte-identical modulo timestamp header");
}
