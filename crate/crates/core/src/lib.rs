//! Simulation and estimation toolkit for near-field XL-MIMO channels with a
//! partially-connected hybrid frontend.
//!
//! The crate synthesizes ground-truth channels under four wavefront models
//! (non-uniform spherical, uniform spherical, parabolic, and subarray-wise
//! outer product), runs a two-stage estimator (alternating subarray-wise
//! array-gain maximization for the line-of-sight component, sensing-matrix
//! refinement OMP for the scattered component) alongside baseline estimators,
//! and drives Monte-Carlo NMSE experiments and near-field distance criteria.
//!
//! Module map:
//! - [`numerics`]: complex dense linear-algebra kernels (Cholesky, LS, vec/invec).
//! - [`geometry`]: array coordinates, distance models, validity-region criteria.
//! - [`channel`]: steering vectors, LoS/NLoS channel synthesis, scene sampling.
//! - [`frontend`]: block-diagonal analog combiner/precoder, reception, whitening.
//! - [`los`]: alternating subarray-wise array-gain maximization (LoS stage).
//! - [`nlos`]: polar dictionaries, SOMP/OMP, sensing-matrix refinement (NLoS stage).
//! - [`baselines`]: joint-dictionary OMP, genie-aided LS, genie-aided PE.
//! - [`harness`]: experiment configs, trials, sweeps, complexity accounting, CSV.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod frontend;
pub mod geometry;
pub mod harness;
pub mod los;
pub mod nlos;
pub mod numerics;

pub use error::{Error, Result};

use serde::{Deserialize, Serialize};

/// Instrumentation counters for the complexity growth-law checks. Each field
/// counts one kind of dominant inner-loop evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    /// Bilinear (or row-energy) array-gain metric evaluations in the LoS stage.
    pub asagm_metric_evals: u64,
    /// Side-dictionary column correlations in SOMP support detection.
    pub side_corr_evals: u64,
    /// Refined-dictionary column correlations in the final OMP.
    pub refined_corr_evals: u64,
    /// Joint-dictionary column correlations in the full OMP baseline.
    pub joint_corr_evals: u64,
    /// Residual-metric evaluations in the genie-aided parameter search.
    pub pe_metric_evals: u64,
}

impl OpCounters {
    pub fn total(&self) -> u64 {
        self.asagm_metric_evals
            + self.side_corr_evals
            + self.refined_corr_evals
            + self.joint_corr_evals
            + self.pe_metric_evals
    }
}
