//! Partially-connected hybrid combiner/precoder synthesis, pilot reception,
//! subarray slicing, and noise whitening.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{ArrayConfig, Side};
use crate::numerics::{cholesky_lower, solve_lower_mat, CMat};

/// Phase-shifter entry modulus convention.
///
/// `InvSqrtN` gives unit-norm beams (columns), so SNR = 1/sigma_w^2 keeps its
/// per-beam meaning; `InvN` is the literal printed constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModulusConvention {
    InvSqrtN,
    InvN,
}

impl Default for ModulusConvention {
    fn default() -> Self {
        ModulusConvention::InvSqrtN
    }
}

/// Block-diagonal analog combiner/precoder pair with per-subarray
/// constant-modulus blocks.
#[derive(Debug, Clone)]
pub struct HybridFrontend {
    config: ArrayConfig,
    combiner_blocks: Vec<CMat>,
    precoder_blocks: Vec<CMat>,
}

impl HybridFrontend {
    /// Assemble a frontend from explicit per-subarray blocks (all combiner
    /// blocks share one shape, likewise precoder blocks).
    pub fn from_blocks(
        config: ArrayConfig,
        combiner_blocks: Vec<CMat>,
        precoder_blocks: Vec<CMat>,
    ) -> Result<Self> {
        if combiner_blocks.len() != config.k_rx || precoder_blocks.len() != config.k_tx {
            return Err(Error::ConfigInvalid("one block per subarray required".into()));
        }
        let ok = |blocks: &[CMat], n_sub: usize| {
            blocks
                .iter()
                .all(|b| b.rows() == n_sub && b.cols() == blocks[0].cols())
        };
        if !ok(&combiner_blocks, config.n_sub(Side::Rx))
            || !ok(&precoder_blocks, config.n_sub(Side::Tx))
        {
            return Err(Error::DimensionMismatch("frontend block shapes".into()));
        }
        Ok(Self {
            config,
            combiner_blocks,
            precoder_blocks,
        })
    }

    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    /// Total receive beams M_r.
    pub fn m_rx(&self) -> usize {
        self.combiner_blocks.iter().map(|b| b.cols()).sum()
    }

    /// Total transmit beams M_t.
    pub fn m_tx(&self) -> usize {
        self.precoder_blocks.iter().map(|b| b.cols()).sum()
    }

    pub fn m_rx_sub(&self) -> usize {
        self.combiner_blocks[0].cols()
    }

    pub fn m_tx_sub(&self) -> usize {
        self.precoder_blocks[0].cols()
    }

    pub fn combiner_block(&self, i: usize) -> &CMat {
        &self.combiner_blocks[i]
    }

    pub fn precoder_block(&self, j: usize) -> &CMat {
        &self.precoder_blocks[j]
    }

    /// Assembled block-diagonal combiner W (N_r x M_r).
    pub fn combiner(&self) -> CMat {
        assemble_blkdiag(&self.combiner_blocks)
    }

    /// Assembled block-diagonal precoder F (N_t x M_t).
    pub fn precoder(&self) -> CMat {
        assemble_blkdiag(&self.precoder_blocks)
    }

    /// Block-diagonal lower-triangular whitener for the full observation:
    /// each diagonal block is the Cholesky factor of W_i^H W_i, so
    /// K = sigma_w^2 L L^H.
    pub fn full_whitener(&self) -> Result<CMat> {
        let blocks: Vec<CMat> = self
            .combiner_blocks
            .iter()
            .map(|w| cholesky_lower(&w.hermitian().mul(w)))
            .collect::<Result<_>>()?;
        Ok(assemble_blkdiag(&blocks))
    }
}

fn assemble_blkdiag(blocks: &[CMat]) -> CMat {
    let rows: usize = blocks.iter().map(|b| b.rows()).sum();
    let cols: usize = blocks.iter().map(|b| b.cols()).sum();
    let mut m = CMat::zeros(rows, cols);
    let (mut r0, mut c0) = (0, 0);
    for b in blocks {
        m.set_block(r0, c0, b);
        r0 += b.rows();
        c0 += b.cols();
    }
    m
}

/// Draw a random constant-modulus frontend: every block entry has the
/// convention modulus and an i.i.d. uniform phase.
pub fn build_frontend(
    config: &ArrayConfig,
    rng: &mut impl Rng,
    m_rx_per_sub: usize,
    m_tx_per_sub: usize,
    convention: ModulusConvention,
) -> Result<HybridFrontend> {
    if m_rx_per_sub == 0 || m_tx_per_sub == 0 {
        return Err(Error::ConfigInvalid(
            "need at least one beam per subarray".into(),
        ));
    }
    let modulus = |n_sub: usize| match convention {
        ModulusConvention::InvSqrtN => 1.0 / (n_sub as f64).sqrt(),
        ModulusConvention::InvN => 1.0 / n_sub as f64,
    };
    let mut random_block = |n_sub: usize, m_sub: usize| {
        let a = modulus(n_sub);
        CMat::from_fn(n_sub, m_sub, |_, _| {
            Complex64::from_polar(a, rng.random_range(0.0..2.0 * std::f64::consts::PI))
        })
    };
    let combiner_blocks = (0..config.k_rx)
        .map(|_| random_block(config.n_sub(Side::Rx), m_rx_per_sub))
        .collect();
    let precoder_blocks = (0..config.k_tx)
        .map(|_| random_block(config.n_sub(Side::Tx), m_tx_per_sub))
        .collect();
    Ok(HybridFrontend {
        config: *config,
        combiner_blocks,
        precoder_blocks,
    })
}

/// Y = W^H H F + W^H N with a caller-supplied noise matrix N (N_r x M_t).
pub fn receive_with_noise(frontend: &HybridFrontend, h: &CMat, noise: &CMat) -> Result<CMat> {
    let cfg = frontend.config();
    if h.rows() != cfg.n_rx || h.cols() != cfg.n_tx {
        return Err(Error::DimensionMismatch(format!(
            "channel is {}x{}, array is {}x{}",
            h.rows(),
            h.cols(),
            cfg.n_rx,
            cfg.n_tx
        )));
    }
    if noise.rows() != cfg.n_rx || noise.cols() != frontend.m_tx() {
        return Err(Error::DimensionMismatch("noise matrix shape".into()));
    }
    let w_h = frontend.combiner().hermitian();
    Ok(w_h.mul(&h.mul(&frontend.precoder()).add(noise)))
}

/// Y = W^H H F + W^H N with i.i.d. complex-normal noise of the given
/// per-entry variance.
pub fn receive(
    frontend: &HybridFrontend,
    h: &CMat,
    rng: &mut impl Rng,
    noise_var: f64,
) -> Result<CMat> {
    let cfg = frontend.config();
    let noise = if noise_var > 0.0 {
        let s = (noise_var / 2.0).sqrt();
        CMat::from_fn(cfg.n_rx, frontend.m_tx(), |_, _| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re * s, im * s)
        })
    } else {
        CMat::zeros(cfg.n_rx, frontend.m_tx())
    };
    receive_with_noise(frontend, h, &noise)
}

/// The (i, j) subarray block of the observation: rows of receive subarray i,
/// columns of transmit subarray j.
pub fn subarray_block(y: &CMat, frontend: &HybridFrontend, i: usize, j: usize) -> Result<CMat> {
    let cfg = frontend.config();
    if i >= cfg.k_rx || j >= cfg.k_tx {
        return Err(Error::IndexOutOfRange(format!(
            "subarray block ({i}, {j}) of ({}, {})",
            cfg.k_rx, cfg.k_tx
        )));
    }
    let (mrs, mts) = (frontend.m_rx_sub(), frontend.m_tx_sub());
    Ok(y.block(i * mrs, j * mts, mrs, mts))
}

/// Whitened observation block together with the whitener that produced it.
#[derive(Debug, Clone)]
pub struct WhitenedObservation {
    pub data: CMat,
    /// Lower-triangular L with W^H W = L L^H (noise variance factored out).
    pub whitener: CMat,
    pub noise_var: f64,
}

/// Whiten one observation block against its combiner block: with
/// K = sigma_w^2 W^H W = sigma_w^2 L L^H, the whitened noise covariance is
/// sigma_w^2 I.
pub fn whiten(y_block: &CMat, combiner_block: &CMat, noise_var: f64) -> Result<WhitenedObservation> {
    if combiner_block.cols() != y_block.rows() {
        return Err(Error::DimensionMismatch(format!(
            "combiner has {} beams, block has {} rows",
            combiner_block.cols(),
            y_block.rows()
        )));
    }
    let gram = combiner_block.hermitian().mul(combiner_block);
    let l = cholesky_lower(&gram)?;
    let data = solve_lower_mat(&l, y_block);
    Ok(WhitenedObservation {
        data,
        whitener: l,
        noise_var,
    })
}
