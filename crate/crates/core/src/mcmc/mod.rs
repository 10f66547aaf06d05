//! Blockwise adaptive random-walk Metropolis.
//!
//! Each block carries a Gaussian proposal `x' = x + sqrt(lambda) * L * e` where
//! `L L^T` is a covariance learned from warmup draws and `lambda` is tuned by
//! Robbins-Monro toward the target acceptance rate. Adaptation only happens
//! during warmup; the retained draws come from a fixed kernel.

pub mod diagnostics;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::stats::derive_seed_index;

pub use diagnostics::{diagnostics, ess, split_rhat, DiagnosticsReport, ParamDiagnostic};

/// An unnormalised log-density over `R^dim`.
pub trait Target: Sync {
    fn dim(&self) -> usize;

    fn log_density(&self, x: &[f64]) -> f64;

    /// Human-readable account of why `x` has zero density, for error messages.
    fn explain(&self, _x: &[f64]) -> String {
        String::new()
    }
}

/// Wraps a closure as a [`Target`].
pub struct FnTarget<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Sync> FnTarget<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Target for FnTarget<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_warmup: usize,
    /// Post-warmup iterations, before thinning.
    pub n_iter: usize,
    pub thin: usize,
    /// Index sets updated jointly; `None` means one block holding every coordinate.
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Initial proposal sd per coordinate.
    pub initial_scales: Option<Vec<f64>>,
    pub target_acceptance: f64,
    pub adapt: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_warmup: 1000,
            n_iter: 1000,
            thin: 1,
            blocks: None,
            initial_scales: None,
            target_acceptance: 0.3,
            adapt: true,
        }
    }
}

impl SamplerConfig {
    pub fn with_iterations(n_warmup: usize, n_iter: usize) -> Self {
        Self {
            n_warmup,
            n_iter,
            ..Self::default()
        }
    }
}

/// Snapshot of a block's tuning at the end of an adaptation window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptationStep {
    pub iteration: usize,
    pub block: usize,
    pub log_scale: f64,
    pub window_acceptance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorChain {
    pub draws: Vec<Vec<f64>>,
    pub log_posterior: Vec<f64>,
    pub seed: u64,
    pub n_warmup: usize,
    pub n_iter: usize,
    pub thin: usize,
    /// Post-warmup acceptance rate per block.
    pub acceptance: Vec<f64>,
    pub adaptation: Vec<AdaptationStep>,
}

impl PosteriorChain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    /// Values of coordinate `i` across retained draws.
    pub fn column(&self, i: usize) -> Vec<f64> {
        self.draws.iter().map(|d| d[i]).collect()
    }
}

struct BlockState {
    idx: Vec<usize>,
    chol: Vec<f64>,
    log_lambda: f64,
    // Welford accumulators for the current window
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
    accepted: usize,
    proposed: usize,
    rm_step: usize,
}

impl BlockState {
    fn new(idx: Vec<usize>, scales: &[f64]) -> Self {
        let d = idx.len();
        let mut chol = vec![0.0; d * d];
        for (k, &i) in idx.iter().enumerate() {
            chol[k * d + k] = scales[i];
        }
        Self {
            idx,
            chol,
            log_lambda: 0.0,
            n: 0,
            mean: vec![0.0; d],
            m2: vec![0.0; d * d],
            accepted: 0,
            proposed: 0,
            rm_step: 0,
        }
    }

    fn dim(&self) -> usize {
        self.idx.len()
    }

    fn observe(&mut self, x: &[f64]) {
        let d = self.dim();
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = (0..d).map(|k| x[self.idx[k]] - self.mean[k]).collect();
        for k in 0..d {
            self.mean[k] += delta[k] / n;
        }
        for r in 0..d {
            let after = x[self.idx[r]] - self.mean[r];
            for c in 0..d {
                self.m2[r * d + c] += delta[c] * after;
            }
        }
    }

    /// Replaces the proposal shape with the regularised window covariance.
    fn end_window(&mut self) {
        let d = self.dim();
        if self.n >= 10 {
            let n = self.n as f64;
            let shrink = n / (n + 5.0);
            let mut cov = vec![0.0; d * d];
            for r in 0..d {
                for c in 0..d {
                    let v = 0.5 * (self.m2[r * d + c] + self.m2[c * d + r]) / (n - 1.0);
                    cov[r * d + c] = shrink * v;
                }
                cov[r * d + r] += 1e-3 * 5.0 / (n + 5.0) * cov[r * d + r].abs().max(1e-12) + 1e-12;
            }
            if let Some(l) = cholesky(&cov, d) {
                self.chol = l;
                self.log_lambda = (2.38f64 * 2.38 / d as f64).ln();
            }
        }
        self.n = 0;
        self.mean.iter_mut().for_each(|m| *m = 0.0);
        self.m2.iter_mut().for_each(|m| *m = 0.0);
        self.rm_step = 0;
    }
}

fn cholesky(a: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if !(s > 0.0) || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    Some(l)
}

/// Warmup layout: scale-only start, doubling covariance windows, scale-only end.
fn window_ends(n_warmup: usize) -> Vec<usize> {
    let start = (n_warmup * 15 / 100).max(1);
    let end = n_warmup - (n_warmup / 10);
    let mut ends = Vec::new();
    if end <= start + 20 {
        return ends;
    }
    let mut size = 25;
    let mut pos = start;
    while pos < end {
        let mut next = pos + size;
        if next + 2 * size > end {
            next = end;
        }
        ends.push(next);
        pos = next;
        size *= 2;
    }
    ends
}

/// Runs one chain from `init`.
///
/// Draws are reproducible from `seed`. An initial point with non-finite log-density
/// is rejected with an initialization error carrying the target's explanation.
pub fn run_chain<T: Target + ?Sized>(
    target: &T,
    init: &[f64],
    seed: u64,
    config: &SamplerConfig,
) -> Result<PosteriorChain> {
    let dim = target.dim();
    ensure!(
        init.len() == dim,
        Dimension,
        "initial point has {} coordinates, target has {dim}",
        init.len()
    );
    ensure!(config.n_iter > 0, Validation, "n_iter must be positive");
    ensure!(config.thin > 0, Validation, "thin must be positive");
    ensure!(
        config.target_acceptance > 0.0 && config.target_acceptance < 1.0,
        Validation,
        "target acceptance must lie in (0, 1)"
    );

    let scales = match &config.initial_scales {
        Some(s) => {
            ensure!(s.len() == dim, Dimension, "initial_scales length differs from dimension");
            s.clone()
        }
        None => vec![0.1; dim],
    };
    let block_sets = config.blocks.clone().unwrap_or_else(|| vec![(0..dim).collect()]);
    for b in &block_sets {
        ensure!(
            !b.is_empty() && b.iter().all(|&i| i < dim),
            Validation,
            "sampler blocks must be non-empty and index within the dimension"
        );
    }
    let mut blocks: Vec<BlockState> =
        block_sets.into_iter().map(|idx| BlockState::new(idx, &scales)).collect();

    let mut x = init.to_vec();
    let mut lp = target.log_density(&x);
    if !lp.is_finite() {
        let why = target.explain(&x);
        return Err(Error::Initialization(format!(
            "log-posterior at the initial point is {lp}{}{}",
            if why.is_empty() { "" } else { ": " },
            why
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let windows = if config.adapt { window_ends(config.n_warmup) } else { Vec::new() };
    let cov_start = (config.n_warmup * 15 / 100).max(1);
    let mut next_window = 0;
    let mut history = Vec::new();
    let total = config.n_warmup + config.n_iter;
    let mut draws = Vec::with_capacity(config.n_iter / config.thin + 1);
    let mut lps = Vec::with_capacity(config.n_iter / config.thin + 1);
    let mut proposal = x.clone();
    let mut noise = Vec::new();

    for it in 0..total {
        let warm = it < config.n_warmup;
        if it == config.n_warmup {
            for b in blocks.iter_mut() {
                b.accepted = 0;
                b.proposed = 0;
            }
        }
        for b in blocks.iter_mut() {
            let d = b.dim();
            noise.clear();
            noise.extend((0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
            let step = (0.5 * b.log_lambda).exp();
            proposal.copy_from_slice(&x);
            for r in 0..d {
                let mut s = 0.0;
                for c in 0..=r {
                    s += b.chol[r * d + c] * noise[c];
                }
                proposal[b.idx[r]] += step * s;
            }
            let lp_new = target.log_density(&proposal);
            let log_ratio = lp_new - lp;
            let accept_prob = if log_ratio.is_nan() { 0.0 } else { log_ratio.exp().min(1.0) };
            let u: f64 = rng.random();
            b.proposed += 1;
            if u < accept_prob {
                for &i in &b.idx {
                    x[i] = proposal[i];
                }
                lp = lp_new;
                b.accepted += 1;
            }
            if warm && config.adapt {
                b.rm_step += 1;
                let gain = (b.rm_step as f64).powf(-0.6);
                b.log_lambda += gain * (accept_prob - config.target_acceptance);
                if it >= cov_start {
                    b.observe(&x);
                }
            }
        }
        if warm && next_window < windows.len() && it + 1 == windows[next_window] {
            for (k, b) in blocks.iter_mut().enumerate() {
                history.push(AdaptationStep {
                    iteration: it + 1,
                    block: k,
                    log_scale: b.log_lambda,
                    window_acceptance: b.accepted as f64 / b.proposed.max(1) as f64,
                });
                b.end_window();
                b.accepted = 0;
                b.proposed = 0;
            }
            next_window += 1;
        }
        if !warm && (it - config.n_warmup) % config.thin == 0 {
            draws.push(x.clone());
            lps.push(lp);
        }
    }

    Ok(PosteriorChain {
        draws,
        log_posterior: lps,
        seed,
        n_warmup: config.n_warmup,
        n_iter: config.n_iter,
        thin: config.thin,
        acceptance: blocks
            .iter()
            .map(|b| b.accepted as f64 / b.proposed.max(1) as f64)
            .collect(),
        adaptation: history,
    })
}

/// Runs one chain per initial point in parallel. Chain `k` uses a seed derived
/// from `(seed, k)`, so results do not depend on thread scheduling.
pub fn run_chains<T: Target + ?Sized>(
    target: &T,
    inits: &[Vec<f64>],
    seed: u64,
    config: &SamplerConfig,
) -> Result<Vec<PosteriorChain>> {
    inits
        .par_iter()
        .enumerate()
        .map(|(k, init)| run_chain(target, init, derive_seed_index(seed, k as u64), config))
        .collect()
}
