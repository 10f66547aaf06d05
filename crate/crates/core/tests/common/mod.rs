//! Shared helpers for integration tests: straight-line oracles written
//! without the library's kernels, and model points at simulation truth.
#![allow(dead_code)]

use salmon_core::model::LifeHistoryModel;
use salmon_core::simulate::{SimulationDesign, SimulationTruth};

/// `1 / (alpha / O + beta)`, a different algebraic form of Beverton-Holt.
pub fn bh(o: f64, alpha: f64, beta: f64) -> f64 {
    if o == 0.0 {
        0.0
    } else {
        1.0 / (alpha / o + beta)
    }
}

pub fn survive(n: f64, f: f64, m: f64, eps: f64) -> f64 {
    n * (-f).exp() * (-m).exp() * eps
}

pub fn spawn(n: f64, l: f64, f: f64, m: f64, eps: f64) -> f64 {
    l * n * (-(f + m)).exp() * eps
}

pub fn eggs(s: &[f64], fec: &[f64], p: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..s.len() {
        total += s[i] * fec[i];
    }
    total * p
}

pub fn baranov(n: f64, f: f64, m: f64) -> f64 {
    let z = f + m;
    if z == 0.0 {
        return 0.0;
    }
    n * (f / z) * (1.0 - (-z).exp())
}

pub fn noise(sigma: f64, z: f64) -> f64 {
    (sigma * z - sigma * sigma / 2.0).exp()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Unconstrained point of `model` holding the simulation truth.
pub fn truth_point(model: &LifeHistoryModel, design: &SimulationDesign, truth: &SimulationTruth) -> Vec<f64> {
    let reg = model.registry();
    let spec = model.spec();
    let t0 = (spec.first_year - design.first_year) as usize;
    let delay = spec.ages.smolt_delay;
    let mut nat = vec![0.0; model.dim()];
    let set = |nat: &mut Vec<f64>, group: &str, values: &[f64]| {
        if let Ok(r) = reg.range(group) {
            assert_eq!(r.len(), values.len(), "group {group}");
            nat[r].copy_from_slice(values);
        }
    };
    let stock_idx: Vec<usize> = spec
        .stocks
        .iter()
        .map(|s| truth.stocks.iter().position(|n| *n == s.name).unwrap())
        .collect();
    set(&mut nat, "alpha", &stock_idx.iter().map(|&i| truth.alpha[i]).collect::<Vec<_>>());
    set(&mut nat, "beta", &stock_idx.iter().map(|&i| truth.beta[i]).collect::<Vec<_>>());
    let q: Vec<f64> = spec
        .fisheries
        .iter()
        .map(|f| truth.catchability[design.fisheries.iter().position(|d| d.id == f.id).unwrap()])
        .collect();
    set(&mut nat, "q", &q);
    set(&mut nat, "m_post_smolt", &[truth.m_post_smolt]);
    set(&mut nat, "m_adult", &[truth.m_adult]);
    set(&mut nat, "maturation", &truth.maturation[..truth.maturation.len() - 1]);
    set(&mut nat, "s74", &truth.s74[t0..t0 + spec.n_years]);
    set(&mut nat, "sigma_r", &[truth.sigma_r.max(1e-3)]);
    let mut init_smolts = Vec::new();
    let mut recruits = Vec::new();
    for &i in &stock_idx {
        init_smolts.extend_from_slice(&truth.smolts[i][t0..t0 + delay]);
        recruits.extend_from_slice(&truth.smolts[i][t0 + delay..t0 + spec.n_years]);
    }
    set(&mut nat, "init_smolts", &init_smolts);
    set(&mut nat, "recruits", &recruits);
    assert_eq!(t0, 0, "initial sea abundance is only known at the design start");
    let init_sea: Vec<f64> = stock_idx.iter().flat_map(|&i| design.stocks[i].init_sea.clone()).collect();
    set(&mut nat, "init_sea", &init_sea);
    reg.from_natural(&nat).unwrap()
}

use std::collections::BTreeMap;
use std::path::Path;

use salmon_core::model::ModelSpec;
use salmon_core::pipeline::{build_model_spec, demo_config};
use salmon_core::priors::{fit_m74_series, BivariateNormal};
use salmon_core::simulate::SimulationOutput;

/// Life-history spec for simulated data with the demo priors, a default
/// stock-recruit prior, M74 priors from the simulated family counts and no
/// smolt approximations.
pub fn spec_for(design: &SimulationDesign, out: &SimulationOutput) -> ModelSpec {
    let cfg = demo_config(design, Path::new("unused"), Path::new("unused"));
    let years = design.years();
    let m74 = if out.dataset.m74.is_empty() {
        None
    } else {
        Some(fit_m74_series(&out.dataset.m74, &years).unwrap())
    };
    let sr = cfg.priors.default_sr.clone().unwrap_or(BivariateNormal {
        mean: [5.0, -10.0],
        cov: [[1.0, 0.0], [0.0, 2.0]],
    });
    build_model_spec(&cfg, &out.dataset, &years, &sr, &BTreeMap::new(), m74, vec![]).unwrap()
}

/// The small demo resized to `n_years`, with every yearly schedule cut or
/// stretched to match.
pub fn small_design(seed: u64, n_years: usize) -> SimulationDesign {
    use salmon_core::simulate::{make_demo, DemoScale};
    let mut d = make_demo(DemoScale::Small, seed);
    let stretch = |v: &[f64]| (0..n_years).map(|t| v[t % v.len()]).collect::<Vec<f64>>();
    d.n_years = n_years;
    d.effort = d.effort.iter().map(|e| stretch(e)).collect();
    d.s74 = stretch(&d.s74);
    let years = d.years();
    for trap in &mut d.traps {
        trap.years = years[4.min(n_years)..].to_vec();
    }
    if let Some(ef) = &mut d.electrofishing {
        ef.years = years[..n_years - 1].to_vec();
    }
    if let Some(tags) = &mut d.tags {
        tags.release_years = years[..n_years - 2].to_vec();
    }
    d
}

/// Sampled versus analytic moments of a one-dimensional posterior.
#[derive(Debug)]
pub struct MomentCheck {
    pub name: &'static str,
    pub mean: f64,
    pub var: f64,
    pub exact_mean: f64,
    pub exact_var: f64,
    pub se_mean: f64,
    pub se_var: f64,
}

impl MomentCheck {
    fn from_draws(name: &'static str, xs: &[f64], exact_mean: f64, exact_var: f64) -> Self {
        use salmon_core::mcmc::ess;
        use salmon_core::stats::{mean, variance};
        let m = mean(xs);
        let v = variance(xs);
        let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        let n_eff_mean = ess(&[xs]);
        let n_eff_var = ess(&[&sq]);
        Self {
            name,
            mean: m,
            var: v,
            exact_mean,
            exact_var,
            se_mean: (v / n_eff_mean).sqrt(),
            se_var: (variance(&sq) / n_eff_var).sqrt(),
        }
    }

    pub fn within(&self, k: f64) -> bool {
        (self.mean - self.exact_mean).abs() <= k * self.se_mean
            && (self.var - self.exact_var).abs() <= k * self.se_var
    }
}

/// Normal mean with known unit variance under a N(0, 2^2) prior.
pub fn conjugate_normal(seed: u64, n_draws: usize) -> (MomentCheck, Vec<f64>) {
    use salmon_core::mcmc::{run_chain, FnTarget, SamplerConfig};
    let data: Vec<f64> = (0..20).map(|i| 1.3 + 0.8 * ((i as f64) * 0.77).sin()).collect();
    let prior_var = 4.0;
    let post_var = 1.0 / (1.0 / prior_var + data.len() as f64);
    let post_mean = post_var * data.iter().sum::<f64>();
    let target = FnTarget::new(1, |x: &[f64]| {
        -0.5 * x[0] * x[0] / prior_var - 0.5 * data.iter().map(|d| (d - x[0]).powi(2)).sum::<f64>()
    });
    let cfg = SamplerConfig::with_iterations(2000, n_draws);
    let chain = run_chain(&target, &[0.0], seed, &cfg).unwrap();
    let xs = chain.column(0);
    (MomentCheck::from_draws("normal-normal", &xs, post_mean, post_var), xs)
}

/// Binomial success probability under a Beta(2, 3) prior, sampled on the
/// logit scale with its Jacobian.
pub fn conjugate_beta_binomial(seed: u64, n_draws: usize) -> (MomentCheck, Vec<f64>) {
    use salmon_core::mcmc::{run_chain, FnTarget, SamplerConfig};
    let (k, n) = (17.0, 40.0);
    let (a, b) = (2.0 + k, 3.0 + n - k);
    let target = FnTarget::new(1, |x: &[f64]| {
        // p^a (1-p)^b in terms of y = logit p, Jacobian included.
        -a * (-x[0]).exp().ln_1p() - b * x[0].exp().ln_1p()
    });
    let cfg = SamplerConfig::with_iterations(2000, n_draws);
    let chain = run_chain(&target, &[0.0], seed, &cfg).unwrap();
    let ps: Vec<f64> = chain.column(0).iter().map(|y| 1.0 / (1.0 + (-y).exp())).collect();
    let exact_mean = a / (a + b);
    let exact_var = a * b / ((a + b).powi(2) * (a + b + 1.0));
    (MomentCheck::from_draws("beta-binomial", &ps, exact_mean, exact_var), ps)
}
