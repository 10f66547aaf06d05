//! Smolt abundance submodels.
//!
//! The mark-recapture model turns smolt-trap counts into a run-size posterior.
//! The river model links smolt runs to parr densities from electrofishing,
//! hierarchically over rivers, so rivers without a trap still get smolt
//! posteriors. Both are reconstructions: the model forms follow the standard
//! binomial-capture and log-linear survival designs, not published equations.
//! Finally each smolt posterior is summarised as a log-normal likelihood for
//! the life-history model.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::mcmc::{self, DiagnosticsReport, FnTarget, SamplerConfig};
use crate::observation::SmoltLikelihoodApprox;
use crate::stats::{ln_beta_fn, mean, normal_ln_pdf, sd};
use statrs::function::gamma::ln_gamma;

/// Lower bound on the log-sd of a smolt likelihood approximation.
pub const SMOLT_SD_FLOOR: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoltTrapData {
    #[serde(skip)]
    pub river_index: usize,
    pub year: i32,
    pub marked: u64,
    pub captured: u64,
    pub recaptured: u64,
}

impl SmoltTrapData {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.marked > 0, Validation, "year {}: no marked smolts", self.year);
        ensure!(
            self.recaptured <= self.marked.min(self.captured),
            Validation,
            "year {}: recaptures {} exceed min(marked {}, captured {})",
            self.year,
            self.recaptured,
            self.marked,
            self.captured
        );
        Ok(())
    }
}

/// One electrofishing site visit: parr per 100 m2 over a fished area in m2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrofishingRecord {
    pub river: String,
    pub year: i32,
    pub site: String,
    pub density: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiverInfo {
    pub river: String,
    /// Juvenile habitat in units of 100 m2.
    pub habitat_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoltPosterior {
    pub river: String,
    pub year: i32,
    pub draws: Vec<f64>,
}

impl SmoltPosterior {
    pub fn log_sd(&self) -> f64 {
        let logs: Vec<f64> = self.draws.iter().map(|d| d.ln()).collect();
        sd(&logs)
    }
}

/// Log-uniform prior on run size over `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSizePrior {
    pub lower: f64,
    pub upper: f64,
}

impl Default for RunSizePrior {
    fn default() -> Self {
        Self {
            lower: 1.0,
            upper: 1e7,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarkRecaptureResult {
    pub posterior: SmoltPosterior,
    pub warnings: Vec<String>,
}

const MAX_GRID: usize = 100_000;

/// Run-size posterior from one trap season.
///
/// `marked` smolts are released back into the run; the trap then catches each
/// fish with a common probability `p`, so `recaptured ~ Bin(marked, p)` and
/// `captured - recaptured ~ Bin(U - marked, p)`. With `p ~ Uniform(0, 1)`
/// integrated out the likelihood of `U` is
/// `C(U - m, c - r) * B(c + 1, U - c + 1)`.
pub fn markrecapture_posterior(
    river: &str,
    data: &SmoltTrapData,
    prior: RunSizePrior,
    n_draws: usize,
    seed: u64,
) -> Result<MarkRecaptureResult> {
    data.validate()?;
    ensure!(
        prior.lower > 0.0 && prior.upper > prior.lower,
        Validation,
        "run-size prior needs 0 < lower < upper"
    );
    let (m, c, r) = (data.marked as f64, data.captured as f64, data.recaptured as f64);
    let min_run = (m + c - r).max(prior.lower.ceil());
    ensure!(
        min_run <= prior.upper,
        Validation,
        "year {}: at least {} distinct fish were handled, above the prior upper bound {}",
        data.year,
        m + c - r,
        prior.upper
    );
    let mut warnings = Vec::new();
    if data.recaptured == 0 {
        warnings.push(format!(
            "{river} {}: no recaptures, run size is driven by the prior upper tail",
            data.year
        ));
    }

    // Grid over U: integers when the range is small, geometric cells otherwise.
    let span = prior.upper.floor() - min_run + 1.0;
    let integer_grid = span <= MAX_GRID as f64;
    let (points, widths): (Vec<f64>, Vec<f64>) = if integer_grid {
        (0..span as usize).map(|k| (min_run + k as f64, 1.0)).unzip()
    } else {
        let ratio = (prior.upper / min_run).powf(1.0 / (MAX_GRID - 1) as f64);
        (0..MAX_GRID)
            .map(|k| {
                let u = min_run * ratio.powi(k as i32);
                (u, u * (ratio - 1.0))
            })
            .unzip()
    };
    let ln_c_r = ln_gamma(c - r + 1.0);
    let log_post: Vec<f64> = points
        .iter()
        .zip(&widths)
        .map(|(&u, &w)| {
            let ln_choose = ln_gamma(u - m + 1.0) - ln_c_r - ln_gamma(u - m - (c - r) + 1.0);
            // log-uniform prior density 1/U times the cell width
            ln_choose + ln_beta_fn(c + 1.0, u - c + 1.0) - u.ln() + w.ln()
        })
        .collect();
    let max_lp = log_post.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut cdf = Vec::with_capacity(points.len());
    let mut acc = 0.0;
    for lp in &log_post {
        acc += (lp - max_lp).exp();
        cdf.push(acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ratio = if integer_grid { 1.0 } else { points[1] / points[0] };
    let draws = (0..n_draws)
        .map(|_| {
            let u: f64 = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&v| v < u).min(points.len() - 1);
            if integer_grid {
                points[k]
            } else {
                let jitter: f64 = rng.random();
                (points[k] * ratio.powf(jitter)).min(prior.upper)
            }
        })
        .collect();
    Ok(MarkRecaptureResult {
        posterior: SmoltPosterior {
            river: river.to_string(),
            year: data.year,
            draws,
        },
        warnings,
    })
}

/// Log-normal moment match of a smolt posterior on the log scale, with the sd
/// floored at [`SMOLT_SD_FLOOR`].
pub fn approximate_smolt_likelihood(post: &SmoltPosterior) -> Result<SmoltLikelihoodApprox> {
    ensure!(
        post.draws.len() >= 100,
        Validation,
        "{} {}: need at least 100 draws, got {}",
        post.river,
        post.year,
        post.draws.len()
    );
    ensure!(
        post.draws.iter().all(|d| d.is_finite() && *d > 0.0),
        Validation,
        "{} {}: smolt draws must be positive",
        post.river,
        post.year
    );
    let logs: Vec<f64> = post.draws.iter().map(|d| d.ln()).collect();
    Ok(SmoltLikelihoodApprox {
        stock: post.river.clone(),
        year: post.year,
        mu: mean(&logs),
        sd: sd(&logs).max(SMOLT_SD_FLOOR),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pooling {
    /// River survivals share a common population distribution.
    Hierarchical,
    /// Each river's survival has its own fixed wide prior.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiverModelConfig {
    /// Years from parr survey to smolt run.
    pub lag: i32,
    pub pooling: Pooling,
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub seed: u64,
    pub n_draws: usize,
    pub rhat_threshold: f64,
    /// Log-scale index error used when a river-year has a single site.
    pub single_site_se: f64,
    /// Prior on the mean log parr-to-smolt survival, and the independent-fit prior.
    pub survival_prior_mu: f64,
    pub survival_prior_sd: f64,
}

impl Default for RiverModelConfig {
    fn default() -> Self {
        Self {
            lag: 1,
            pooling: Pooling::Hierarchical,
            chains: 4,
            warmup: 3000,
            iterations: 6000,
            seed: 3,
            n_draws: 2000,
            rhat_threshold: 1.05,
            single_site_se: 0.3,
            survival_prior_mu: (0.2f64).ln(),
            survival_prior_sd: 1.5,
        }
    }
}

/// Parr abundance index of one river-year with its log-scale standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParrIndex {
    pub year: i32,
    pub value: f64,
    pub log_se: f64,
}

/// Area-weighted mean site density times habitat area. The log-scale error is
/// the delta-method cv of the mean density.
pub fn parr_indices(
    records: &[ElectrofishingRecord],
    info: &RiverInfo,
    single_site_se: f64,
) -> Result<Vec<ParrIndex>> {
    let mut by_year: BTreeMap<i32, Vec<&ElectrofishingRecord>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.river == info.river) {
        ensure!(
            r.density.is_finite() && r.density >= 0.0 && r.area > 0.0,
            Validation,
            "{} {} site {}: density must be nonnegative and area positive",
            r.river,
            r.year,
            r.site
        );
        by_year.entry(r.year).or_default().push(r);
    }
    let mut out = Vec::new();
    for (year, sites) in by_year {
        let area: f64 = sites.iter().map(|s| s.area).sum();
        let weighted = sites.iter().map(|s| s.density * s.area).sum::<f64>() / area;
        if weighted <= 0.0 {
            continue;
        }
        let log_se = if sites.len() < 2 {
            single_site_se
        } else {
            let d: Vec<f64> = sites.iter().map(|s| s.density).collect();
            let cv = sd(&d) / mean(&d).max(1e-12);
            (1.0 + cv * cv / d.len() as f64).ln().sqrt().max(0.02)
        };
        out.push(ParrIndex {
            year,
            value: weighted * info.habitat_area,
            log_se,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiverModelFit {
    pub posteriors: Vec<SmoltPosterior>,
    /// Posterior draws of each river's parr-to-smolt survival.
    pub survival_draws: BTreeMap<String, Vec<f64>>,
    pub diagnostics: DiagnosticsReport,
}

struct TrapRiver {
    river: usize,
    /// (smolt year, log parr index + nothing, index variance, trap mean, trap var)
    pairs: Vec<(f64, f64, f64, f64)>,
}

/// Hierarchical parr-to-smolt model over all rivers.
///
/// `log smolts[r, t] = log parr[r, t - lag] + log s_r + eta`, with
/// `eta ~ N(0, tau)` and, under hierarchical pooling, `log s_r ~ N(mu_s, omega)`.
/// Trap years enter through a log-normal summary of their mark-recapture
/// posterior; the latent parr and smolt levels are integrated out analytically.
/// Rivers without trap data get predictive posteriors.
pub fn fit_river_model(
    rivers: &[RiverInfo],
    electrofishing: &[ElectrofishingRecord],
    trap_posteriors: &[SmoltPosterior],
    config: &RiverModelConfig,
) -> Result<RiverModelFit> {
    ensure!(!rivers.is_empty(), Validation, "no rivers given to the river model");
    ensure!(
        !trap_posteriors.is_empty(),
        Validation,
        "the river model needs at least one river with trap data"
    );
    let indices: Vec<Vec<ParrIndex>> = rivers
        .iter()
        .map(|info| parr_indices(electrofishing, info, config.single_site_se))
        .collect::<Result<_>>()?;
    let trap_summaries: Vec<(usize, SmoltLikelihoodApprox)> = trap_posteriors
        .iter()
        .map(|p| {
            let idx = rivers.iter().position(|r| r.river == p.river).ok_or_else(|| {
                Error::Validation(format!("trap posterior for unknown river {}", p.river))
            })?;
            Ok((idx, approximate_smolt_likelihood(p)?))
        })
        .collect::<Result<_>>()?;

    let mut trap_rivers: Vec<TrapRiver> = Vec::new();
    for (r, _) in rivers.iter().enumerate() {
        let pairs: Vec<(f64, f64, f64, f64)> = trap_summaries
            .iter()
            .filter(|(i, _)| *i == r)
            .filter_map(|(_, s)| {
                indices[r]
                    .iter()
                    .find(|p| p.year == s.year - config.lag)
                    .map(|p| (p.value.ln(), p.log_se * p.log_se, s.mu, s.sd * s.sd))
            })
            .collect();
        if !pairs.is_empty() {
            trap_rivers.push(TrapRiver { river: r, pairs });
        }
    }
    ensure!(
        !trap_rivers.is_empty(),
        Validation,
        "no river has both trap years and electrofishing {} year(s) earlier",
        config.lag
    );

    let k = trap_rivers.len();
    let hierarchical = config.pooling == Pooling::Hierarchical;
    // [mu_s, log omega, log tau, log s_r...]
    let dim = 3 + k;
    let (pm, ps) = (config.survival_prior_mu, config.survival_prior_sd);
    let target = FnTarget::new(dim, |x: &[f64]| {
        let (mu_s, omega, tau) = (x[0], x[1].exp(), x[2].exp());
        let mut lp = normal_ln_pdf(mu_s, pm, ps);
        // log-normal priors keep both scales away from zero
        lp += normal_ln_pdf(x[1], 0.3f64.ln(), 0.5);
        lp += normal_ln_pdf(x[2], 0.2f64.ln(), 0.5);
        let tau2 = tau * tau;
        for (j, tr) in trap_rivers.iter().enumerate() {
            let log_s = x[3 + j];
            lp += if hierarchical {
                normal_ln_pdf(log_s, mu_s, omega)
            } else {
                normal_ln_pdf(log_s, pm, ps)
            };
            for &(log_parr, idx_var, trap_mu, trap_var) in &tr.pairs {
                lp += normal_ln_pdf(trap_mu, log_parr + log_s, (tau2 + idx_var + trap_var).sqrt());
            }
        }
        lp
    });

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let start_s: Vec<f64> = trap_rivers
        .iter()
        .map(|tr| mean(&tr.pairs.iter().map(|p| p.2 - p.0).collect::<Vec<_>>()))
        .collect();
    let inits: Vec<Vec<f64>> = (0..config.chains)
        .map(|_| {
            let mut v = vec![mean(&start_s), 0.3f64.ln(), 0.2f64.ln()];
            v.extend(start_s.iter());
            v.iter()
                .map(|x| x + 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let sampler = SamplerConfig {
        n_warmup: config.warmup,
        n_iter: config.iterations,
        thin: 1,
        blocks: None,
        initial_scales: Some(vec![0.1; dim]),
        target_acceptance: 0.3,
        adapt: true,
    };
    let chains = mcmc::run_chains(&target, &inits, config.seed, &sampler)?;
    let mut names = vec!["mu_log_survival".to_string(), "log_omega".into(), "log_tau".into()];
    names.extend(trap_rivers.iter().map(|tr| format!("log_survival[{}]", rivers[tr.river].river)));
    let report = mcmc::diagnostics(&names, &chains, config.rhat_threshold);
    if !report.passed() {
        return Err(Error::Convergence {
            stage: "C".into(),
            detail: report.summary(),
        });
    }

    let pooled: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    let stride = (pooled.len() / config.n_draws.max(1)).max(1);
    let selected: Vec<&Vec<f64>> = pooled.iter().step_by(stride).take(config.n_draws).copied().collect();

    // Smolt draws per river-year, conditional on each hyper draw.
    let mut survival_draws: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut posteriors: BTreeMap<(usize, i32), Vec<f64>> = BTreeMap::new();
    for x in &selected {
        let (mu_s, omega, tau) = (x[0], x[1].exp(), x[2].exp());
        for (r, info) in rivers.iter().enumerate() {
            let log_s = match trap_rivers.iter().position(|tr| tr.river == r) {
                Some(j) => x[3 + j],
                None => {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    if hierarchical {
                        mu_s + omega * z
                    } else {
                        pm + ps * z
                    }
                }
            };
            survival_draws.entry(info.river.clone()).or_default().push(log_s.exp());
            let mut years: Vec<i32> = indices[r].iter().map(|p| p.year + config.lag).collect();
            years.extend(trap_summaries.iter().filter(|(i, _)| *i == r).map(|(_, s)| s.year));
            years.sort_unstable();
            years.dedup();
            for year in years {
                let parr = indices[r].iter().find(|p| p.year == year - config.lag);
                let trap = trap_summaries
                    .iter()
                    .find(|(i, s)| *i == r && s.year == year)
                    .map(|(_, s)| s);
                let (m, v) = match (parr, trap) {
                    (Some(p), Some(t)) => {
                        let v0 = tau * tau + p.log_se * p.log_se;
                        let m0 = p.value.ln() + log_s;
                        let prec = 1.0 / v0 + 1.0 / (t.sd * t.sd);
                        ((m0 / v0 + t.mu / (t.sd * t.sd)) / prec, 1.0 / prec)
                    }
                    (Some(p), None) => (p.value.ln() + log_s, tau * tau + p.log_se * p.log_se),
                    (None, Some(t)) => (t.mu, t.sd * t.sd),
                    (None, None) => unreachable!(),
                };
                let z: f64 = StandardNormal.sample(&mut rng);
                posteriors.entry((r, year)).or_default().push((m + v.sqrt() * z).exp());
            }
        }
    }
    Ok(RiverModelFit {
        posteriors: posteriors
            .into_iter()
            .map(|((r, year), draws)| SmoltPosterior {
                river: rivers[r].river.clone(),
                year,
                draws,
            })
            .collect(),
        survival_draws,
        diagnostics: report,
    })
}
