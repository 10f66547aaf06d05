//! Informative priors for the life-history model.
//!
//! Three independent sources feed the life-history priors: expert quantiles
//! on PSPC, a hierarchical stock-recruit analysis of external stocks, and
//! family-level M74 mortality counts.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::mcmc::{self, DiagnosticsReport, FnTarget, SamplerConfig};
use crate::stats::{mean, normal_ln_pdf, std_normal_quantile};

/// Normal prior on the log of a positive quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalPrior {
    pub mu: f64,
    pub sd: f64,
}

impl LognormalPrior {
    pub fn new(mu: f64, sd: f64) -> Result<Self> {
        ensure!(mu.is_finite(), Validation, "log-mean must be finite");
        ensure!(sd.is_finite() && sd > 0.0, Validation, "log-sd must be positive, got {sd}");
        Ok(Self { mu, sd })
    }

    /// Density of `log x`, evaluated at `log_x`.
    pub fn ln_pdf_log(&self, log_x: f64) -> f64 {
        normal_ln_pdf(log_x, self.mu, self.sd)
    }

    pub fn quantile(&self, p: f64) -> f64 {
        (self.mu + self.sd * std_normal_quantile(p)).exp()
    }

    pub fn median(&self) -> f64 {
        self.mu.exp()
    }
}

/// Elicited `(probability, value)` pairs for one stock's PSPC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertQuantiles {
    pub stock: String,
    pub pairs: Vec<(f64, f64)>,
}

impl ExpertQuantiles {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.pairs.len() >= 2,
            Validation,
            "stock {}: at least two quantile pairs are needed",
            self.stock
        );
        ensure!(
            self.pairs.iter().all(|(p, v)| *p > 0.0 && *p < 1.0 && *v > 0.0),
            Validation,
            "stock {}: probabilities must lie in (0, 1) and values be positive",
            self.stock
        );
        ensure!(
            self.pairs.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 < w[1].1),
            Validation,
            "stock {}: quantiles must be strictly increasing",
            self.stock
        );
        Ok(())
    }
}

/// Least-squares log-normal fit to elicited quantiles: regress `log value`
/// on the standard normal quantile of each probability. Exact for two pairs.
pub fn fit_quantile_prior(q: &ExpertQuantiles) -> Result<LognormalPrior> {
    q.validate()?;
    let z: Vec<f64> = q.pairs.iter().map(|(p, _)| std_normal_quantile(*p)).collect();
    let y: Vec<f64> = q.pairs.iter().map(|(_, v)| v.ln()).collect();
    let (zbar, ybar) = (mean(&z), mean(&y));
    let szz: f64 = z.iter().map(|zi| (zi - zbar) * (zi - zbar)).sum();
    let szy: f64 = z.iter().zip(&y).map(|(zi, yi)| (zi - zbar) * (yi - ybar)).sum();
    let sd = szy / szz;
    LognormalPrior::new(ybar - sd * zbar, sd)
}

/// Bivariate normal over `(log alpha, log beta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BivariateNormal {
    pub mean: [f64; 2],
    pub cov: [[f64; 2]; 2],
}

impl BivariateNormal {
    pub fn ln_pdf(&self, x: [f64; 2]) -> f64 {
        let [[a, b], [_, d]] = self.cov;
        let det = a * d - b * b;
        let (u, v) = (x[0] - self.mean[0], x[1] - self.mean[1]);
        let q = (d * u * u - 2.0 * b * u * v + a * v * v) / det;
        -0.5 * q - 0.5 * det.ln() - (2.0 * std::f64::consts::PI).ln()
    }

    /// Conditional law of the first coordinate given the second.
    pub fn conditional_first(&self, second: f64) -> (f64, f64) {
        let [[a, b], [_, d]] = self.cov;
        let m = self.mean[0] + b / d * (second - self.mean[1]);
        let v = a - b * b / d;
        (m, v.max(1e-300).sqrt())
    }

    pub fn marginal(&self, k: usize) -> LognormalPrior {
        LognormalPrior {
            mu: self.mean[k],
            sd: self.cov[k][k].sqrt(),
        }
    }
}

/// Paired egg (or spawner) and recruit indices of one external stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSrDataset {
    pub stock: String,
    pub eggs: Vec<f64>,
    pub recruits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrHyperpriorConfig {
    pub chains: usize,
    pub warmup: usize,
    pub iterations: usize,
    pub seed: u64,
    pub rhat_threshold: f64,
    pub n_predictive: usize,
    /// Sd of the normal prior on both population means.
    pub mean_prior_sd: f64,
    /// Half-normal scale for the population sds and the observation sd.
    pub scale_prior_sd: f64,
}

impl Default for SrHyperpriorConfig {
    fn default() -> Self {
        Self {
            chains: 4,
            warmup: 4000,
            iterations: 8000,
            seed: 1,
            rhat_threshold: 1.05,
            n_predictive: 4000,
            mean_prior_sd: 10.0,
            scale_prior_sd: 1.0,
        }
    }
}

/// Population hyper-parameters of one posterior draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SrHyperDraw {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    pub rho: f64,
}

impl SrHyperDraw {
    fn cov(&self) -> [[f64; 2]; 2] {
        let c = self.rho * self.sd[0] * self.sd[1];
        [[self.sd[0] * self.sd[0], c], [c, self.sd[1] * self.sd[1]]]
    }
}

/// Posterior-predictive prior for the `(log alpha, log beta)` of a new stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrPredictivePrior {
    pub samples: Vec<[f64; 2]>,
    pub summary: BivariateNormal,
    pub hyper_draws: Vec<SrHyperDraw>,
    /// Posterior means of each external stock's `(log alpha, log beta)`.
    pub stock_means: Vec<(String, [f64; 2])>,
    pub diagnostics: DiagnosticsReport,
}

impl SrPredictivePrior {
    /// Mean and covariance of the predictive mixture, computed from hyper draws.
    pub fn mixture_moments(&self) -> BivariateNormal {
        let n = self.hyper_draws.len() as f64;
        let mut m = [0.0; 2];
        for h in &self.hyper_draws {
            m[0] += h.mean[0] / n;
            m[1] += h.mean[1] / n;
        }
        let mut cov = [[0.0; 2]; 2];
        for h in &self.hyper_draws {
            let c = h.cov();
            let d = [h.mean[0] - m[0], h.mean[1] - m[1]];
            for r in 0..2 {
                for k in 0..2 {
                    cov[r][k] += (c[r][k] + d[r] * d[k]) / n;
                }
            }
        }
        BivariateNormal { mean: m, cov }
    }

    /// Draws `n` fresh predictive samples.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<[f64; 2]> {
        (0..n)
            .map(|_| {
                let h = &self.hyper_draws[rng.random_range(0..self.hyper_draws.len())];
                draw_bvn(h, rng)
            })
            .collect()
    }
}

fn draw_bvn<R: Rng>(h: &SrHyperDraw, rng: &mut R) -> [f64; 2] {
    let z1: f64 = StandardNormal.sample(rng);
    let z2: f64 = StandardNormal.sample(rng);
    let a = h.mean[0] + h.sd[0] * z1;
    let b = h.mean[1] + h.sd[1] * (h.rho * z1 + (1.0 - h.rho * h.rho).max(0.0).sqrt() * z2);
    [a, b]
}

fn half_normal_ln_pdf_log(log_s: f64, scale: f64) -> f64 {
    let s = log_s.exp();
    // density of log s under a half-normal on s
    normal_ln_pdf(s, 0.0, scale) + std::f64::consts::LN_2 + log_s
}

/// Per-stock starting values from the linearisation `1/R = alpha/O + beta`.
fn linearised_start(d: &ExternalSrDataset) -> [f64; 2] {
    let x: Vec<f64> = d.eggs.iter().map(|o| 1.0 / o).collect();
    let y: Vec<f64> = d.recruits.iter().map(|r| 1.0 / r).collect();
    let (xb, yb) = (mean(&x), mean(&y));
    let sxx: f64 = x.iter().map(|v| (v - xb) * (v - xb)).sum();
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xb) * (b - yb)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
    let intercept = yb - slope * xb;
    let median_ratio = {
        let mut r: Vec<f64> = d.eggs.iter().zip(&d.recruits).map(|(o, r)| o / r).collect();
        r.sort_by(f64::total_cmp);
        r[r.len() / 2]
    };
    let max_r = d.recruits.iter().cloned().fold(0.0, f64::max);
    let alpha = if slope > 0.0 { slope } else { 0.5 * median_ratio };
    let beta = if intercept > 0.0 { intercept } else { 0.5 / max_r };
    [alpha.ln(), beta.ln()]
}

/// Fits the hierarchical stock-recruit model to external stocks and returns
/// the posterior-predictive prior for a new stock.
///
/// Each stock's `(log alpha, log beta)` is drawn from a bivariate normal
/// population; `log R ~ Normal(log BH(O), sigma)`. Population means have wide
/// normal priors, sds and sigma half-normal priors, the correlation a uniform prior.
pub fn fit_sr_hyperprior(
    stocks: &[ExternalSrDataset],
    config: &SrHyperpriorConfig,
) -> Result<SrPredictivePrior> {
    ensure!(
        stocks.len() >= 2,
        Validation,
        "the stock-recruit hyperprior needs at least two external stocks, got {}",
        stocks.len()
    );
    for s in stocks {
        ensure!(
            !s.eggs.is_empty() && s.eggs.len() == s.recruits.len(),
            Validation,
            "external stock {}: egg and recruit series must be non-empty and paired",
            s.stock
        );
        ensure!(
            s.eggs.iter().chain(&s.recruits).all(|v| v.is_finite() && *v > 0.0),
            Validation,
            "external stock {}: values must be positive",
            s.stock
        );
    }
    let j = stocks.len();
    let dim = 6 + 2 * j;
    let log_r: Vec<Vec<f64>> = stocks
        .iter()
        .map(|s| s.recruits.iter().map(|r| r.ln()).collect())
        .collect();
    let mean_sd = config.mean_prior_sd;
    let scale_sd = config.scale_prior_sd;

    let target = FnTarget::new(dim, |x: &[f64]| {
        let mu = [x[0], x[1]];
        let sd = [x[2].exp(), x[3].exp()];
        let rho = x[4].tanh();
        let sigma = x[5].exp();
        let mut lp = normal_ln_pdf(mu[0], 0.0, mean_sd) + normal_ln_pdf(mu[1], 0.0, mean_sd);
        lp += half_normal_ln_pdf_log(x[2], scale_sd) + half_normal_ln_pdf_log(x[3], scale_sd);
        lp += half_normal_ln_pdf_log(x[5], scale_sd);
        lp += (1.0 - rho * rho).ln();
        let pop = BivariateNormal {
            mean: mu,
            cov: SrHyperDraw { mean: mu, sd, rho }.cov(),
        };
        for (k, s) in stocks.iter().enumerate() {
            let la = x[6 + 2 * k];
            let lb = x[7 + 2 * k];
            lp += pop.ln_pdf([la, lb]);
            let (alpha, beta) = (la.exp(), lb.exp());
            for (o, lr) in s.eggs.iter().zip(&log_r[k]) {
                let pred = (o / (alpha + beta * o)).ln();
                lp += normal_ln_pdf(*lr, pred, sigma);
            }
        }
        if lp.is_nan() {
            f64::NEG_INFINITY
        } else {
            lp
        }
    });

    let starts: Vec<[f64; 2]> = stocks.iter().map(linearised_start).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let base: Vec<f64> = {
        let la: Vec<f64> = starts.iter().map(|s| s[0]).collect();
        let lb: Vec<f64> = starts.iter().map(|s| s[1]).collect();
        let mut v = vec![mean(&la), mean(&lb), -0.5, -0.5, 0.0, -1.0];
        for s in &starts {
            v.extend_from_slice(s);
        }
        v
    };
    let inits: Vec<Vec<f64>> = (0..config.chains)
        .map(|_| {
            base.iter()
                .map(|v| v + 0.1 * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let sampler = SamplerConfig {
        n_warmup: config.warmup,
        n_iter: config.iterations,
        thin: 1,
        // population means, population scales, noise, then one block per stock
        blocks: Some(
            [vec![0, 1], vec![2, 3, 4], vec![5]]
                .into_iter()
                .chain((0..j).map(|k| vec![6 + 2 * k, 7 + 2 * k]))
                .collect(),
        ),
        initial_scales: Some(vec![0.05; dim]),
        target_acceptance: 0.25,
        adapt: true,
    };
    let chains = mcmc::run_chains(&target, &inits, config.seed, &sampler)?;
    let mut names: Vec<String> = ["mu_log_alpha", "mu_log_beta", "log_sd_alpha", "log_sd_beta", "atanh_rho", "log_sigma"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    for s in stocks {
        names.push(format!("log_alpha[{}]", s.stock));
        names.push(format!("log_beta[{}]", s.stock));
    }
    let report = mcmc::diagnostics(&names, &chains, config.rhat_threshold);
    if !report.passed() {
        return Err(Error::Convergence {
            stage: "D".into(),
            detail: report.summary(),
        });
    }

    let pooled: Vec<&Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter()).collect();
    let stride = (pooled.len() / config.n_predictive.max(1)).max(1);
    let hyper_draws: Vec<SrHyperDraw> = pooled
        .iter()
        .step_by(stride)
        .take(config.n_predictive)
        .map(|x| SrHyperDraw {
            mean: [x[0], x[1]],
            sd: [x[2].exp(), x[3].exp()],
            rho: x[4].tanh(),
        })
        .collect();
    let samples: Vec<[f64; 2]> = hyper_draws.iter().map(|h| draw_bvn(h, &mut rng)).collect();
    let stock_means = stocks
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let la: Vec<f64> = pooled.iter().map(|x| x[6 + 2 * k]).collect();
            let lb: Vec<f64> = pooled.iter().map(|x| x[7 + 2 * k]).collect();
            (s.stock.clone(), [mean(&la), mean(&lb)])
        })
        .collect();
    let mut prior = SrPredictivePrior {
        samples,
        summary: BivariateNormal {
            mean: [0.0; 2],
            cov: [[1.0, 0.0], [0.0, 1.0]],
        },
        hyper_draws,
        stock_means,
        diagnostics: report,
    };
    prior.summary = sample_moments(&prior.samples);
    Ok(prior)
}

pub fn sample_moments(samples: &[[f64; 2]]) -> BivariateNormal {
    let n = samples.len() as f64;
    let m = [
        samples.iter().map(|s| s[0]).sum::<f64>() / n,
        samples.iter().map(|s| s[1]).sum::<f64>() / n,
    ];
    let mut cov = [[0.0; 2]; 2];
    for s in samples {
        let d = [s[0] - m[0], s[1] - m[1]];
        for r in 0..2 {
            for k in 0..2 {
                cov[r][k] += d[r] * d[k] / (n - 1.0);
            }
        }
    }
    BivariateNormal { mean: m, cov }
}

/// Family-level M74 monitoring counts for one year.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M74Observation {
    pub year: i32,
    pub families: u64,
    pub m74_families: u64,
}

/// Beta posterior of the M74 mortality fraction in one year.
///
/// This is a family-level binomial simplification of a female-specific model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct M74YearPosterior {
    pub year: i32,
    pub mortality_a: f64,
    pub mortality_b: f64,
}

impl M74YearPosterior {
    pub fn prior(year: i32) -> Self {
        Self {
            year,
            mortality_a: 1.0,
            mortality_b: 1.0,
        }
    }

    /// Survival is one minus mortality, hence `Beta(b, a)`.
    pub fn survival_params(&self) -> (f64, f64) {
        (self.mortality_b, self.mortality_a)
    }

    pub fn mean_survival(&self) -> f64 {
        self.mortality_b / (self.mortality_a + self.mortality_b)
    }

    pub fn mean_mortality(&self) -> f64 {
        self.mortality_a / (self.mortality_a + self.mortality_b)
    }
}

/// Conjugate update of a uniform prior on yearly M74 mortality by binomial
/// family counts. Years without observations keep the prior.
pub fn fit_m74_series(obs: &[M74Observation], years: &[i32]) -> Result<Vec<M74YearPosterior>> {
    for o in obs {
        ensure!(
            o.m74_families <= o.families,
            Validation,
            "year {}: {} M74 families exceed {} monitored",
            o.year,
            o.m74_families,
            o.families
        );
    }
    Ok(years
        .iter()
        .map(|&year| {
            let (n, y) = obs
                .iter()
                .filter(|o| o.year == year)
                .fold((0u64, 0u64), |(n, y), o| (n + o.families, y + o.m74_families));
            M74YearPosterior {
                year,
                mortality_a: 1.0 + y as f64,
                mortality_b: 1.0 + (n - y) as f64,
            }
        })
        .collect())
}

/// Predictive draw of a future year's M74 survival: a random historical year's
/// posterior, then a Beta draw from it.
pub fn sample_m74_survival<R: Rng>(posteriors: &[M74YearPosterior], rng: &mut R) -> f64 {
    if posteriors.is_empty() {
        return 1.0;
    }
    let p = &posteriors[rng.random_range(0..posteriors.len())];
    let (a, b) = p.survival_params();
    Beta::new(a, b).map(|d| d.sample(rng)).unwrap_or(1.0)
}
