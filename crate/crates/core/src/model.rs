//! The life-history posterior.
//!
//! Unknowns are stock-recruit parameters, catchabilities, natural mortalities,
//! maturation, yearly M74 survival, the recruitment noise scale, initial
//! states and the latent recruitment of every stock and year. The latent
//! recruitment is stored as `log R` directly; its process-noise innovation is
//! `z = (log R - log BH(O) + sigma_r^2 / 2) / sigma_r`, so `log R` has the
//! density `Normal(log BH(O) - sigma_r^2 / 2, sigma_r)`. Sea and spawning
//! noise scales are fixed inputs and are zero in fitted models.

use serde::{Deserialize, Serialize};

use crate::dynamics::{
    bh_recruitment, step_population, AgeStructure, Innovations, MaturationSchedule,
    PopulationState, ProcessNoise, StockParams, StockState, YearInputs,
};
use crate::error::{ensure, Error, Result};
use crate::mcmc::Target;
use crate::observation::{
    reared_abundance, total_loglik, FisheryDef, FishingMortality, LoglikBreakdown,
    ObservationContext, Observations,
};
use crate::params::{ParameterRegistry, Transform};
use crate::priors::{BivariateNormal, LognormalPrior, M74YearPosterior};
use crate::stats::{beta_ln_pdf, normal_ln_pdf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockSpec {
    pub name: String,
    /// Eggs per female by sea-age `1..=max_sea_age`.
    pub fecundity: Vec<f64>,
    pub female_prop: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaPrior {
    pub a: f64,
    pub b: f64,
}

/// Prior on one stock's `(log alpha, log beta)`.
///
/// With a PSPC prior, `log beta = -log PSPC` takes that prior and `log alpha`
/// the conditional of `joint` given `log beta`. Without one, `joint` is used as is.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SrPrior {
    pub joint: BivariateNormal,
    pub pspc: Option<LognormalPrior>,
}

impl SrPrior {
    pub fn ln_pdf(&self, log_alpha: f64, log_beta: f64) -> f64 {
        match &self.pspc {
            Some(p) => {
                let (m, s) = self.joint.conditional_first(log_beta);
                p.ln_pdf_log(-log_beta) + normal_ln_pdf(log_alpha, m, s)
            }
            None => self.joint.ln_pdf([log_alpha, log_beta]),
        }
    }

    /// Prior centre of `(log alpha, log beta)`.
    pub fn centre(&self) -> [f64; 2] {
        match &self.pspc {
            Some(p) => {
                let lb = -p.mu;
                [self.joint.conditional_first(lb).0, lb]
            }
            None => self.joint.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifeHistoryPriors {
    /// One per stock.
    pub stock_recruit: Vec<SrPrior>,
    /// One per fishery.
    pub catchability: Vec<LognormalPrior>,
    pub m_post_smolt: LognormalPrior,
    pub m_adult: LognormalPrior,
    /// Maturation fractions of sea-ages `1..max_sea_age`.
    pub maturation: Vec<BetaPrior>,
    /// M74 survival per model year; empty fixes survival at one.
    pub m74_survival: Vec<BetaPrior>,
    /// Half-normal scale of `sigma_r`.
    pub sigma_r_scale: f64,
    /// Per stock, shared by the `smolt_delay` initial smolt cohorts.
    pub init_smolts: Vec<LognormalPrior>,
    /// Per stock and sea-age.
    pub init_sea: Vec<Vec<LognormalPrior>>,
}

/// Everything needed to evaluate the posterior, in serialisable form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub ages: AgeStructure,
    pub first_year: i32,
    pub n_years: usize,
    pub stocks: Vec<StockSpec>,
    /// Selectivity, reporting and observation sd are fixed; catchability is estimated.
    pub fisheries: Vec<FisheryDef>,
    /// Effort `[fishery][year]`; missing years carry zero effort.
    pub effort: Vec<Vec<f64>>,
    /// Reared smolt releases per model year, exposed to fisheries only.
    pub reared: Option<Vec<f64>>,
    pub observations: Observations,
    pub priors: LifeHistoryPriors,
    /// Only `sigma_n` and `sigma_s` are used; recruitment noise is estimated.
    pub fixed_noise: ProcessNoise,
    pub zero_floor: f64,
    /// Yearly M74 posteriors used to draw future survival in projections.
    pub m74_history: Vec<M74YearPosterior>,
}

/// Decoded natural-scale parameters of one point.
#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub stocks: Vec<StockParams>,
    pub catchability: Vec<f64>,
    pub m_post_smolt: f64,
    pub m_adult: f64,
    pub maturation: MaturationSchedule,
    pub m74: Vec<f64>,
    pub sigma_r: f64,
    pub initial: Vec<PopulationState>,
    /// `[stock][k]` for recruitment years `smolt_delay..n_years`.
    pub log_recruits: Vec<Vec<f64>>,
}

/// Latent path implied by one point.
#[derive(Debug, Clone)]
pub struct ModelPath {
    pub decoded: Decoded,
    pub fishing: FishingMortality,
    pub natural: Vec<Vec<f64>>,
    /// `[stock][year]`.
    pub states: Vec<Vec<StockState>>,
    /// State carried past the last model year; its queued recruits are the
    /// deterministic stock-recruit expectations.
    pub finals: Vec<PopulationState>,
    /// Log-density of the latent recruitments given the eggs that produced them.
    pub recruitment_ln_pdf: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelSpec", into = "ModelSpec")]
pub struct LifeHistoryModel {
    spec: ModelSpec,
    registry: ParameterRegistry,
}

impl TryFrom<ModelSpec> for LifeHistoryModel {
    type Error = Error;

    fn try_from(spec: ModelSpec) -> Result<Self> {
        Self::new(spec)
    }
}

impl From<LifeHistoryModel> for ModelSpec {
    fn from(m: LifeHistoryModel) -> Self {
        m.spec
    }
}

fn label(stock: &str, year: i32) -> String {
    format!("{stock},{year}")
}

impl LifeHistoryModel {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        let ages = spec.ages;
        let (ns, nf, ny) = (spec.stocks.len(), spec.fisheries.len(), spec.n_years);
        let big_a = ages.max_sea_age;
        let t_delay = ages.smolt_delay;
        ensure!(ns > 0, Validation, "the model needs at least one stock");
        ensure!(
            ny > t_delay,
            Validation,
            "{ny} model years do not exceed the smolt delay {t_delay}"
        );
        for s in &spec.stocks {
            ensure!(
                s.fecundity.len() == big_a,
                Dimension,
                "stock {}: fecundity needs {big_a} sea-ages",
                s.name
            );
            StockParams::new(1.0, 1.0, s.fecundity.clone(), s.female_prop)?;
        }
        for f in &spec.fisheries {
            f.validate(ages.n_rate_ages())?;
        }
        ensure!(
            spec.effort.len() == nf && spec.effort.iter().all(|e| e.len() == ny),
            Dimension,
            "effort must be {nf} fisheries by {ny} years"
        );
        ensure!(
            spec.effort.iter().flatten().all(|e| e.is_finite() && *e >= 0.0),
            Domain,
            "effort must be finite and nonnegative"
        );
        if let Some(r) = &spec.reared {
            ensure!(r.len() == ny, Dimension, "reared releases need {ny} years");
        }
        let p = &spec.priors;
        ensure!(
            p.stock_recruit.len() == ns && p.init_smolts.len() == ns && p.init_sea.len() == ns,
            Dimension,
            "stock-level priors need one entry per stock"
        );
        ensure!(
            p.init_sea.iter().all(|v| v.len() == big_a),
            Dimension,
            "initial sea priors need {big_a} sea-ages"
        );
        ensure!(p.catchability.len() == nf, Dimension, "catchability priors need {nf} entries");
        ensure!(
            p.maturation.len() == big_a - 1,
            Dimension,
            "maturation priors need {} entries",
            big_a - 1
        );
        ensure!(
            p.m74_survival.is_empty() || p.m74_survival.len() == ny,
            Dimension,
            "M74 priors need {ny} entries or none"
        );
        ensure!(p.sigma_r_scale > 0.0, Validation, "sigma_r prior scale must be positive");
        ensure!(spec.zero_floor > 0.0, Validation, "zero floor must be positive");
        for c in &spec.observations.tags {
            c.validate()?;
        }

        let names: Vec<String> = spec.stocks.iter().map(|s| s.name.clone()).collect();
        let year = |t: usize| spec.first_year + t as i32;
        let mut reg = ParameterRegistry::new();
        reg.push("alpha", names.clone(), Transform::Log);
        reg.push("beta", names.clone(), Transform::Log);
        reg.push(
            "q",
            spec.fisheries.iter().map(|f| f.id.clone()).collect(),
            Transform::Log,
        );
        reg.push_scalar("m_post_smolt", Transform::Log);
        reg.push_scalar("m_adult", Transform::Log);
        if big_a > 1 {
            reg.push(
                "maturation",
                (1..big_a).map(|a| a.to_string()).collect(),
                Transform::Logit,
            );
        }
        if !p.m74_survival.is_empty() {
            reg.push("s74", (0..ny).map(|t| year(t).to_string()).collect(), Transform::Logit);
        }
        reg.push_scalar("sigma_r", Transform::Log);
        reg.push(
            "init_smolts",
            names
                .iter()
                .flat_map(|s| (0..t_delay).map(move |k| (s, k)))
                .map(|(s, k)| label(s, year(k)))
                .collect(),
            Transform::Log,
        );
        reg.push(
            "init_sea",
            names
                .iter()
                .flat_map(|s| (1..=big_a).map(move |a| format!("{s},{a}")))
                .collect(),
            Transform::Log,
        );
        reg.push(
            "recruits",
            names
                .iter()
                .flat_map(|s| (t_delay..ny).map(move |t| (s, t)))
                .map(|(s, t)| label(s, year(t)))
                .collect(),
            Transform::Log,
        );
        Ok(Self { spec, registry: reg })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn registry(&self) -> &ParameterRegistry {
        &self.registry
    }

    pub fn dim(&self) -> usize {
        self.registry.dim()
    }

    pub fn stock_names(&self) -> Vec<String> {
        self.spec.stocks.iter().map(|s| s.name.clone()).collect()
    }

    pub fn years(&self) -> Vec<i32> {
        (0..self.spec.n_years)
            .map(|t| self.spec.first_year + t as i32)
            .collect()
    }

    fn n_latent_years(&self) -> usize {
        self.spec.n_years - self.spec.ages.smolt_delay
    }

    fn slice<'a>(&self, x: &'a [f64], name: &str) -> &'a [f64] {
        let r = self.registry.range(name).expect("registered group");
        &x[r]
    }

    pub fn decode(&self, x: &[f64]) -> Result<Decoded> {
        ensure!(
            x.len() == self.dim(),
            Internal,
            "parameter vector of length {} does not match the registry dimension {}",
            x.len(),
            self.dim()
        );
        let spec = &self.spec;
        let big_a = spec.ages.max_sea_age;
        let t_delay = spec.ages.smolt_delay;
        let la = self.slice(x, "alpha");
        let lb = self.slice(x, "beta");
        let stocks = spec
            .stocks
            .iter()
            .enumerate()
            .map(|(i, s)| StockParams::new(la[i].exp(), lb[i].exp(), s.fecundity.clone(), s.female_prop))
            .collect::<Result<Vec<_>>>()?;
        let free: Vec<f64> = if big_a > 1 {
            self.slice(x, "maturation")
                .iter()
                .map(|u| Transform::Logit.to_natural(*u))
                .collect()
        } else {
            Vec::new()
        };
        let m74 = if spec.priors.m74_survival.is_empty() {
            vec![1.0; spec.n_years]
        } else {
            self.slice(x, "s74")
                .iter()
                .map(|u| Transform::Logit.to_natural(*u))
                .collect()
        };
        let init_smolts = self.slice(x, "init_smolts");
        let init_sea = self.slice(x, "init_sea");
        let initial = (0..spec.stocks.len())
            .map(|i| PopulationState {
                smolt_queue: init_smolts[i * t_delay..(i + 1) * t_delay]
                    .iter()
                    .map(|u| u.exp())
                    .collect(),
                sea: init_sea[i * big_a..(i + 1) * big_a].iter().map(|u| u.exp()).collect(),
            })
            .collect();
        let nl = self.n_latent_years();
        let rec = self.slice(x, "recruits");
        Ok(Decoded {
            stocks,
            catchability: self.slice(x, "q").iter().map(|u| u.exp()).collect(),
            m_post_smolt: self.slice(x, "m_post_smolt")[0].exp(),
            m_adult: self.slice(x, "m_adult")[0].exp(),
            maturation: MaturationSchedule::from_free(&free)?,
            m74,
            sigma_r: self.slice(x, "sigma_r")[0].exp(),
            initial,
            log_recruits: (0..spec.stocks.len())
                .map(|i| rec[i * nl..(i + 1) * nl].to_vec())
                .collect(),
        })
    }

    /// Natural mortality `[year][sea_age]`: post-smolt rate at sea-age 0, adult rate after.
    pub fn natural_mortality(&self, m_post_smolt: f64, m_adult: f64, years: usize) -> Vec<Vec<f64>> {
        let mut row = vec![m_adult; self.spec.ages.n_rate_ages()];
        row[0] = m_post_smolt;
        vec![row; years]
    }

    /// Steps every stock through the model years.
    pub fn path(&self, x: &[f64]) -> Result<ModelPath> {
        let decoded = self.decode(x)?;
        let spec = &self.spec;
        let t_delay = spec.ages.smolt_delay;
        let fishing =
            FishingMortality::from_effort(&spec.fisheries, &decoded.catchability, &spec.effort)?;
        let natural = self.natural_mortality(decoded.m_post_smolt, decoded.m_adult, spec.n_years);
        let noise = ProcessNoise {
            sigma_r: 0.0,
            ..spec.fixed_noise
        };
        let innov = Innovations::zeros(spec.ages.max_sea_age);
        let sigma = decoded.sigma_r;
        let mut states = Vec::with_capacity(spec.stocks.len());
        let mut finals = Vec::with_capacity(spec.stocks.len());
        let mut rec_lp = 0.0;
        for (i, stock) in decoded.stocks.iter().enumerate() {
            let mut state = decoded.initial[i].clone();
            let mut records = Vec::with_capacity(spec.n_years);
            for t in 0..spec.n_years {
                let inputs = YearInputs {
                    fishing: &fishing.total[t],
                    natural: &natural[t],
                    m74_survival: decoded.m74[t],
                };
                let (mut next, rec) =
                    step_population(&state, stock, &decoded.maturation, &inputs, &noise, &innov)?;
                if t + t_delay < spec.n_years {
                    let log_r = decoded.log_recruits[i][t];
                    let expected = bh_recruitment(rec.eggs, stock.alpha, stock.beta)?;
                    rec_lp += normal_ln_pdf(log_r, expected.ln() - 0.5 * sigma * sigma, sigma);
                    *next.smolt_queue.last_mut().expect("non-empty queue") = log_r.exp();
                }
                records.push(rec);
                state = next;
            }
            states.push(records);
            finals.push(state);
        }
        Ok(ModelPath {
            decoded,
            fishing,
            natural,
            states,
            finals,
            recruitment_ln_pdf: rec_lp,
        })
    }

    /// Prior log-density of the structural parameters, excluding latent recruitment.
    pub fn log_prior_parameters(&self, x: &[f64]) -> Result<f64> {
        ensure!(x.len() == self.dim(), Internal, "parameter vector length mismatch");
        let p = &self.spec.priors;
        let la = self.slice(x, "alpha");
        let lb = self.slice(x, "beta");
        let mut lp = 0.0;
        for (i, sr) in p.stock_recruit.iter().enumerate() {
            lp += sr.ln_pdf(la[i], lb[i]);
        }
        for (u, prior) in self.slice(x, "q").iter().zip(&p.catchability) {
            lp += prior.ln_pdf_log(*u);
        }
        lp += p.m_post_smolt.ln_pdf_log(self.slice(x, "m_post_smolt")[0]);
        lp += p.m_adult.ln_pdf_log(self.slice(x, "m_adult")[0]);
        // Beta densities on the probability scale plus the logit Jacobian p (1 - p).
        let beta_on_logit = |u: f64, prior: &BetaPrior| {
            let v = Transform::Logit.to_natural(u);
            beta_ln_pdf(v, prior.a, prior.b) + v.ln() + (1.0 - v).ln()
        };
        if self.spec.ages.max_sea_age > 1 {
            for (u, prior) in self.slice(x, "maturation").iter().zip(&p.maturation) {
                lp += beta_on_logit(*u, prior);
            }
        }
        if !p.m74_survival.is_empty() {
            for (u, prior) in self.slice(x, "s74").iter().zip(&p.m74_survival) {
                lp += beta_on_logit(*u, prior);
            }
        }
        // half-normal on sigma_r, on the log scale
        let ls = self.slice(x, "sigma_r")[0];
        lp += normal_ln_pdf(ls.exp(), 0.0, p.sigma_r_scale) + std::f64::consts::LN_2 + ls;
        let t_delay = self.spec.ages.smolt_delay;
        let big_a = self.spec.ages.max_sea_age;
        let init_smolts = self.slice(x, "init_smolts");
        let init_sea = self.slice(x, "init_sea");
        for i in 0..self.spec.stocks.len() {
            for u in &init_smolts[i * t_delay..(i + 1) * t_delay] {
                lp += p.init_smolts[i].ln_pdf_log(*u);
            }
            for (a, u) in init_sea[i * big_a..(i + 1) * big_a].iter().enumerate() {
                lp += p.init_sea[i][a].ln_pdf_log(*u);
            }
        }
        Ok(lp)
    }

    fn observation_context<'a>(&'a self, path: &'a ModelPath, reared: Option<&'a [Vec<f64>]>, names: &'a [String]) -> ObservationContext<'a> {
        ObservationContext {
            first_year: self.spec.first_year,
            stocks: names,
            fisheries: &self.spec.fisheries,
            fishing: &path.fishing,
            natural: &path.natural,
            maturation: &path.decoded.maturation,
            m74: &path.decoded.m74,
            trajectories: &path.states,
            reared,
            zero_floor: self.spec.zero_floor,
        }
    }

    pub fn log_likelihood_of(&self, path: &ModelPath) -> Result<LoglikBreakdown> {
        let reared = self.spec.reared.as_ref().map(|r| {
            reared_abundance(r, &path.fishing.total, &path.natural, &path.decoded.maturation)
        });
        let names = self.stock_names();
        let ctx = self.observation_context(path, reared.as_deref(), &names);
        total_loglik(&self.spec.observations, &ctx)
    }

    pub fn log_likelihood(&self, x: &[f64]) -> Result<LoglikBreakdown> {
        self.log_likelihood_of(&self.path(x)?)
    }

    /// Prior (including latent recruitment) plus likelihood. Domain failures of
    /// the dynamics yield `-inf`; a malformed vector is an error.
    pub fn log_posterior(&self, x: &[f64]) -> Result<f64> {
        let prior = self.log_prior_parameters(x)?;
        if !prior.is_finite() {
            return Ok(f64::NEG_INFINITY);
        }
        let path = match self.path(x) {
            Ok(p) => p,
            Err(Error::Domain(_)) => return Ok(f64::NEG_INFINITY),
            Err(e) => return Err(e),
        };
        let ll = self.log_likelihood_of(&path)?.total();
        let total = prior + path.recruitment_ln_pdf + ll;
        Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
    }

    /// Sampler blocks: per-stock stock-recruit pairs, per-stock initial states,
    /// latent recruitment by year across stocks, catchability with mortality,
    /// maturation, M74 survival in runs of five years, and `sigma_r`.
    pub fn blocks(&self) -> Vec<Vec<usize>> {
        let reg = &self.registry;
        let ns = self.spec.stocks.len();
        let t_delay = self.spec.ages.smolt_delay;
        let big_a = self.spec.ages.max_sea_age;
        let nl = self.n_latent_years();
        let r = |n: &str| reg.range(n).expect("registered group");
        let mut blocks = Vec::new();
        for i in 0..ns {
            blocks.push(vec![r("alpha").start + i, r("beta").start + i]);
        }
        for i in 0..ns {
            let mut b: Vec<usize> = (r("init_smolts").start + i * t_delay..)
                .take(t_delay)
                .collect();
            b.extend((r("init_sea").start + i * big_a..).take(big_a));
            blocks.push(b);
        }
        let rec = r("recruits").start;
        for k in 0..nl {
            blocks.push((0..ns).map(|i| rec + i * nl + k).collect());
        }
        let mut qm: Vec<usize> = r("q").collect();
        qm.push(r("m_post_smolt").start);
        qm.push(r("m_adult").start);
        blocks.push(qm);
        if big_a > 1 {
            blocks.push(r("maturation").collect());
        }
        if let Ok(s74) = reg.range("s74") {
            let idx: Vec<usize> = s74.collect();
            for chunk in idx.chunks(5) {
                blocks.push(chunk.to_vec());
            }
        }
        blocks.push(vec![r("sigma_r").start]);
        blocks
    }

    /// Starting point near the prior centre, with latent recruitment taken from
    /// smolt likelihood approximations where available.
    pub fn initial_point(&self) -> Vec<f64> {
        let spec = &self.spec;
        let p = &spec.priors;
        let reg = &self.registry;
        let mut x = vec![0.0; self.dim()];
        let r = |n: &str| reg.range(n).expect("registered group");
        for (i, sr) in p.stock_recruit.iter().enumerate() {
            let c = sr.centre();
            x[r("alpha").start + i] = c[0];
            x[r("beta").start + i] = c[1];
        }
        for (k, prior) in r("q").zip(&p.catchability) {
            x[k] = prior.mu;
        }
        x[r("m_post_smolt").start] = p.m_post_smolt.mu;
        x[r("m_adult").start] = p.m_adult.mu;
        if spec.ages.max_sea_age > 1 {
            for (k, prior) in r("maturation").zip(&p.maturation) {
                x[k] = Transform::Logit.to_unconstrained(prior.a / (prior.a + prior.b)).unwrap_or(0.0);
            }
        }
        if let Ok(s74) = reg.range("s74") {
            for (k, prior) in s74.zip(&p.m74_survival) {
                let m = (prior.a / (prior.a + prior.b)).clamp(0.01, 0.99);
                x[k] = Transform::Logit.to_unconstrained(m).unwrap_or(0.0);
            }
        }
        x[r("sigma_r").start] = (0.5 * p.sigma_r_scale).ln();
        let t_delay = spec.ages.smolt_delay;
        let big_a = spec.ages.max_sea_age;
        let nl = self.n_latent_years();
        for i in 0..spec.stocks.len() {
            let smolt_guess = |t: usize, fallback: f64| {
                let year = spec.first_year + t as i32;
                spec.observations
                    .smolts
                    .iter()
                    .find(|s| s.stock == spec.stocks[i].name && s.year == year)
                    .map_or(fallback, |s| s.mu)
            };
            for k in 0..t_delay {
                x[r("init_smolts").start + i * t_delay + k] = smolt_guess(k, p.init_smolts[i].mu);
            }
            for a in 0..big_a {
                x[r("init_sea").start + i * big_a + a] = p.init_sea[i][a].mu;
            }
            for k in 0..nl {
                x[r("recruits").start + i * nl + k] = smolt_guess(k + t_delay, p.init_smolts[i].mu);
            }
        }
        x
    }

    /// Initial proposal sd per coordinate.
    pub fn initial_scales(&self) -> Vec<f64> {
        let mut s = vec![0.05; self.dim()];
        if let Ok(r) = self.registry.range("recruits") {
            for k in r {
                s[k] = 0.1;
            }
        }
        s
    }
}

impl Target for LifeHistoryModel {
    fn dim(&self) -> usize {
        self.registry.dim()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        self.log_posterior(x).unwrap_or(f64::NEG_INFINITY)
    }

    fn explain(&self, x: &[f64]) -> String {
        let prior = match self.log_prior_parameters(x) {
            Ok(p) => p,
            Err(e) => return e.to_string(),
        };
        let path = match self.path(x) {
            Ok(p) => p,
            Err(e) => return format!("prior {prior}; dynamics failed: {e}"),
        };
        match self.log_likelihood_of(&path) {
            Ok(ll) => format!(
                "prior {prior}, recruitment {}, catch {}, tags {}, spawners {}, smolts {}",
                path.recruitment_ln_pdf, ll.catch, ll.tags, ll.spawners, ll.smolts
            ),
            Err(e) => format!("prior {prior}; likelihood failed: {e}"),
        }
    }
}

/// Recruitment innovations `z[stock][k]` implied by a point, the non-centred
/// view of the latent recruitment.
pub fn recruitment_innovations(model: &LifeHistoryModel, x: &[f64]) -> Result<Vec<Vec<f64>>> {
    let path = model.path(x)?;
    let t_delay = model.spec.ages.smolt_delay;
    let sigma = path.decoded.sigma_r;
    path.decoded
        .log_recruits
        .iter()
        .zip(&path.decoded.stocks)
        .zip(&path.states)
        .map(|((logs, stock), states)| {
            logs.iter()
                .enumerate()
                .map(|(k, lr)| {
                    let eggs = states[k].eggs;
                    let _ = t_delay;
                    let m = bh_recruitment(eggs, stock.alpha, stock.beta)?.ln() - 0.5 * sigma * sigma;
                    Ok((lr - m) / sigma)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::observation::{CatchEffortRecord, SmoltLikelihoodApprox, SpawnerCount};

    pub(crate) fn toy_spec(observations: Observations) -> ModelSpec {
        let ages = AgeStructure::new(2, 2).unwrap();
        let fishery = FisheryDef {
            id: "sea".into(),
            catchability: 1e-4,
            selectivity: vec![0.0, 1.0, 1.0],
            reporting_rate: 0.5,
            obs_sd: 0.2,
        };
        let stock = |n: &str| StockSpec {
            name: n.into(),
            fecundity: vec![4000.0, 9000.0],
            female_prop: 0.5,
        };
        let sr = SrPrior {
            joint: BivariateNormal {
                mean: [5.0, -10.0],
                cov: [[0.25, 0.05], [0.05, 0.5]],
            },
            pspc: Some(LognormalPrior { mu: 10.0, sd: 0.5 }),
        };
        let ln = |mu: f64, sd: f64| LognormalPrior { mu, sd };
        ModelSpec {
            ages,
            first_year: 2000,
            n_years: 6,
            stocks: vec![stock("a"), stock("b")],
            fisheries: vec![fishery],
            effort: vec![vec![1000.0, 1200.0, 900.0, 1100.0, 1000.0, 800.0]],
            reared: None,
            observations,
            priors: LifeHistoryPriors {
                stock_recruit: vec![sr.clone(), sr],
                catchability: vec![ln(1e-4f64.ln(), 0.5)],
                m_post_smolt: ln(1.0f64.ln(), 0.3),
                m_adult: ln(0.1f64.ln(), 0.3),
                maturation: vec![BetaPrior { a: 2.0, b: 8.0 }],
                m74_survival: vec![BetaPrior { a: 9.0, b: 1.0 }; 6],
                sigma_r_scale: 0.5,
                init_smolts: vec![ln(9.0, 1.0); 2],
                init_sea: vec![vec![ln(7.0, 1.0), ln(6.0, 1.0)]; 2],
            },
            fixed_noise: ProcessNoise::default(),
            zero_floor: 0.5,
            m74_history: vec![],
        }
    }

    #[test]
    fn registry_covers_everything_once() {
        let m = LifeHistoryModel::new(toy_spec(Observations::default())).unwrap();
        // alpha 2, beta 2, q 1, m 2, maturation 1, s74 6, sigma 1, init smolts 4, init sea 4, recruits 8
        assert_eq!(m.dim(), 31);
        let mut seen = vec![0; m.dim()];
        for b in m.blocks() {
            for i in b {
                seen[i] += 1;
            }
        }
        assert!(seen.iter().all(|c| *c == 1), "{seen:?}");
    }

    #[test]
    fn empty_data_gives_prior_only() {
        let m = LifeHistoryModel::new(toy_spec(Observations::default())).unwrap();
        let x = m.initial_point();
        let path = m.path(&x).unwrap();
        let lp = m.log_posterior(&x).unwrap();
        let prior = m.log_prior_parameters(&x).unwrap() + path.recruitment_ln_pdf;
        assert_eq!(lp, prior);
        assert_eq!(m.log_posterior(&x).unwrap().to_bits(), lp.to_bits());
    }

    #[test]
    fn posterior_decomposes() {
        let obs = Observations {
            catch: vec![CatchEffortRecord { fishery: "sea".into(), year: 2003, effort: 1100.0, catch: Some(150.0) }],
            tags: vec![],
            spawners: vec![SpawnerCount { stock: "b".into(), year: 2004, count: 300.0, cv: 0.3 }],
            smolts: vec![SmoltLikelihoodApprox { stock: "a".into(), year: 2002, mu: 9.0, sd: 0.2 }],
        };
        let m = LifeHistoryModel::new(toy_spec(obs)).unwrap();
        let x = m.initial_point();
        let ll = m.log_likelihood(&x).unwrap();
        assert!(ll.catch.is_finite() && ll.catch != 0.0);
        assert!(ll.spawners != 0.0 && ll.smolts != 0.0);
        let path = m.path(&x).unwrap();
        let total = m.log_prior_parameters(&x).unwrap() + path.recruitment_ln_pdf + ll.total();
        assert!((m.log_posterior(&x).unwrap() - total).abs() <= 1e-9 * total.abs());
    }

    #[test]
    fn latent_recruits_replace_stock_recruit_output() {
        let m = LifeHistoryModel::new(toy_spec(Observations::default())).unwrap();
        let mut x = m.initial_point();
        let r = m.registry().range("recruits").unwrap();
        x[r.start] = 8.0;
        let path = m.path(&x).unwrap();
        // first latent cohort of stock a smolts in year first_year + smolt_delay
        assert!((path.states[0][2].smolts - 8f64.exp()).abs() < 1e-9);
        let z = recruitment_innovations(&m, &x).unwrap();
        assert_eq!(z.len(), 2);
        assert_eq!(z[0].len(), 4);
    }

    #[test]
    fn wrong_length_is_internal_error() {
        let m = LifeHistoryModel::new(toy_spec(Observations::default())).unwrap();
        assert!(matches!(m.log_posterior(&[0.0; 3]), Err(Error::Internal(_))));
    }

    #[test]
    fn serde_round_trip_rebuilds_registry() {
        let m = LifeHistoryModel::new(toy_spec(Observations::default())).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: LifeHistoryModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back.registry().names(), m.registry().names());
    }
}
