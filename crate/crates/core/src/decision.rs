//! Forward projection of posterior draws under harvest policies.
//!
//! Each retained draw is stepped forward from the state it implies at the end
//! of the data, with fresh recruitment noise and M74 survival drawn from the
//! historical M74 posteriors. A policy scales the effort of the last observed
//! year (the status quo). Draw `k` always uses the random stream derived from
//! `(seed, k)`, so every policy sees the same noise.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::write_csv;
use crate::dynamics::{
    step_population, Innovations, MaturationSchedule, PopulationState, ProcessNoise, StockParams,
    YearInputs,
};
use crate::error::{ensure, Error, Result};
use crate::mcmc::PosteriorChain;
use crate::model::LifeHistoryModel;
use crate::observation::expected_catch;
use crate::priors::{sample_m74_survival, M74YearPosterior};
use crate::stats::{derive_seed_index, mean_one_noise, quantile_sorted};

/// Depletion ratio below which a stock counts as collapsed. Artifact policy,
/// not an established reference point.
pub const COLLAPSE_THRESHOLD: f64 = 0.1;
pub const THRESHOLDS: [f64; 2] = [0.5, 0.75];
pub const DEFAULT_HORIZON: usize = 6;
/// First and last projection year of the headline window, 1-based.
pub const WINDOW: (usize, usize) = (4, 6);

/// Effort multiplier for a fishery: one value for every year or one per year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Multiplier {
    Constant(f64),
    Yearly(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub name: String,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    /// Fisheries not listed keep their status-quo effort.
    #[serde(default)]
    pub multipliers: BTreeMap<String, Multiplier>,
}

fn default_horizon() -> usize {
    DEFAULT_HORIZON
}

/// One problem with a policy, tied to the offending field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl Policy {
    pub fn uniform(name: &str, multiplier: f64, fisheries: &[String]) -> Self {
        Self {
            name: name.to_string(),
            horizon: DEFAULT_HORIZON,
            multipliers: fisheries
                .iter()
                .map(|f| (f.clone(), Multiplier::Constant(multiplier)))
                .collect(),
        }
    }

    pub fn status_quo(fisheries: &[String]) -> Self {
        Self::uniform("status_quo", 1.0, fisheries)
    }

    pub fn moratorium(fisheries: &[String]) -> Self {
        Self::uniform("moratorium", 0.0, fisheries)
    }

    /// Field-level problems; empty when the policy is usable.
    pub fn check(&self, fisheries: &[String]) -> Vec<FieldError> {
        let mut errs = Vec::new();
        let mut err = |field: String, message: String| errs.push(FieldError { field, message });
        if self.name.trim().is_empty() {
            err("name".into(), "must not be empty".into());
        }
        if self.horizon == 0 {
            err("horizon".into(), "must be at least 1".into());
        }
        if self.horizon > 100 {
            err("horizon".into(), "must be at most 100".into());
        }
        for (f, m) in &self.multipliers {
            let field = format!("multipliers.{f}");
            if !fisheries.contains(f) {
                err(field.clone(), format!("unknown fishery; expected one of {}", fisheries.join(", ")));
            }
            let values: &[f64] = match m {
                Multiplier::Constant(v) => std::slice::from_ref(v),
                Multiplier::Yearly(v) => {
                    if v.len() != self.horizon {
                        err(field.clone(), format!("needs {} yearly values, got {}", self.horizon, v.len()));
                    }
                    v
                }
            };
            if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
                err(field, "multipliers must be finite and nonnegative".into());
            }
        }
        errs
    }

    pub fn validate(&self, fisheries: &[String]) -> Result<()> {
        let errs = self.check(fisheries);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "policy {:?}: {}",
                self.name,
                errs.iter()
                    .map(|e| format!("{}: {}", e.field, e.message))
                    .collect::<Vec<_>>()
                    .join("; ")
            )))
        }
    }

    fn multiplier(&self, fishery: &str, h: usize) -> f64 {
        match self.multipliers.get(fishery) {
            None => 1.0,
            Some(Multiplier::Constant(v)) => *v,
            Some(Multiplier::Yearly(v)) => v[h],
        }
    }
}

/// Parameters and end-of-data state of one posterior draw.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawStart {
    pub stocks: Vec<StockParams>,
    pub catchability: Vec<f64>,
    pub m_post_smolt: f64,
    pub m_adult: f64,
    pub maturation: MaturationSchedule,
    pub sigma_r: f64,
    pub states: Vec<PopulationState>,
}

/// Draw starts plus the fixed inputs every projection needs.
#[derive(Debug, Clone)]
pub struct ProjectionContext {
    pub stocks: Vec<String>,
    pub fisheries: Vec<String>,
    pub selectivity: Vec<Vec<f64>>,
    /// Status-quo effort per fishery: the last model year.
    pub base_effort: Vec<f64>,
    pub last_year: i32,
    pub fixed_noise: ProcessNoise,
    pub m74_history: Vec<M74YearPosterior>,
    pub draws: Vec<DrawStart>,
}

impl ProjectionContext {
    /// `draws` are unconstrained parameter vectors of `model`.
    pub fn new(model: &LifeHistoryModel, draws: &[Vec<f64>]) -> Result<Self> {
        let spec = model.spec();
        let starts = draws
            .par_iter()
            .map(|x| {
                let path = model.path(x)?;
                let d = path.decoded;
                Ok(DrawStart {
                    stocks: d.stocks,
                    catchability: d.catchability,
                    m_post_smolt: d.m_post_smolt,
                    m_adult: d.m_adult,
                    maturation: d.maturation,
                    sigma_r: d.sigma_r,
                    states: path.finals,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            stocks: model.stock_names(),
            fisheries: spec.fisheries.iter().map(|f| f.id.clone()).collect(),
            selectivity: spec.fisheries.iter().map(|f| f.selectivity.clone()).collect(),
            base_effort: spec.effort.iter().map(|e| *e.last().unwrap_or(&0.0)).collect(),
            last_year: spec.first_year + spec.n_years as i32 - 1,
            fixed_noise: spec.fixed_noise,
            m74_history: spec.m74_history.clone(),
            draws: starts,
        })
    }

    pub fn from_chains(model: &LifeHistoryModel, chains: &[PosteriorChain]) -> Result<Self> {
        let draws: Vec<Vec<f64>> = chains.iter().flat_map(|c| c.draws.iter().cloned()).collect();
        Self::new(model, &draws)
    }

    /// Keeps the draws at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            draws: indices.iter().map(|&i| self.draws[i].clone()).collect(),
            ..self.clone()
        }
    }
}

/// Quantiles at 5, 25, 50, 75 and 95 percent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileSet {
    pub q05: f64,
    pub q25: f64,
    pub q50: f64,
    pub q75: f64,
    pub q95: f64,
}

impl QuantileSet {
    pub fn from_values(values: &mut [f64]) -> Self {
        values.sort_by(f64::total_cmp);
        let q = |p| quantile_sorted(values, p);
        Self {
            q05: q(0.05),
            q25: q(0.25),
            q50: q(0.5),
            q75: q(0.75),
            q95: q(0.95),
        }
    }

    pub fn as_array(&self) -> [f64; 5] {
        [self.q05, self.q25, self.q50, self.q75, self.q95]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockProjection {
    pub stock: String,
    pub smolts: Vec<QuantileSet>,
    pub ratio: Vec<QuantileSet>,
    /// Probability that the depletion ratio reaches 0.5 in some window year.
    pub p_reach_50: f64,
    pub p_reach_75: f64,
    /// Probability of falling below the collapse threshold in some window year.
    pub p_collapse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub policy: Policy,
    pub seed: u64,
    pub n_draws: usize,
    pub years: Vec<i32>,
    /// Projection years (1-based) forming the probability window.
    pub window: [usize; 2],
    pub collapse_threshold: f64,
    pub stocks: Vec<StockProjection>,
    pub expected_cumulative_catch: f64,
    pub p_any_collapse: f64,
}

/// Per-draw outcome: `smolts[stock][h]`, `ratio[stock][h]`, cumulative catch.
struct DrawOutcome {
    smolts: Vec<Vec<f64>>,
    ratio: Vec<Vec<f64>>,
    catch: f64,
}

fn project_draw(ctx: &ProjectionContext, d: &DrawStart, policy: &Policy, seed: u64) -> Result<DrawOutcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ages = d.maturation.rates().len();
    let horizon = policy.horizon;
    let noise = ProcessNoise {
        sigma_r: d.sigma_r,
        ..ctx.fixed_noise
    };
    let mut states = d.states.clone();
    // Queued cohorts past the data were stored at their stock-recruit expectation.
    for st in states.iter_mut() {
        for r in st.smolt_queue.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut rng);
            *r *= mean_one_noise(d.sigma_r, z);
        }
    }
    let mut smolts = vec![Vec::with_capacity(horizon); states.len()];
    let mut ratio = vec![Vec::with_capacity(horizon); states.len()];
    let mut catch = 0.0;
    let natural: Vec<f64> = (0..=ages)
        .map(|a| if a == 0 { d.m_post_smolt } else { d.m_adult })
        .collect();
    for h in 0..horizon {
        let s74 = sample_m74_survival(&ctx.m74_history, &mut rng);
        let mut by_fishery = vec![vec![0.0; ages + 1]; ctx.fisheries.len()];
        let mut fishing = vec![0.0; ages + 1];
        for (fi, f) in ctx.fisheries.iter().enumerate() {
            let e = ctx.base_effort[fi] * policy.multiplier(f, h);
            for a in 0..=ages {
                by_fishery[fi][a] = d.catchability[fi] * e * ctx.selectivity[fi][a];
                fishing[a] += by_fishery[fi][a];
            }
        }
        let inputs = YearInputs {
            fishing: &fishing,
            natural: &natural,
            m74_survival: s74,
        };
        for (i, st) in states.iter_mut().enumerate() {
            let innov = Innovations {
                recruitment: StandardNormal.sample(&mut rng),
                sea: (0..ages).map(|_| StandardNormal.sample(&mut rng)).collect(),
                spawning: (0..ages).map(|_| StandardNormal.sample(&mut rng)).collect(),
            };
            let (next, rec) = step_population(st, &d.stocks[i], &d.maturation, &inputs, &noise, &innov)?;
            catch += expected_catch(rec.smolts * s74, fishing[0], natural[0])?;
            for a in 1..=ages {
                catch += expected_catch(rec.sea[a - 1], fishing[a], natural[a])?;
            }
            smolts[i].push(rec.smolts);
            ratio[i].push(rec.smolts * d.stocks[i].beta);
            *st = next;
        }
    }
    Ok(DrawOutcome { smolts, ratio, catch })
}

fn window(horizon: usize) -> (usize, usize) {
    (WINDOW.0.min(horizon), WINDOW.1.min(horizon))
}

fn run_draws(ctx: &ProjectionContext, policy: &Policy, seed: u64) -> Result<Vec<DrawOutcome>> {
    ensure!(!ctx.draws.is_empty(), Validation, "no posterior draws to project");
    policy.validate(&ctx.fisheries)?;
    ctx.draws
        .par_iter()
        .enumerate()
        .map(|(k, d)| project_draw(ctx, d, policy, derive_seed_index(seed, k as u64)))
        .collect()
}

fn summarise(ctx: &ProjectionContext, policy: &Policy, seed: u64, out: &[DrawOutcome]) -> ProjectionResult {
    let n = out.len() as f64;
    let (w0, w1) = window(policy.horizon);
    let in_window = |r: &[f64]| r[w0 - 1..w1].to_vec();
    let mut any_collapse = 0usize;
    for o in out {
        if o.ratio.iter().any(|r| in_window(r).iter().any(|v| *v < COLLAPSE_THRESHOLD)) {
            any_collapse += 1;
        }
    }
    let stocks = ctx
        .stocks
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let per_year = |pick: &dyn Fn(&DrawOutcome) -> f64| {
                let mut v: Vec<f64> = out.iter().map(pick).collect();
                QuantileSet::from_values(&mut v)
            };
            let smolts = (0..policy.horizon).map(|h| per_year(&|o| o.smolts[i][h])).collect();
            let ratio = (0..policy.horizon).map(|h| per_year(&|o| o.ratio[i][h])).collect();
            let best: Vec<f64> = out
                .iter()
                .map(|o| in_window(&o.ratio[i]).into_iter().fold(f64::NEG_INFINITY, f64::max))
                .collect();
            let worst: Vec<f64> = out
                .iter()
                .map(|o| in_window(&o.ratio[i]).into_iter().fold(f64::INFINITY, f64::min))
                .collect();
            let frac = |c: usize| c as f64 / n;
            StockProjection {
                stock: name.clone(),
                smolts,
                ratio,
                p_reach_50: frac(best.iter().filter(|b| **b >= THRESHOLDS[0]).count()),
                p_reach_75: frac(best.iter().filter(|b| **b >= THRESHOLDS[1]).count()),
                p_collapse: frac(worst.iter().filter(|w| **w < COLLAPSE_THRESHOLD).count()),
            }
        })
        .collect();
    ProjectionResult {
        policy: policy.clone(),
        seed,
        n_draws: out.len(),
        years: (1..=policy.horizon as i32).map(|h| ctx.last_year + h).collect(),
        window: [w0, w1],
        collapse_threshold: COLLAPSE_THRESHOLD,
        stocks,
        expected_cumulative_catch: out.iter().map(|o| o.catch).sum::<f64>() / n,
        p_any_collapse: any_collapse as f64 / n,
    }
}

/// Projects every draw in `ctx` under `policy`. Deterministic in `(ctx, policy, seed)`.
pub fn project(ctx: &ProjectionContext, policy: &Policy, seed: u64) -> Result<ProjectionResult> {
    let out = run_draws(ctx, policy, seed)?;
    Ok(summarise(ctx, policy, seed, &out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionRow {
    pub policy: String,
    /// `(stock, probability)` of reaching half of PSPC in the window.
    pub p_reach_50: Vec<(String, f64)>,
    pub p_reach_75: Vec<(String, f64)>,
    pub expected_cumulative_catch: f64,
    pub p_any_collapse: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DecisionTable {
    pub seed: u64,
    pub collapse_threshold: f64,
    pub rows: Vec<DecisionRow>,
}

impl DecisionTable {
    /// Policy with the highest mean probability of reaching half of PSPC.
    pub fn best_for_p50(&self) -> Option<&str> {
        self.rows
            .iter()
            .map(|r| {
                let m = r.p_reach_50.iter().map(|(_, p)| p).sum::<f64>() / r.p_reach_50.len().max(1) as f64;
                (r.policy.as_str(), m)
            })
            .fold(None, |best: Option<(&str, f64)>, (n, m)| match best {
                Some((_, bm)) if bm >= m => best,
                _ => Some((n, m)),
            })
            .map(|(n, _)| n)
    }

    /// One line per policy and stock.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        #[derive(Serialize)]
        struct Row<'a> {
            policy: &'a str,
            stock: &'a str,
            p_reach_50: f64,
            p_reach_75: f64,
            expected_cumulative_catch: f64,
            p_any_collapse: f64,
        }
        let rows: Vec<Row> = self
            .rows
            .iter()
            .flat_map(|r| {
                r.p_reach_50.iter().zip(&r.p_reach_75).map(move |((s, p50), (_, p75))| Row {
                    policy: &r.policy,
                    stock: s,
                    p_reach_50: *p50,
                    p_reach_75: *p75,
                    expected_cumulative_catch: r.expected_cumulative_catch,
                    p_any_collapse: r.p_any_collapse,
                })
            })
            .collect();
        write_csv(
            path,
            &["policy", "stock", "p_reach_50", "p_reach_75", "expected_cumulative_catch", "p_any_collapse"],
            &rows,
        )
    }
}

/// One row per policy, all projected with the same seed so rows differ only
/// through the policies.
pub fn compare_policies(ctx: &ProjectionContext, policies: &[Policy], seed: u64) -> Result<DecisionTable> {
    let mut names = BTreeSet::new();
    for p in policies {
        ensure!(names.insert(p.name.as_str()), Validation, "duplicate policy name {:?}", p.name);
    }
    let rows = policies
        .iter()
        .map(|p| {
            let r = project(ctx, p, seed)?;
            Ok(DecisionRow {
                policy: p.name.clone(),
                p_reach_50: r.stocks.iter().map(|s| (s.stock.clone(), s.p_reach_50)).collect(),
                p_reach_75: r.stocks.iter().map(|s| (s.stock.clone(), s.p_reach_75)).collect(),
                expected_cumulative_catch: r.expected_cumulative_catch,
                p_any_collapse: r.p_any_collapse,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DecisionTable {
        seed,
        collapse_threshold: COLLAPSE_THRESHOLD,
        rows,
    })
}
