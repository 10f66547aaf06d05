//! Observation models linking latent stock states to catch, tag, spawner and
//! smolt data.
//!
//! Fishing mortality is effort-proportional with age selectivity and catches
//! follow the Baranov equation. Log-normal terms are expressed as densities of
//! the log-observation, with a mean correction so that the observation mean
//! equals the model expectation.

use serde::{Deserialize, Serialize};

use crate::dynamics::{MaturationSchedule, StockState};
use crate::error::{ensure, Error, Result};
use crate::stats::{ln_factorial, normal_ln_pdf};

/// Default replacement for zero observations on the log scale, in fish.
pub const DEFAULT_ZERO_FLOOR: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisheryDef {
    pub id: String,
    /// Catchability per unit effort. Used as the true value when simulating.
    pub catchability: f64,
    /// Selectivity by sea-age `0..=max_sea_age`.
    pub selectivity: Vec<f64>,
    /// Probability that a recovered tag is reported.
    pub reporting_rate: f64,
    /// Log-scale observation sd of the catch series.
    pub obs_sd: f64,
}

impl FisheryDef {
    pub fn validate(&self, rate_ages: usize) -> Result<()> {
        ensure!(
            self.catchability.is_finite() && self.catchability > 0.0,
            Validation,
            "fishery {}: catchability must be positive",
            self.id
        );
        ensure!(
            self.selectivity.len() == rate_ages,
            Dimension,
            "fishery {}: selectivity needs {} sea-age entries, got {}",
            self.id,
            rate_ages,
            self.selectivity.len()
        );
        ensure!(
            self.selectivity.iter().all(|s| (0.0..=1.0).contains(s)),
            Validation,
            "fishery {}: selectivity must lie in [0, 1]",
            self.id
        );
        ensure!(
            (0.0..=1.0).contains(&self.reporting_rate),
            Validation,
            "fishery {}: reporting rate must lie in [0, 1]",
            self.id
        );
        ensure!(
            self.obs_sd.is_finite() && self.obs_sd > 0.0,
            Validation,
            "fishery {}: catch observation sd must be positive",
            self.id
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatchEffortRecord {
    pub fishery: String,
    pub year: i32,
    pub effort: f64,
    /// Observed catch in fish; `None` marks a missing cell.
    pub catch: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReleaseType {
    Wild,
    Reared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagRecovery {
    pub fishery: String,
    pub year: i32,
    pub count: u64,
}

/// A batch of Carlin-tagged smolts released together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagCohort {
    pub id: String,
    pub release_year: i32,
    pub released: u64,
    pub label: ReleaseType,
    pub recoveries: Vec<TagRecovery>,
}

impl TagCohort {
    pub fn validate(&self) -> Result<()> {
        ensure!(self.released > 0, Validation, "tag cohort {}: no fish released", self.id);
        let recovered: u64 = self.recoveries.iter().map(|r| r.count).sum();
        ensure!(
            recovered <= self.released,
            Validation,
            "tag cohort {}: {recovered} recoveries exceed {} releases",
            self.id,
            self.released
        );
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpawnerCount {
    pub stock: String,
    pub year: i32,
    pub count: f64,
    pub cv: f64,
}

/// Log-normal summary of a smolt-abundance posterior used as a likelihood for `R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoltLikelihoodApprox {
    pub stock: String,
    pub year: i32,
    pub mu: f64,
    pub sd: f64,
}

/// Fishing mortality of one fishery on one sea-age: `q * E * s_a`.
pub fn fishing_mortality(catchability: f64, effort: f64, selectivity: f64) -> Result<f64> {
    ensure!(
        effort.is_finite() && effort >= 0.0,
        Domain,
        "effort must be finite and nonnegative, got {effort}"
    );
    ensure!(
        catchability.is_finite() && catchability >= 0.0,
        Domain,
        "catchability must be nonnegative, got {catchability}"
    );
    Ok(catchability * effort * selectivity)
}

/// Fishing mortality indexed `[fishery][year][sea_age]` together with the total `[year][sea_age]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FishingMortality {
    pub by_fishery: Vec<Vec<Vec<f64>>>,
    pub total: Vec<Vec<f64>>,
}

impl FishingMortality {
    /// `efforts` is indexed `[fishery][year]`.
    pub fn from_effort(
        fisheries: &[FisheryDef],
        catchability: &[f64],
        efforts: &[Vec<f64>],
    ) -> Result<Self> {
        ensure!(
            fisheries.len() == catchability.len() && fisheries.len() == efforts.len(),
            Dimension,
            "fisheries, catchabilities and effort series must have equal length"
        );
        let years = efforts.first().map_or(0, Vec::len);
        let ages = fisheries.first().map_or(0, |f| f.selectivity.len());
        let mut total = vec![vec![0.0; ages]; years];
        let mut by_fishery = Vec::with_capacity(fisheries.len());
        for ((fishery, &q), effort) in fisheries.iter().zip(catchability).zip(efforts) {
            ensure!(
                effort.len() == years,
                Dimension,
                "fishery {}: effort series length {} differs from {years}",
                fishery.id,
                effort.len()
            );
            let mut rates = vec![vec![0.0; ages]; years];
            for (t, &e) in effort.iter().enumerate() {
                for (a, &s) in fishery.selectivity.iter().enumerate() {
                    let f = fishing_mortality(q, e, s)?;
                    rates[t][a] = f;
                    total[t][a] += f;
                }
            }
            by_fishery.push(rates);
        }
        Ok(Self { by_fishery, total })
    }
}

/// Baranov catch `F / (F + M) * (1 - exp(-(F + M))) * N`; zero when `F + M = 0`.
pub fn expected_catch(n: f64, f: f64, m: f64) -> Result<f64> {
    ensure!(
        n.is_finite() && n >= 0.0,
        Domain,
        "abundance must be finite and nonnegative, got {n}"
    );
    ensure!(
        f >= 0.0 && m >= 0.0 && f.is_finite() && m.is_finite(),
        Domain,
        "mortality rates must be nonnegative (F={f}, M={m})"
    );
    let z = f + m;
    if z == 0.0 {
        return Ok(0.0);
    }
    Ok(f / z * (-(-z).exp_m1()) * n)
}

/// Log-density of the log of observed catch:
/// `log C_obs ~ Normal(log C - sd^2 / 2, sd)`. Zero catches are replaced by `floor`.
pub fn loglik_catch(observed: f64, expected: f64, sd: f64, floor: f64) -> f64 {
    lognormal_mean_ln_pdf(observed, expected, sd, floor)
}

/// Spawner counts are log-normal around the expected total with the given cv.
pub fn loglik_spawner_count(count: f64, expected: f64, cv: f64, floor: f64) -> f64 {
    let sd = (1.0 + cv * cv).ln().sqrt();
    lognormal_mean_ln_pdf(count, expected, sd, floor)
}

fn lognormal_mean_ln_pdf(observed: f64, expected: f64, sd: f64, floor: f64) -> f64 {
    if !(expected > 0.0) {
        return if observed > 0.0 {
            f64::NEG_INFINITY
        } else {
            0.0
        };
    }
    let y = observed.max(floor);
    normal_ln_pdf(y.ln(), expected.ln() - 0.5 * sd * sd, sd)
}

pub fn loglik_smolt_approx(smolts: f64, approx: &SmoltLikelihoodApprox) -> f64 {
    if !(smolts > 0.0) {
        return f64::NEG_INFINITY;
    }
    normal_ln_pdf(smolts.ln(), approx.mu, approx.sd)
}

/// Probability that a tag released in year `release` is reported by fishery `f`
/// in year `release + k`, indexed `[fishery][k]` for every remaining model year.
///
/// A tagged fish is a post-smolt in its release year. Fish that mature leave the
/// sea fishery after that year's catch.
pub fn tag_cell_probabilities(
    release: usize,
    fishing: &FishingMortality,
    natural: &[Vec<f64>],
    maturation: &MaturationSchedule,
    reporting: &[f64],
) -> Vec<Vec<f64>> {
    let years = fishing.total.len();
    let max_age = maturation.rates().len();
    let n_fisheries = fishing.by_fishery.len();
    let span = years.saturating_sub(release).min(max_age + 1);
    let mut cells = vec![vec![0.0; span]; n_fisheries];
    let mut alive = 1.0;
    for k in 0..span {
        let t = release + k;
        let f_total = fishing.total[t][k];
        let z = f_total + natural[t][k];
        let dying = -(-z).exp_m1();
        for (fi, row) in cells.iter_mut().enumerate() {
            let f = fishing.by_fishery[fi][t][k];
            if z > 0.0 {
                row[k] = alive * f / z * dying * reporting[fi];
            }
        }
        let staying = if k == 0 { 1.0 } else { 1.0 - maturation.at(k) };
        alive *= (-z).exp() * staying;
    }
    cells
}

/// Multinomial log-probability of recovery counts `[fishery][k]` given cell
/// probabilities, with the never-reported remainder as the last cell.
pub fn loglik_tags(released: u64, counts: &[Vec<u64>], probs: &[Vec<f64>]) -> Result<f64> {
    ensure!(
        counts.len() == probs.len()
            && counts.iter().zip(probs).all(|(c, p)| c.len() == p.len()),
        Dimension,
        "recovery counts and cell probabilities differ in shape"
    );
    let total_p: f64 = probs.iter().flatten().sum();
    if !(total_p <= 1.0 + 1e-9) || probs.iter().flatten().any(|p| *p < 0.0) {
        return Err(Error::Internal(format!(
            "tag cell probabilities sum to {total_p}"
        )));
    }
    let recovered: u64 = counts.iter().flatten().sum();
    ensure!(
        recovered <= released,
        Validation,
        "{recovered} recoveries exceed {released} releases"
    );
    let never = released - recovered;
    let p_never = (1.0 - total_p).max(0.0);
    let mut ll = ln_factorial(released) - ln_factorial(never);
    for (c, p) in counts.iter().flatten().zip(probs.iter().flatten()) {
        if *c > 0 {
            if *p <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            ll += *c as f64 * p.ln() - ln_factorial(*c);
        }
    }
    if never > 0 {
        if p_never <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        ll += never as f64 * p_never.ln();
    }
    Ok(ll)
}

/// Deterministic sea abundance `[year][sea_age]` of reared smolt releases, used
/// only to add reared fish to expected catches.
pub fn reared_abundance(
    releases: &[f64],
    fishing_total: &[Vec<f64>],
    natural: &[Vec<f64>],
    maturation: &MaturationSchedule,
) -> Vec<Vec<f64>> {
    let years = fishing_total.len();
    let ages = maturation.rates().len();
    let mut n = vec![vec![0.0; ages + 1]; years];
    for t in 0..years {
        n[t][0] = releases.get(t).copied().unwrap_or(0.0);
        if t + 1 < years {
            for a in 0..ages {
                let staying = if a == 0 { 1.0 } else { 1.0 - maturation.at(a) };
                n[t + 1][a + 1] =
                    n[t][a] * staying * (-fishing_total[t][a] - natural[t][a]).exp();
            }
        }
    }
    n
}

/// Everything the likelihood needs to know about the latent process.
pub struct ObservationContext<'a> {
    pub first_year: i32,
    pub stocks: &'a [String],
    pub fisheries: &'a [FisheryDef],
    pub fishing: &'a FishingMortality,
    /// Natural mortality `[year][sea_age]`.
    pub natural: &'a [Vec<f64>],
    pub maturation: &'a MaturationSchedule,
    pub m74: &'a [f64],
    /// Yearly states `[stock][year]`.
    pub trajectories: &'a [Vec<StockState>],
    /// Reared abundance `[year][sea_age]` exposed to the fisheries.
    pub reared: Option<&'a [Vec<f64>]>,
    pub zero_floor: f64,
}

impl ObservationContext<'_> {
    fn year_index(&self, year: i32) -> Option<usize> {
        let t = year - self.first_year;
        (t >= 0 && (t as usize) < self.fishing.total.len()).then_some(t as usize)
    }

    fn stock_index(&self, stock: &str) -> Option<usize> {
        self.stocks.iter().position(|s| s == stock)
    }

    fn fishery_index(&self, id: &str) -> Option<usize> {
        self.fisheries.iter().position(|f| f.id == id)
    }

    /// Expected catch of every fishery in model year `t`, wild and reared fish combined.
    pub fn expected_catch_by_fishery(&self, t: usize) -> Result<Vec<f64>> {
        let f_total = &self.fishing.total[t];
        let m = &self.natural[t];
        let ages = f_total.len();
        let mut removals = vec![0.0; ages];
        for traj in self.trajectories {
            let state = &traj[t];
            removals[0] += expected_catch(state.smolts * self.m74[t], f_total[0], m[0])?;
            for a in 1..ages {
                removals[a] += expected_catch(state.sea[a - 1], f_total[a], m[a])?;
            }
        }
        if let Some(reared) = self.reared {
            for a in 0..ages {
                removals[a] += expected_catch(reared[t][a], f_total[a], m[a])?;
            }
        }
        Ok(self
            .fishing
            .by_fishery
            .iter()
            .map(|rates| {
                (0..ages)
                    .filter(|&a| f_total[a] > 0.0)
                    .map(|a| removals[a] * rates[t][a] / f_total[a])
                    .sum()
            })
            .collect())
    }
}

/// Per-source log-likelihood totals.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoglikBreakdown {
    pub catch: f64,
    pub tags: f64,
    pub spawners: f64,
    pub smolts: f64,
}

impl LoglikBreakdown {
    pub fn total(&self) -> f64 {
        self.catch + self.tags + self.spawners + self.smolts
    }
}

pub fn loglik_catch_series(records: &[CatchEffortRecord], ctx: &ObservationContext<'_>) -> Result<f64> {
    let mut cache: Vec<Option<Vec<f64>>> = vec![None; ctx.fishing.total.len()];
    let mut ll = 0.0;
    for rec in records {
        let Some(observed) = rec.catch.filter(|c| c.is_finite()) else {
            continue;
        };
        let t = ctx
            .year_index(rec.year)
            .ok_or_else(|| Error::Validation(format!("catch year {} outside model years", rec.year)))?;
        let fi = ctx
            .fishery_index(&rec.fishery)
            .ok_or_else(|| Error::Validation(format!("unknown fishery {}", rec.fishery)))?;
        if cache[t].is_none() {
            cache[t] = Some(ctx.expected_catch_by_fishery(t)?);
        }
        let expected = cache[t].as_ref().unwrap()[fi];
        ll += loglik_catch(observed, expected, ctx.fisheries[fi].obs_sd, ctx.zero_floor);
    }
    Ok(ll)
}

pub fn loglik_tag_cohorts(cohorts: &[TagCohort], ctx: &ObservationContext<'_>) -> Result<f64> {
    let reporting: Vec<f64> = ctx.fisheries.iter().map(|f| f.reporting_rate).collect();
    let mut ll = 0.0;
    for cohort in cohorts {
        let release = ctx.year_index(cohort.release_year).ok_or_else(|| {
            Error::Validation(format!(
                "tag cohort {} released outside model years",
                cohort.id
            ))
        })?;
        let probs =
            tag_cell_probabilities(release, ctx.fishing, ctx.natural, ctx.maturation, &reporting);
        let span = probs.first().map_or(0, Vec::len);
        let mut counts = vec![vec![0u64; span]; probs.len()];
        for rec in &cohort.recoveries {
            let fi = ctx
                .fishery_index(&rec.fishery)
                .ok_or_else(|| Error::Validation(format!("unknown fishery {}", rec.fishery)))?;
            let k = rec.year - cohort.release_year;
            if k < 0 || k as usize >= span {
                if rec.count > 0 {
                    return Ok(f64::NEG_INFINITY);
                }
                continue;
            }
            counts[fi][k as usize] += rec.count;
        }
        ll += loglik_tags(cohort.released, &counts, &probs)?;
    }
    Ok(ll)
}

pub fn loglik_spawner_series(counts: &[SpawnerCount], ctx: &ObservationContext<'_>) -> Result<f64> {
    let mut ll = 0.0;
    for rec in counts {
        if !rec.count.is_finite() {
            continue;
        }
        let t = ctx.year_index(rec.year).ok_or_else(|| {
            Error::Validation(format!("spawner count year {} outside model years", rec.year))
        })?;
        let i = ctx
            .stock_index(&rec.stock)
            .ok_or_else(|| Error::Validation(format!("unknown stock {}", rec.stock)))?;
        let expected = ctx.trajectories[i][t].total_spawners();
        ll += loglik_spawner_count(rec.count, expected, rec.cv, ctx.zero_floor);
    }
    Ok(ll)
}

pub fn loglik_smolt_series(approx: &[SmoltLikelihoodApprox], ctx: &ObservationContext<'_>) -> Result<f64> {
    let mut ll = 0.0;
    for rec in approx {
        let t = ctx.year_index(rec.year).ok_or_else(|| {
            Error::Validation(format!("smolt estimate year {} outside model years", rec.year))
        })?;
        let i = ctx
            .stock_index(&rec.stock)
            .ok_or_else(|| Error::Validation(format!("unknown stock {}", rec.stock)))?;
        ll += loglik_smolt_approx(ctx.trajectories[i][t].smolts, rec);
    }
    Ok(ll)
}

/// Observed series entering the life-history likelihood.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Observations {
    pub catch: Vec<CatchEffortRecord>,
    pub tags: Vec<TagCohort>,
    pub spawners: Vec<SpawnerCount>,
    pub smolts: Vec<SmoltLikelihoodApprox>,
}

pub fn total_loglik(data: &Observations, ctx: &ObservationContext<'_>) -> Result<LoglikBreakdown> {
    Ok(LoglikBreakdown {
        catch: loglik_catch_series(&data.catch, ctx)?,
        tags: loglik_tag_cohorts(&data.tags, ctx)?,
        spawners: loglik_spawner_series(&data.spawners, ctx)?,
        smolts: loglik_smolt_series(&data.smolts, ctx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn fishing_mortality_examples() {
        assert_eq!(fishing_mortality(1e-4, 0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(fishing_mortality(1e-4, 5000.0, 1.0).unwrap(), 0.5);
        assert!(fishing_mortality(1e-4, -1.0, 1.0).is_err());

        let mk = |id: &str| FisheryDef {
            id: id.into(),
            catchability: 1.0,
            selectivity: vec![0.5, 1.0],
            reporting_rate: 1.0,
            obs_sd: 0.2,
        };
        let fm = FishingMortality::from_effort(
            &[mk("a"), mk("b")],
            &[1e-4, 2e-4],
            &[vec![1000.0], vec![500.0]],
        )
        .unwrap();
        assert_relative_eq!(fm.total[0][1], fm.by_fishery[0][0][1] + fm.by_fishery[1][0][1]);
        assert_relative_eq!(fm.total[0][0], 0.1);
    }

    #[test]
    fn baranov_examples() {
        assert_eq!(expected_catch(1000.0, 0.0, 0.3).unwrap(), 0.0);
        assert_eq!(expected_catch(1000.0, 0.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            expected_catch(1000.0, 0.2, 0.2).unwrap(),
            0.5 * (1.0 - (-0.4f64).exp()) * 1000.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(expected_catch(1000.0, 0.2, 0.2).unwrap(), 164.839_977_2, max_relative = 1e-8);
        let c = expected_catch(1000.0, 300.0, 100.0).unwrap();
        assert_relative_eq!(c / 1000.0, 0.75, max_relative = 1e-12);
        assert!(expected_catch(1000.0, 5.0, 0.0).unwrap() < 1000.0);
    }

    #[test]
    fn catch_density_examples() {
        let sd = 0.3;
        let mode = 120.0 * (-sd * sd / 2.0f64).exp();
        let at_mode = loglik_catch(mode, 120.0, sd, 0.5);
        assert!(at_mode > loglik_catch(mode * 1.01, 120.0, sd, 0.5));
        assert!(at_mode > loglik_catch(mode * 0.99, 120.0, sd, 0.5));
        assert_relative_eq!(
            loglik_catch(mode * 1.5, 120.0, sd, 0.5),
            loglik_catch(mode / 1.5, 120.0, sd, 0.5),
            max_relative = 1e-12
        );
        // independent normal pdf of log(100) with mean log(120) - 0.045, sd 0.3
        let u: f64 = (100f64.ln() - (120f64.ln() - 0.045)) / 0.3;
        let direct = (-0.5 * u * u).exp() / (0.3 * (2.0 * std::f64::consts::PI).sqrt());
        assert_relative_eq!(loglik_catch(100.0, 120.0, 0.3, 0.5), direct.ln(), max_relative = 1e-12);
        assert_eq!(loglik_catch(5.0, 0.0, 0.3, 0.5), f64::NEG_INFINITY);
        assert!(loglik_catch(0.0, 10.0, 0.3, 0.5).is_finite());
    }

    #[test]
    fn tag_multinomial_examples() {
        // reporting rate zero with recoveries is impossible
        assert_eq!(
            loglik_tags(100, &[vec![3]], &[vec![0.0]]).unwrap(),
            f64::NEG_INFINITY
        );
        assert_eq!(loglik_tags(50, &[vec![0, 0]], &[vec![0.0, 0.0]]).unwrap(), 0.0);
        // two cells plus the never-seen remainder, enumerated directly
        let (n, r1, r2, p1, p2) = (10u64, 2u64, 1u64, 0.15f64, 0.05f64);
        let fact = |k: u64| (1..=k).map(|x| x as f64).product::<f64>();
        let coef = fact(n) / (fact(r1) * fact(r2) * fact(n - r1 - r2));
        let direct = coef * p1.powi(2) * p2 * (1.0 - p1 - p2).powi(7);
        assert_relative_eq!(
            loglik_tags(n, &[vec![r1], vec![r2]], &[vec![p1], vec![p2]]).unwrap(),
            direct.ln(),
            max_relative = 1e-12
        );
        assert!(loglik_tags(10, &[vec![1]], &[vec![1.2]]).is_err());
    }

    #[test]
    fn tag_cells_are_a_proper_partition() {
        let maturation = MaturationSchedule::from_free(&[0.4]).unwrap();
        let f = FisheryDef {
            id: "x".into(),
            catchability: 1.0,
            selectivity: vec![0.2, 1.0, 1.0],
            reporting_rate: 0.8,
            obs_sd: 0.2,
        };
        let fm = FishingMortality::from_effort(&[f], &[1e-4], &[vec![3000.0; 5]]).unwrap();
        let natural = vec![vec![1.0, 0.1, 0.1]; 5];
        let cells = tag_cell_probabilities(1, &fm, &natural, &maturation, &[0.8]);
        assert_eq!(cells[0].len(), 3);
        let total: f64 = cells.iter().flatten().sum();
        assert!(total > 0.0 && total < 0.8);
        // the last cohort year has only one cell inside the horizon
        assert_eq!(tag_cell_probabilities(4, &fm, &natural, &maturation, &[0.8])[0].len(), 1);
    }

    #[test]
    fn spawner_and_smolt_terms() {
        let approx = SmoltLikelihoodApprox {
            stock: "a".into(),
            year: 2000,
            mu: 10.0,
            sd: 0.2,
        };
        assert_relative_eq!(
            loglik_smolt_approx(10f64.exp(), &approx),
            normal_ln_pdf(10.0, 10.0, 0.2)
        );
        assert_eq!(loglik_smolt_approx(0.0, &approx), f64::NEG_INFINITY);
        let sd = (1.0f64 + 0.04).ln().sqrt();
        assert_relative_eq!(
            loglik_spawner_count(900.0, 1000.0, 0.2, 0.5),
            normal_ln_pdf(900f64.ln(), 1000f64.ln() - sd * sd / 2.0, sd)
        );
    }
}
