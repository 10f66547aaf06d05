//! Synthetic assessments with known truth.
//!
//! Data are generated through the same kernels the likelihood uses. Outputs
//! always carry a `"synthetic": true` marker next to the truth.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, RearedRow, SmoltTrapRow};
use crate::dynamics::{
    run_trajectory, AgeStructure, Innovations, MaturationSchedule, MortalitySchedule, M74Series,
    PopulationState, ProcessNoise, StockParams,
};
use crate::error::{ensure, Error, Result};
use crate::observation::{
    reared_abundance, tag_cell_probabilities, CatchEffortRecord, FisheryDef, FishingMortality,
    ObservationContext, ReleaseType, SpawnerCount, TagCohort, TagRecovery,
};
use crate::priors::{ExpertQuantiles, ExternalSrDataset, M74Observation};
use crate::river::{ElectrofishingRecord, RiverInfo};
use crate::stats::{derive_seed, mean_one_noise};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockTruth {
    pub name: String,
    pub alpha: f64,
    pub beta: f64,
    pub fecundity: Vec<f64>,
    pub female_prop: f64,
    /// Juvenile habitat in units of 100 m2.
    pub habitat_area: f64,
    /// Parr-to-smolt survival of the river.
    pub parr_survival: f64,
    /// Smolt cohorts of the first `smolt_delay` years.
    pub init_smolts: Vec<f64>,
    /// Sea abundance by sea-age in the first year.
    pub init_sea: Vec<f64>,
    /// Spawner-count cv; `None` when the stock has no counts.
    pub spawner_cv: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapSchedule {
    pub river: String,
    pub years: Vec<i32>,
    pub marked: u64,
    pub capture_prob: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElectrofishingSchedule {
    /// Survey years; the matching smolt run is `lag` years later.
    pub years: Vec<i32>,
    pub lag: i32,
    pub sites: usize,
    /// Fished area per site in m2.
    pub site_area: f64,
    /// Log-scale sd of site densities around the river mean.
    pub site_sd: f64,
    /// Log-scale sd of the parr-to-smolt link.
    pub tau: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TagSchedule {
    pub release_years: Vec<i32>,
    pub released: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExternalSrDesign {
    pub n_stocks: usize,
    pub n_obs: usize,
    /// Population mean and sds of `(log alpha, log beta)`.
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    pub rho: f64,
    pub obs_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub name: String,
    pub seed: u64,
    pub first_year: i32,
    pub n_years: usize,
    pub ages: AgeStructure,
    pub stocks: Vec<StockTruth>,
    pub fisheries: Vec<FisheryDef>,
    /// `[fishery][year]`.
    pub effort: Vec<Vec<f64>>,
    pub m_post_smolt: f64,
    pub m_adult: f64,
    /// Maturation by sea-age `1..=max_sea_age`, the last equal to one.
    pub maturation: Vec<f64>,
    pub s74: Vec<f64>,
    pub noise: ProcessNoise,
    pub reared: Option<Vec<f64>>,
    pub traps: Vec<TrapSchedule>,
    pub electrofishing: Option<ElectrofishingSchedule>,
    pub tags: Option<TagSchedule>,
    /// Families monitored for M74 each year; zero for none.
    pub m74_families: u64,
    pub external_sr: Option<ExternalSrDesign>,
    /// Log-sd of elicited PSPC quantiles; `None` for no expert input.
    pub expert_pspc_sd: Option<f64>,
    /// Observations equal their expectations, rounded for counts.
    pub noiseless: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationTruth {
    pub synthetic: bool,
    pub design: String,
    pub seed: u64,
    pub first_year: i32,
    pub stocks: Vec<String>,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub pspc: Vec<f64>,
    pub catchability: Vec<f64>,
    pub log_catchability: Vec<f64>,
    pub m_post_smolt: f64,
    pub m_adult: f64,
    pub maturation: Vec<f64>,
    pub s74: Vec<f64>,
    pub sigma_r: f64,
    pub parr_survival: Vec<f64>,
    /// `[stock][year]`.
    pub smolts: Vec<Vec<f64>>,
    pub spawners: Vec<Vec<f64>>,
    pub eggs: Vec<Vec<f64>>,
    /// Sea abundance after the last year, with queued smolt cohorts.
    pub final_states: Vec<PopulationState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub dataset: Dataset,
    pub truth: SimulationTruth,
}

impl SimulationDesign {
    pub fn years(&self) -> Vec<i32> {
        (0..self.n_years).map(|t| self.first_year + t as i32).collect()
    }

    fn in_range(&self, y: i32) -> bool {
        y >= self.first_year && y < self.first_year + self.n_years as i32
    }

    pub fn validate(&self) -> Result<()> {
        let a = self.ages.max_sea_age;
        ensure!(!self.stocks.is_empty(), Validation, "design has no stocks");
        ensure!(self.n_years > self.ages.smolt_delay, Validation, "too few years for the smolt delay");
        for s in &self.stocks {
            StockParams::new(s.alpha, s.beta, s.fecundity.clone(), s.female_prop)?;
            ensure!(s.fecundity.len() == a, Dimension, "stock {}: fecundity needs {a} ages", s.name);
            ensure!(s.init_smolts.len() == self.ages.smolt_delay, Dimension, "stock {}: init smolts", s.name);
            ensure!(s.init_sea.len() == a, Dimension, "stock {}: init sea", s.name);
            ensure!(s.habitat_area > 0.0 && s.parr_survival > 0.0, Validation, "stock {}: river", s.name);
        }
        for f in &self.fisheries {
            f.validate(self.ages.n_rate_ages())?;
        }
        ensure!(
            self.effort.len() == self.fisheries.len() && self.effort.iter().all(|e| e.len() == self.n_years),
            Dimension,
            "effort must be fisheries by years"
        );
        MaturationSchedule::new(self.maturation.clone())?;
        ensure!(self.maturation.len() == a, Dimension, "maturation needs {a} ages");
        M74Series::new(self.s74.clone())?;
        ensure!(self.s74.len() == self.n_years, Dimension, "s74 needs one value per year");
        if let Some(r) = &self.reared {
            ensure!(r.len() == self.n_years, Dimension, "reared releases need one value per year");
        }
        for t in &self.traps {
            ensure!(
                self.stocks.iter().any(|s| s.name == t.river),
                Validation,
                "trap on unknown river {}",
                t.river
            );
            ensure!(t.years.iter().all(|y| self.in_range(*y)), Validation, "trap years out of range");
            ensure!(t.capture_prob > 0.0 && t.capture_prob <= 1.0, Validation, "capture probability");
        }
        if let Some(e) = &self.electrofishing {
            ensure!(
                e.years.iter().all(|y| self.in_range(*y) && self.in_range(y + e.lag)),
                Validation,
                "electrofishing years must have their smolt year in range"
            );
            ensure!(e.sites > 0, Validation, "electrofishing needs sites");
        }
        if let Some(t) = &self.tags {
            ensure!(t.release_years.iter().all(|y| self.in_range(*y)), Validation, "tag years out of range");
        }
        Ok(())
    }
}

fn normal<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn binomial<R: Rng>(n: u64, p: f64, noiseless: bool, rng: &mut R) -> Result<u64> {
    if noiseless {
        return Ok((n as f64 * p).round() as u64);
    }
    Binomial::new(n, p.clamp(0.0, 1.0))
        .map(|d| d.sample(rng))
        .map_err(|e| Error::Internal(format!("binomial({n}, {p}): {e}")))
}

pub fn simulate(design: &SimulationDesign) -> Result<SimulationOutput> {
    design.validate()?;
    let ny = design.n_years;
    let ages = design.ages;
    let big_a = ages.max_sea_age;
    let years = design.years();
    let nl = design.noiseless;

    let mut proc_rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "process"));
    let q: Vec<f64> = design.fisheries.iter().map(|f| f.catchability).collect();
    let fishing = FishingMortality::from_effort(&design.fisheries, &q, &design.effort)?;
    let mut natural_row = vec![design.m_adult; ages.n_rate_ages()];
    natural_row[0] = design.m_post_smolt;
    let natural = vec![natural_row; ny];
    let mortality = MortalitySchedule::new(fishing.total.clone(), natural.clone(), ages)?;
    let maturation = MaturationSchedule::new(design.maturation.clone())?;
    let m74 = M74Series::new(design.s74.clone())?;

    let mut trajectories = Vec::new();
    let mut params = Vec::new();
    for s in &design.stocks {
        let p = StockParams::new(s.alpha, s.beta, s.fecundity.clone(), s.female_prop)?;
        let innov: Vec<Innovations> = (0..ny)
            .map(|_| Innovations {
                recruitment: normal(&mut proc_rng),
                sea: (0..big_a).map(|_| normal(&mut proc_rng)).collect(),
                spawning: (0..big_a).map(|_| normal(&mut proc_rng)).collect(),
            })
            .collect();
        let init = PopulationState {
            smolt_queue: s.init_smolts.clone(),
            sea: s.init_sea.clone(),
        };
        trajectories.push(run_trajectory(&init, &p, &maturation, &mortality, &m74, &design.noise, &innov)?);
        params.push(p);
    }
    let states: Vec<Vec<_>> = trajectories.iter().map(|t| t.years.clone()).collect();
    let names: Vec<String> = design.stocks.iter().map(|s| s.name.clone()).collect();

    let mut obs_rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "observation"));
    let lognormal = |sd: f64, rng: &mut ChaCha8Rng| {
        let z = normal(rng);
        if nl {
            1.0
        } else {
            mean_one_noise(sd, z)
        }
    };

    // Catch, wild and reared fish together.
    let reared = design
        .reared
        .as_ref()
        .map(|r| reared_abundance(r, &fishing.total, &natural, &maturation));
    let ctx = ObservationContext {
        first_year: design.first_year,
        stocks: &names,
        fisheries: &design.fisheries,
        fishing: &fishing,
        natural: &natural,
        maturation: &maturation,
        m74: &design.s74,
        trajectories: &states,
        reared: reared.as_deref(),
        zero_floor: 0.5,
    };
    let mut catch = Vec::new();
    for t in 0..ny {
        let expected = ctx.expected_catch_by_fishery(t)?;
        for (fi, f) in design.fisheries.iter().enumerate() {
            catch.push(CatchEffortRecord {
                fishery: f.id.clone(),
                year: years[t],
                effort: design.effort[fi][t],
                catch: Some(expected[fi] * lognormal(f.obs_sd, &mut obs_rng)),
            });
        }
    }

    let mut spawners = Vec::new();
    for (i, s) in design.stocks.iter().enumerate() {
        if let Some(cv) = s.spawner_cv {
            let sd = (1.0 + cv * cv).ln().sqrt();
            for t in ages.smolt_delay..ny {
                spawners.push(SpawnerCount {
                    stock: s.name.clone(),
                    year: years[t],
                    count: states[i][t].total_spawners() * lognormal(sd, &mut obs_rng),
                    cv,
                });
            }
        }
    }

    let mut tags = Vec::new();
    if let Some(ts) = &design.tags {
        let reporting: Vec<f64> = design.fisheries.iter().map(|f| f.reporting_rate).collect();
        for &ry in &ts.release_years {
            let release = (ry - design.first_year) as usize;
            let probs = tag_cell_probabilities(release, &fishing, &natural, &maturation, &reporting);
            let mut remaining = ts.released;
            let mut mass_left = 1.0;
            let mut recoveries = Vec::new();
            for (fi, row) in probs.iter().enumerate() {
                for (k, p) in row.iter().enumerate() {
                    let count = if nl {
                        (ts.released as f64 * p).round() as u64
                    } else {
                        let c = binomial(remaining, (p / mass_left).min(1.0), false, &mut obs_rng)?;
                        remaining -= c;
                        mass_left = (mass_left - p).max(1e-300);
                        c
                    };
                    if count > 0 {
                        recoveries.push(TagRecovery {
                            fishery: design.fisheries[fi].id.clone(),
                            year: ry + k as i32,
                            count,
                        });
                    }
                }
            }
            tags.push(TagCohort {
                id: format!("wild_{ry}"),
                release_year: ry,
                released: ts.released,
                label: ReleaseType::Wild,
                recoveries,
            });
        }
    }

    let mut smolt_trap = Vec::new();
    for tr in &design.traps {
        let i = names.iter().position(|n| *n == tr.river).expect("validated");
        for &y in &tr.years {
            let t = (y - design.first_year) as usize;
            let run = states[i][t].smolts.round().max(1.0) as u64;
            let marked = tr.marked.min(run);
            let recaptured = binomial(marked, tr.capture_prob, nl, &mut obs_rng)?;
            let unmarked = binomial(run - marked, tr.capture_prob, nl, &mut obs_rng)?;
            smolt_trap.push(SmoltTrapRow {
                river: tr.river.clone(),
                year: y,
                marked,
                captured: recaptured + unmarked,
                recaptured,
            });
        }
    }

    let mut electrofishing = Vec::new();
    if let Some(ef) = &design.electrofishing {
        for (i, s) in design.stocks.iter().enumerate() {
            for &y in &ef.years {
                let t = (y + ef.lag - design.first_year) as usize;
                let eta = if nl { 0.0 } else { ef.tau * normal(&mut obs_rng) };
                let parr = states[i][t].smolts / s.parr_survival / eta.exp();
                let density = parr / s.habitat_area;
                for k in 0..ef.sites {
                    electrofishing.push(ElectrofishingRecord {
                        river: s.name.clone(),
                        year: y,
                        site: format!("s{}", k + 1),
                        density: density * lognormal(ef.site_sd, &mut obs_rng),
                        area: ef.site_area,
                    });
                }
            }
        }
    }
    let rivers = design
        .stocks
        .iter()
        .map(|s| RiverInfo {
            river: s.name.clone(),
            habitat_area: s.habitat_area,
        })
        .collect();

    let mut m74_obs = Vec::new();
    if design.m74_families > 0 {
        for t in 0..ny {
            let y = binomial(design.m74_families, 1.0 - design.s74[t], nl, &mut obs_rng)?;
            m74_obs.push(M74Observation {
                year: years[t],
                families: design.m74_families,
                m74_families: y,
            });
        }
    }

    let mut external_sr = Vec::new();
    if let Some(ex) = &design.external_sr {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "external_sr"));
        for k in 0..ex.n_stocks {
            let (z1, z2) = (normal(&mut rng), normal(&mut rng));
            let la = ex.mean[0] + ex.sd[0] * z1;
            let lb = ex.mean[1] + ex.sd[1] * (ex.rho * z1 + (1.0 - ex.rho * ex.rho).sqrt() * z2);
            let (alpha, beta) = (la.exp(), lb.exp());
            let half_sat = alpha / beta;
            let mut eggs = Vec::with_capacity(ex.n_obs);
            let mut recruits = Vec::with_capacity(ex.n_obs);
            for _ in 0..ex.n_obs {
                let o = half_sat * (0.2f64.ln() + rng.random::<f64>() * 25f64.ln()).exp();
                let noise = if nl { 0.0 } else { ex.obs_sd * normal(&mut rng) };
                eggs.push(o);
                recruits.push(o / (alpha + beta * o) * noise.exp());
            }
            external_sr.push(ExternalSrDataset {
                stock: format!("ext{}", k + 1),
                eggs,
                recruits,
            });
        }
    }

    let mut expert_pspc = Vec::new();
    if let Some(sd) = design.expert_pspc_sd {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(design.seed, "expert"));
        for s in &design.stocks {
            let bias = if nl { 0.0 } else { 0.5 * sd * normal(&mut rng) };
            let median = (1.0 / s.beta).ln() + bias;
            expert_pspc.push(ExpertQuantiles {
                stock: s.name.clone(),
                pairs: [0.05, 0.5, 0.95]
                    .iter()
                    .map(|&p| (p, (median + sd * crate::stats::std_normal_quantile(p)).exp()))
                    .collect(),
            });
        }
    }

    let dataset = Dataset {
        catch,
        spawners,
        tags,
        reared: design
            .reared
            .as_ref()
            .map(|r| {
                r.iter()
                    .zip(&years)
                    .map(|(v, y)| RearedRow { year: *y, releases: *v })
                    .collect()
            })
            .unwrap_or_default(),
        smolt_trap,
        electrofishing,
        rivers,
        m74: m74_obs,
        external_sr,
        expert_pspc,
    };
    let truth = SimulationTruth {
        synthetic: true,
        design: design.name.clone(),
        seed: design.seed,
        first_year: design.first_year,
        stocks: names,
        alpha: params.iter().map(|p| p.alpha).collect(),
        beta: params.iter().map(|p| p.beta).collect(),
        pspc: params.iter().map(|p| p.pspc()).collect(),
        catchability: q.clone(),
        log_catchability: q.iter().map(|v| v.ln()).collect(),
        m_post_smolt: design.m_post_smolt,
        m_adult: design.m_adult,
        maturation: design.maturation.clone(),
        s74: design.s74.clone(),
        sigma_r: design.noise.sigma_r,
        parr_survival: design.stocks.iter().map(|s| s.parr_survival).collect(),
        smolts: states.iter().map(|st| st.iter().map(|s| s.smolts).collect()).collect(),
        spawners: states.iter().map(|st| st.iter().map(|s| s.total_spawners()).collect()).collect(),
        eggs: states.iter().map(|st| st.iter().map(|s| s.eggs).collect()).collect(),
        final_states: trajectories.iter().map(|t| t.final_state.clone()).collect(),
    };
    Ok(SimulationOutput { dataset, truth })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemoScale {
    Small,
    Medium,
}

impl std::str::FromStr for DemoScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            other => Err(Error::Validation(format!("unknown demo scale {other:?}, use small or medium"))),
        }
    }
}

/// Stable sea abundance by age for a smolt run, ignoring fishing.
fn stable_sea(smolts: f64, m0: f64, m: f64, maturation: &[f64], s74: f64) -> Vec<f64> {
    let mut n = Vec::with_capacity(maturation.len());
    let mut cur = smolts * s74 * (-m0).exp();
    for l in maturation {
        n.push(cur);
        cur *= (1.0 - l) * (-m).exp();
    }
    n
}

/// Demo designs. Small: two stocks over 15 years with three sea-ages. Medium:
/// four stocks over 25 years with four sea-ages and a reared release series.
/// Both have one smolt-trap river.
pub fn make_demo(scale: DemoScale, seed: u64) -> SimulationDesign {
    let (names, n_years, big_a, delay): (&[&str], usize, usize, usize) = match scale {
        DemoScale::Small => (&["north", "south"], 15, 3, 2),
        DemoScale::Medium => (&["north", "east", "south", "west"], 25, 4, 3),
    };
    let first_year = 2000;
    let (fecundity, maturation, selectivity_off, selectivity_coast) = if big_a == 3 {
        (
            vec![3000.0, 8000.0, 12000.0],
            vec![0.3, 0.7, 1.0],
            vec![0.0, 0.6, 1.0, 1.0],
            vec![0.0, 0.4, 1.0, 1.0],
        )
    } else {
        (
            vec![2500.0, 7000.0, 11000.0, 14000.0],
            vec![0.1, 0.5, 0.8, 1.0],
            vec![0.0, 0.5, 1.0, 1.0, 1.0],
            vec![0.0, 0.3, 0.8, 1.0, 1.0],
        )
    };
    let pspc = [60000.0, 25000.0, 12000.0, 40000.0];
    let alpha = [150.0, 190.0, 130.0, 170.0];
    let parr_survival = [0.25, 0.2, 0.3, 0.22];
    let habitat = [8000.0, 3500.0, 1500.0, 5000.0];
    let (m0, m) = (1.2, 0.1);

    let stocks: Vec<StockTruth> = names
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let r0 = 0.5 * pspc[i];
            StockTruth {
                name: n.to_string(),
                alpha: alpha[i],
                beta: 1.0 / pspc[i],
                fecundity: fecundity.clone(),
                female_prop: 0.5,
                habitat_area: habitat[i],
                parr_survival: parr_survival[i],
                init_smolts: vec![r0; delay],
                init_sea: stable_sea(r0, m0, m, &maturation, 0.85),
                spawner_cv: Some(0.25),
            }
        })
        .collect();

    // Deterministic effort patterns with a mild trend and year-to-year wobble.
    let wobble = |t: usize, k: f64| 1.0 + 0.15 * ((t as f64) * k).sin();
    let effort = vec![
        (0..n_years)
            .map(|t| 1200.0 * (1.0 - 0.5 * t as f64 / n_years as f64) * wobble(t, 1.7))
            .collect(),
        (0..n_years)
            .map(|t| 1000.0 * (1.0 + 0.4 * t as f64 / n_years as f64) * wobble(t, 2.3))
            .collect(),
    ];
    let fisheries = vec![
        FisheryDef {
            id: "offshore".into(),
            catchability: 2e-4,
            selectivity: selectivity_off,
            reporting_rate: 0.5,
            obs_sd: 0.15,
        },
        FisheryDef {
            id: "coastal".into(),
            catchability: 1e-4,
            selectivity: selectivity_coast,
            reporting_rate: 0.6,
            obs_sd: 0.15,
        },
    ];
    let s74: Vec<f64> = (0..n_years)
        .map(|t| if t % 7 == 3 { 0.45 } else { 0.9 - 0.03 * ((t % 4) as f64) })
        .collect();
    let years: Vec<i32> = (0..n_years).map(|t| first_year + t as i32).collect();
    let mean_log = [
        alpha[..names.len()].iter().map(|a: &f64| a.ln()).sum::<f64>() / names.len() as f64,
        pspc[..names.len()].iter().map(|p: &f64| -p.ln()).sum::<f64>() / names.len() as f64,
    ];
    SimulationDesign {
        name: match scale {
            DemoScale::Small => "demo-small".into(),
            DemoScale::Medium => "demo-medium".into(),
        },
        seed,
        first_year,
        n_years,
        ages: AgeStructure {
            max_sea_age: big_a,
            smolt_delay: delay,
        },
        stocks,
        fisheries,
        effort,
        m_post_smolt: m0,
        m_adult: m,
        maturation,
        s74,
        noise: ProcessNoise {
            sigma_r: 0.3,
            sigma_n: 0.0,
            sigma_s: 0.0,
        },
        reared: match scale {
            DemoScale::Small => None,
            DemoScale::Medium => Some(vec![20000.0; n_years]),
        },
        traps: vec![TrapSchedule {
            river: names[0].to_string(),
            years: years[4..].to_vec(),
            marked: 1500,
            capture_prob: 0.1,
        }],
        electrofishing: Some(ElectrofishingSchedule {
            years: years[..n_years - 1].to_vec(),
            lag: 1,
            sites: 4,
            site_area: 200.0,
            site_sd: 0.4,
            tau: 0.2,
        }),
        tags: Some(TagSchedule {
            release_years: years[..n_years - 2].to_vec(),
            released: 3000,
        }),
        m74_families: 30,
        external_sr: Some(ExternalSrDesign {
            n_stocks: 8,
            n_obs: 15,
            mean: mean_log,
            sd: [0.3, 0.6],
            rho: 0.3,
            obs_sd: 0.3,
        }),
        expert_pspc_sd: Some(0.4),
        noiseless: false,
    }
}

/// Writes the dataset, `truth.json` and `design.json` into `dir`.
pub fn write_simulation(dir: &Path, design: &SimulationDesign, out: &SimulationOutput) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths = out.dataset.write(dir)?;
    for (name, value) in [
        ("truth.json", serde_json::to_string_pretty(&out.truth)),
        ("design.json", serde_json::to_string_pretty(design)),
    ] {
        let p = dir.join(name);
        let text = value.map_err(|e| Error::Internal(e.to_string()))?;
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        paths.push(p);
    }
    Ok(paths)
}
