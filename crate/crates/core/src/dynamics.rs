//! Age-structured life-history dynamics for a river stock.
//!
//! One annual step moves a stock from year `t` to `t + 1` in a fixed order:
//! smolts enter the sea, sea-age classes age or mature, maturing fish spawn,
//! spawners produce eggs, and eggs become the smolt cohort `T` years later
//! through a Beverton-Holt stock-recruit curve. Every kernel is a pure
//! function of its arguments.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::stats::mean_one_noise;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgeStructure {
    /// Number of sea-age classes `1..=max_sea_age`. Sea-age 0 is the post-smolt year.
    pub max_sea_age: usize,
    /// Years between egg deposition and smolt emigration.
    pub smolt_delay: usize,
}

impl AgeStructure {
    pub fn new(max_sea_age: usize, smolt_delay: usize) -> Result<Self> {
        ensure!(max_sea_age >= 1, Validation, "max_sea_age must be at least 1");
        ensure!(smolt_delay >= 1, Validation, "smolt_delay must be at least 1");
        Ok(Self {
            max_sea_age,
            smolt_delay,
        })
    }

    /// Number of mortality columns, sea-ages `0..=max_sea_age`.
    pub fn n_rate_ages(&self) -> usize {
        self.max_sea_age + 1
    }
}

/// Stock-recruit and reproduction parameters of one stock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockParams {
    pub alpha: f64,
    pub beta: f64,
    /// Eggs per female spawner, by sea-age `1..=max_sea_age`.
    pub fecundity: Vec<f64>,
    pub female_prop: f64,
}

impl StockParams {
    pub fn new(alpha: f64, beta: f64, fecundity: Vec<f64>, female_prop: f64) -> Result<Self> {
        let p = Self {
            alpha,
            beta,
            fecundity,
            female_prop,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.alpha.is_finite() && self.alpha > 0.0,
            Domain,
            "alpha must be positive, got {}",
            self.alpha
        );
        ensure!(
            self.beta.is_finite() && self.beta > 0.0,
            Domain,
            "beta must be positive, got {}",
            self.beta
        );
        ensure!(
            (0.0..=1.0).contains(&self.female_prop),
            Domain,
            "female proportion must lie in [0, 1], got {}",
            self.female_prop
        );
        ensure!(
            self.fecundity.iter().all(|f| f.is_finite() && *f >= 0.0),
            Domain,
            "fecundity must be nonnegative"
        );
        ensure!(
            self.fecundity.windows(2).all(|w| w[0] <= w[1]),
            Validation,
            "fecundity must be nondecreasing in sea-age"
        );
        Ok(())
    }

    /// Potential smolt production capacity, the asymptote `1 / beta`.
    pub fn pspc(&self) -> f64 {
        1.0 / self.beta
    }
}

/// Instantaneous fishing and natural mortality rates indexed `[year][sea_age]`,
/// sea-age running over `0..=max_sea_age`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MortalitySchedule {
    pub fishing: Vec<Vec<f64>>,
    pub natural: Vec<Vec<f64>>,
}

impl MortalitySchedule {
    pub fn new(fishing: Vec<Vec<f64>>, natural: Vec<Vec<f64>>, ages: AgeStructure) -> Result<Self> {
        ensure!(
            fishing.len() == natural.len(),
            Dimension,
            "fishing has {} years but natural mortality has {}",
            fishing.len(),
            natural.len()
        );
        for (t, (f, m)) in fishing.iter().zip(&natural).enumerate() {
            ensure!(
                f.len() == ages.n_rate_ages() && m.len() == ages.n_rate_ages(),
                Dimension,
                "year {t}: expected {} age columns",
                ages.n_rate_ages()
            );
            ensure!(
                f.iter().chain(m).all(|r| r.is_finite() && *r >= 0.0),
                Domain,
                "year {t}: mortality rates must be finite and nonnegative"
            );
        }
        Ok(Self { fishing, natural })
    }

    pub fn years(&self) -> usize {
        self.fishing.len()
    }
}

/// Fraction of sea-age `a` fish maturing, stored for `a = 1..=max_sea_age`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaturationSchedule {
    rates: Vec<f64>,
}

impl MaturationSchedule {
    /// Builds a schedule from the maturation fractions of sea-ages `1..max_sea_age`;
    /// the oldest age always matures completely.
    pub fn from_free(free: &[f64]) -> Result<Self> {
        let mut rates = free.to_vec();
        rates.push(1.0);
        Self::new(rates)
    }

    pub fn new(rates: Vec<f64>) -> Result<Self> {
        ensure!(!rates.is_empty(), Validation, "maturation schedule is empty");
        ensure!(
            rates.iter().all(|l| (0.0..=1.0).contains(l)),
            Domain,
            "maturation fractions must lie in [0, 1]"
        );
        ensure!(
            *rates.last().unwrap() == 1.0,
            Validation,
            "the oldest sea-age must mature completely"
        );
        Ok(Self { rates })
    }

    /// Maturation fraction at sea-age `a` (1-based).
    pub fn at(&self, a: usize) -> f64 {
        self.rates[a - 1]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }
}

/// Yearly first-year survival from the M74 syndrome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct M74Series(pub Vec<f64>);

impl M74Series {
    pub fn new(survival: Vec<f64>) -> Result<Self> {
        ensure!(
            survival.iter().all(|s| (0.0..=1.0).contains(s)),
            Domain,
            "M74 survival must lie in [0, 1]"
        );
        Ok(Self(survival))
    }

    pub fn none(years: usize) -> Self {
        Self(vec![1.0; years])
    }
}

/// Log-scale standard deviations of the multiplicative process errors.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ProcessNoise {
    pub sigma_r: f64,
    pub sigma_n: f64,
    pub sigma_s: f64,
}

/// Standard-normal innovations for one stock and year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Innovations {
    pub recruitment: f64,
    /// Indexed by destination sea-age minus one: entry 0 drives smolt to sea-age 1.
    pub sea: Vec<f64>,
    /// Indexed by sea-age minus one.
    pub spawning: Vec<f64>,
}

impl Innovations {
    pub fn zeros(max_sea_age: usize) -> Self {
        Self {
            recruitment: 0.0,
            sea: vec![0.0; max_sea_age],
            spawning: vec![0.0; max_sea_age],
        }
    }
}

/// What a stock carries from one year into the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationState {
    /// Smolt cohorts `R[t], R[t+1], ..., R[t+T-1]`, already determined by past spawning.
    pub smolt_queue: Vec<f64>,
    /// Sea abundance `N[t, a]` for `a = 1..=max_sea_age`.
    pub sea: Vec<f64>,
}

/// Demographic state of a stock in one year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StockState {
    pub smolts: f64,
    pub sea: Vec<f64>,
    pub spawners: Vec<f64>,
    pub eggs: f64,
}

impl StockState {
    pub fn total_spawners(&self) -> f64 {
        self.spawners.iter().sum()
    }
}

/// Rates and M74 survival acting in a single year.
#[derive(Debug, Clone, Copy)]
pub struct YearInputs<'a> {
    pub fishing: &'a [f64],
    pub natural: &'a [f64],
    pub m74_survival: f64,
}

/// Beverton-Holt stock-recruit curve `O / (alpha + beta * O)`.
pub fn bh_recruitment(eggs: f64, alpha: f64, beta: f64) -> Result<f64> {
    ensure!(
        eggs.is_finite() && eggs >= 0.0,
        Domain,
        "egg count must be finite and nonnegative, got {eggs}"
    );
    ensure!(
        alpha.is_finite() && alpha > 0.0 && beta.is_finite() && beta > 0.0,
        Domain,
        "stock-recruit parameters must be positive (alpha={alpha}, beta={beta})"
    );
    Ok(eggs / (alpha + beta * eggs))
}

/// Survivors of a year at instantaneous rates `f` and `m`, times process error `eps`.
pub fn survival_kernel(n: f64, f: f64, m: f64, eps: f64) -> Result<f64> {
    ensure!(
        n.is_finite() && n >= 0.0,
        Domain,
        "abundance must be finite and nonnegative, got {n}"
    );
    ensure!(
        f.is_finite() && f >= 0.0 && m.is_finite() && m >= 0.0,
        Domain,
        "mortality rates must be nonnegative (F={f}, M={m})"
    );
    ensure!(
        eps.is_finite() && eps > 0.0,
        Domain,
        "process error must be positive, got {eps}"
    );
    Ok(n * (-f - m).exp() * eps)
}

pub fn spawners_from_sea(n: f64, maturing: f64, f: f64, m: f64, eps: f64) -> Result<f64> {
    ensure!(
        (0.0..=1.0).contains(&maturing),
        Domain,
        "maturation fraction must lie in [0, 1], got {maturing}"
    );
    Ok(maturing * survival_kernel(n, f, m, eps)?)
}

/// Eggs spawned: `sum_a female_prop * fecundity[a] * spawners[a]`.
pub fn eggs_from_spawners(spawners: &[f64], fecundity: &[f64], female_prop: f64) -> Result<f64> {
    ensure!(
        spawners.len() == fecundity.len(),
        Dimension,
        "{} spawner ages but {} fecundity values",
        spawners.len(),
        fecundity.len()
    );
    ensure!(
        fecundity.iter().all(|f| *f >= 0.0),
        Domain,
        "fecundity must be nonnegative"
    );
    ensure!(
        spawners.iter().all(|s| s.is_finite() && *s >= 0.0),
        Domain,
        "spawner abundance must be finite and nonnegative"
    );
    Ok(spawners
        .iter()
        .zip(fecundity)
        .map(|(s, f)| female_prop * f * s)
        .sum())
}

/// Smolt abundance as a fraction of PSPC. May exceed one.
pub fn depletion_ratio(smolts: f64, pspc: f64) -> Result<f64> {
    ensure!(
        pspc.is_finite() && pspc > 0.0,
        Domain,
        "PSPC must be positive, got {pspc}"
    );
    Ok(smolts / pspc)
}

/// Advances one stock by a year.
///
/// M74 survival scales the smolt cohort as it enters the sea, so the post-smolt
/// year sees `R * s74` fish at risk and its survival is `exp(-F0 - M0) * s74`.
/// Returns the carried state for `t + 1` and the completed record of year `t`.
pub fn step_population(
    state: &PopulationState,
    stock: &StockParams,
    maturation: &MaturationSchedule,
    year: &YearInputs<'_>,
    noise: &ProcessNoise,
    innovations: &Innovations,
) -> Result<(PopulationState, StockState)> {
    let ages = state.sea.len();
    ensure!(!state.smolt_queue.is_empty(), Dimension, "empty smolt queue");
    ensure!(
        year.fishing.len() == ages + 1 && year.natural.len() == ages + 1,
        Dimension,
        "rates need {} sea-age columns",
        ages + 1
    );
    ensure!(
        maturation.rates().len() == ages
            && stock.fecundity.len() == ages
            && innovations.sea.len() == ages
            && innovations.spawning.len() == ages,
        Dimension,
        "age-indexed inputs must all have {ages} entries"
    );
    ensure!(
        (0.0..=1.0).contains(&year.m74_survival),
        Domain,
        "M74 survival must lie in [0, 1]"
    );

    let smolts = state.smolt_queue[0];
    let mut next_sea = vec![0.0; ages];
    next_sea[0] = survival_kernel(
        smolts * year.m74_survival,
        year.fishing[0],
        year.natural[0],
        mean_one_noise(noise.sigma_n, innovations.sea[0]),
    )?;
    for a in 1..ages {
        let staying = 1.0 - maturation.at(a);
        next_sea[a] = staying
            * survival_kernel(
                state.sea[a - 1],
                year.fishing[a],
                year.natural[a],
                mean_one_noise(noise.sigma_n, innovations.sea[a]),
            )?;
    }

    let mut spawners = vec![0.0; ages];
    for a in 1..=ages {
        spawners[a - 1] = spawners_from_sea(
            state.sea[a - 1],
            maturation.at(a),
            year.fishing[a],
            year.natural[a],
            mean_one_noise(noise.sigma_s, innovations.spawning[a - 1]),
        )?;
    }
    let eggs = eggs_from_spawners(&spawners, &stock.fecundity, stock.female_prop)?;
    let recruits = bh_recruitment(eggs, stock.alpha, stock.beta)?
        * mean_one_noise(noise.sigma_r, innovations.recruitment);

    let mut queue = Vec::with_capacity(state.smolt_queue.len());
    queue.extend_from_slice(&state.smolt_queue[1..]);
    queue.push(recruits);

    let record = StockState {
        smolts,
        sea: state.sea.clone(),
        spawners,
        eggs,
    };
    Ok((
        PopulationState {
            smolt_queue: queue,
            sea: next_sea,
        },
        record,
    ))
}

/// Yearly records of one stock plus the state carried past the last year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub years: Vec<StockState>,
    pub final_state: PopulationState,
}

/// Runs `innovations.len()` consecutive years starting from `initial`.
#[allow(clippy::too_many_arguments)]
pub fn run_trajectory(
    initial: &PopulationState,
    stock: &StockParams,
    maturation: &MaturationSchedule,
    mortality: &MortalitySchedule,
    m74: &M74Series,
    noise: &ProcessNoise,
    innovations: &[Innovations],
) -> Result<Trajectory> {
    let years = innovations.len();
    if mortality.years() < years || m74.0.len() < years {
        return Err(Error::Dimension(format!(
            "horizon of {years} years exceeds the mortality ({}) or M74 ({}) series",
            mortality.years(),
            m74.0.len()
        )));
    }
    let mut state = initial.clone();
    let mut records = Vec::with_capacity(years);
    for (t, innov) in innovations.iter().enumerate() {
        let inputs = YearInputs {
            fishing: &mortality.fishing[t],
            natural: &mortality.natural[t],
            m74_survival: m74.0[t],
        };
        let (next, record) = step_population(&state, stock, maturation, &inputs, noise, innov)?;
        records.push(record);
        state = next;
    }
    Ok(Trajectory {
        years: records,
        final_state: state,
    })
}
