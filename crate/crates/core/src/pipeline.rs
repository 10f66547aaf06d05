//! Sequential assessment pipeline.
//!
//! Stages: A expert PSPC priors, B mark-recapture smolt posteriors, C river
//! model, D stock-recruit hyperprior, E M74 series, then the life-history fit.
//! Allowed bindings are B to C, and every other stage to the life-history fit.
//! Each stage writes its outputs once under the output directory; the
//! manifest records inputs, seeds and output hashes so a run can be repeated
//! and checked bit for bit.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{read_smolt_draws, write_smolt_approx, write_smolt_draws, DataFiles, Dataset};
use crate::dynamics::{AgeStructure, ProcessNoise};
use crate::error::{ensure, Error, Result};
use crate::mcmc::{self, DiagnosticsReport, PosteriorChain, SamplerConfig};
use crate::model::{BetaPrior, LifeHistoryModel, LifeHistoryPriors, ModelSpec, SrPrior, StockSpec};
use crate::observation::{FisheryDef, Observations, SmoltLikelihoodApprox};
use crate::priors::{
    fit_m74_series, fit_quantile_prior, fit_sr_hyperprior, BivariateNormal, LognormalPrior,
    M74YearPosterior, SrHyperpriorConfig,
};
use crate::river::{
    approximate_smolt_likelihood, fit_river_model, markrecapture_posterior, RiverModelConfig,
    RunSizePrior, SmoltPosterior, SmoltTrapData,
};
use crate::simulate::SimulationDesign;
use crate::stats::{derive_seed, derive_seed_index};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MISSING: &str = "<missing>";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum StageId {
    A,
    B,
    C,
    D,
    E,
    #[serde(rename = "life_history")]
    LifeHistory,
}

impl StageId {
    pub const ALL: [StageId; 6] = [Self::A, Self::B, Self::C, Self::D, Self::E, Self::LifeHistory];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::A => "A",
            Self::B => "B",
            Self::C => "C",
            Self::D => "D",
            Self::E => "E",
            Self::LifeHistory => "life_history",
        }
    }

    /// Output directory under the pipeline output root.
    pub fn dir(self) -> &'static str {
        match self {
            Self::LifeHistory => "life_history",
            Self::A => "stage_A",
            Self::B => "stage_B",
            Self::C => "stage_C",
            Self::D => "stage_D",
            Self::E => "stage_E",
        }
    }

    fn may_feed(self, to: StageId) -> bool {
        matches!(
            (self, to),
            (Self::B, Self::C)
                | (Self::A | Self::B | Self::C | Self::D | Self::E, Self::LifeHistory)
        )
    }
}

impl fmt::Display for StageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageBinding {
    pub id: StageId,
    #[serde(default)]
    pub inputs: Vec<StageId>,
}

fn full_stage_graph() -> Vec<StageBinding> {
    use StageId::*;
    vec![
        StageBinding { id: A, inputs: vec![] },
        StageBinding { id: B, inputs: vec![] },
        StageBinding { id: C, inputs: vec![B] },
        StageBinding { id: D, inputs: vec![] },
        StageBinding { id: E, inputs: vec![] },
        StageBinding { id: LifeHistory, inputs: vec![A, B, C, D, E] },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub dir: PathBuf,
    #[serde(default)]
    pub files: DataFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub ages: AgeStructure,
    /// Eggs per female by sea-age, shared by all stocks.
    pub fecundity: Vec<f64>,
    pub female_prop: f64,
    /// Stock order; defaults to the order of the rivers file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stocks: Option<Vec<String>>,
    #[serde(default)]
    pub sigma_n: f64,
    #[serde(default)]
    pub sigma_s: f64,
    #[serde(default = "default_zero_floor")]
    pub zero_floor: f64,
}

fn default_zero_floor() -> f64 {
    0.5
}

/// Prior on a positive quantity by its median and log-scale sd.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MedianPrior {
    pub median: f64,
    pub sd: f64,
}

impl MedianPrior {
    pub fn lognormal(self) -> Result<LognormalPrior> {
        ensure!(self.median > 0.0, Validation, "prior median must be positive, got {}", self.median);
        LognormalPrior::new(self.median.ln(), self.sd)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FisherySection {
    pub id: String,
    pub selectivity: Vec<f64>,
    pub reporting_rate: f64,
    pub obs_sd: f64,
    pub q_prior: MedianPrior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub m_post_smolt: MedianPrior,
    pub m_adult: MedianPrior,
    /// Beta priors for maturation at sea-ages `1..max_sea_age`; uniform when empty.
    pub maturation: Vec<BetaPrior>,
    pub sigma_r_scale: f64,
    /// Log-scale sd of the initial-state priors.
    pub init_sd: f64,
    /// Stock-recruit prior used when stage D is not bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub default_sr: Option<BivariateNormal>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self {
            m_post_smolt: MedianPrior { median: 1.0, sd: 0.3 },
            m_adult: MedianPrior { median: 0.1, sd: 0.3 },
            maturation: vec![],
            sigma_r_scale: 0.5,
            init_sd: 1.0,
            default_sr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarkRecaptureSection {
    pub lower: f64,
    pub upper: f64,
    pub n_draws: usize,
}

impl Default for MarkRecaptureSection {
    fn default() -> Self {
        let p = RunSizePrior::default();
        Self {
            lower: p.lower,
            upper: p.upper,
            n_draws: 4000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifeHistorySection {
    pub chains: usize,
    /// Iterations per chain including warmup.
    pub iterations: usize,
    /// Warmup iterations; half of `iterations` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warmup: Option<usize>,
    pub thin: usize,
    pub rhat_threshold: f64,
    /// Sd of the unconstrained jitter around the starting point.
    pub jitter: f64,
    /// Halt with a convergence error when the R-hat gate fails.
    pub enforce_gate: bool,
}

impl Default for LifeHistorySection {
    fn default() -> Self {
        Self {
            chains: 4,
            iterations: 4000,
            warmup: None,
            thin: 1,
            rhat_threshold: 1.05,
            jitter: 0.05,
            enforce_gate: true,
        }
    }
}

impl LifeHistorySection {
    pub fn sampler(&self) -> Result<(usize, usize)> {
        let warmup = self.warmup.unwrap_or(self.iterations / 2);
        ensure!(
            warmup > 0 && self.iterations > warmup,
            Validation,
            "life-history iterations ({}) must exceed a positive warmup ({warmup})",
            self.iterations
        );
        ensure!(self.chains > 0 && self.thin > 0, Validation, "chains and thin must be positive");
        Ok((warmup, self.iterations - warmup))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub data: DataSection,
    #[serde(default = "full_stage_graph")]
    pub stages: Vec<StageBinding>,
    pub model: ModelSection,
    pub fisheries: Vec<FisherySection>,
    #[serde(default)]
    pub priors: PriorSection,
    #[serde(default)]
    pub mark_recapture: MarkRecaptureSection,
    /// Stage C settings; the seed is replaced by one derived from the pipeline seed.
    #[serde(default)]
    pub river_model: RiverModelConfig,
    /// Stage D settings; the seed is replaced by one derived from the pipeline seed.
    #[serde(default)]
    pub sr_hyperprior: SrHyperpriorConfig,
    #[serde(default)]
    pub life_history: LifeHistorySection,
}

impl PipelineConfig {
    /// Reads a TOML config. Relative data and output paths are resolved
    /// against the directory holding the file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| Error::parse(path, e.message()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        if cfg.data.dir.is_relative() {
            cfg.data.dir = base.join(&cfg.data.dir);
        }
        if cfg.out_dir.is_relative() {
            cfg.out_dir = base.join(&cfg.out_dir);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("config serialization: {e}")))
    }

    fn binding(&self, id: StageId) -> Option<&StageBinding> {
        self.stages.iter().find(|s| s.id == id)
    }

    /// True when `from` runs and feeds `to`.
    pub fn feeds(&self, from: StageId, to: StageId) -> bool {
        self.binding(from).is_some() && self.binding(to).is_some_and(|b| b.inputs.contains(&from))
    }

    /// Checks the stage graph and returns a topological order.
    pub fn stage_order(&self) -> Result<Vec<StageId>> {
        let mut seen = BTreeSet::new();
        for b in &self.stages {
            ensure!(seen.insert(b.id), Validation, "stage {} listed twice", b.id);
        }
        ensure!(
            seen.contains(&StageId::LifeHistory),
            Validation,
            "the stage list must include life_history"
        );
        for b in &self.stages {
            for i in &b.inputs {
                ensure!(seen.contains(i), Validation, "stage {} takes input from unlisted stage {i}", b.id);
                ensure!(i.may_feed(b.id), Validation, "stage {i} cannot feed stage {}", b.id);
            }
        }
        if seen.contains(&StageId::C) {
            ensure!(self.feeds(StageId::B, StageId::C), Validation, "stage C needs input from stage B");
        }
        // Kahn's algorithm over the declared edges.
        let mut indegree: BTreeMap<StageId, usize> =
            self.stages.iter().map(|b| (b.id, b.inputs.len())).collect();
        let mut order = Vec::new();
        let mut ready: Vec<StageId> = indegree.iter().filter(|(_, d)| **d == 0).map(|(s, _)| *s).collect();
        while let Some(s) = ready.first().copied() {
            ready.remove(0);
            order.push(s);
            for b in &self.stages {
                if b.inputs.contains(&s) {
                    let d = indegree.get_mut(&b.id).expect("listed stage");
                    *d -= 1;
                    if *d == 0 {
                        ready.push(b.id);
                        ready.sort();
                    }
                }
            }
        }
        ensure!(order.len() == self.stages.len(), Validation, "stage bindings contain a cycle");
        Ok(order)
    }

    pub fn validate(&self) -> Result<()> {
        self.stage_order()?;
        let big_a = self.model.ages.max_sea_age;
        ensure!(
            big_a >= 1 && self.model.ages.smolt_delay >= 1,
            Validation,
            "ages need at least one sea-age and a smolt delay of at least one year"
        );
        ensure!(
            self.model.fecundity.len() == big_a,
            Validation,
            "model.fecundity needs {big_a} values"
        );
        ensure!(!self.fisheries.is_empty(), Validation, "at least one fishery is required");
        ensure!(
            self.priors.maturation.is_empty() || self.priors.maturation.len() == big_a - 1,
            Validation,
            "priors.maturation needs {} entries",
            big_a - 1
        );
        if !self.feeds(StageId::D, StageId::LifeHistory) {
            ensure!(
                self.priors.default_sr.is_some(),
                Validation,
                "stage D is not bound to the life-history fit and priors.default_sr is missing"
            );
        }
        self.life_history.sampler()?;
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    match std::fs::read(path) {
        Ok(b) => Ok(sha256_hex(&b)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(MISSING.into()),
        Err(e) => Err(Error::io(path, e)),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the data directory for inputs and the output root for outputs.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub kind: String,
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub id: StageId,
    pub inputs: Vec<StageId>,
    pub seed: u64,
    pub outputs: Vec<FileRecord>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub stage_order: Vec<StageId>,
    pub inputs: Vec<InputRecord>,
    pub stages: Vec<StageRecord>,
    pub fallbacks: Vec<String>,
    pub config: PipelineConfig,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Internal(e.to_string()))
    }

    /// Hash of the serialized manifest.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(self.to_json()?.as_bytes()))
    }

    pub fn outputs(&self) -> impl Iterator<Item = &FileRecord> {
        self.stages.iter().flat_map(|s| s.outputs.iter())
    }
}

/// Hashes of every configured input file, `<missing>` for absent ones.
pub fn input_records(data: &DataSection) -> Result<Vec<InputRecord>> {
    data.files
        .entries()
        .into_iter()
        .map(|(kind, name)| {
            Ok(InputRecord {
                kind: kind.into(),
                path: name.into(),
                sha256: file_hash(&data.dir.join(name))?,
            })
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub manifest: Manifest,
    pub model: LifeHistoryModel,
    pub chains: Vec<PosteriorChain>,
    pub diagnostics: DiagnosticsReport,
    /// Stage B and C smolt posteriors, empty when the stage did not run.
    pub stage_b: Vec<SmoltPosterior>,
    pub stage_c: Vec<SmoltPosterior>,
}

struct Writer {
    root: PathBuf,
}

impl Writer {
    fn write(&self, rel: &str, bytes: &[u8]) -> Result<FileRecord> {
        let path = self.root.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(FileRecord {
            path: rel.into(),
            sha256: sha256_hex(bytes),
        })
    }

    fn json<T: Serialize>(&self, rel: &str, value: &T) -> Result<FileRecord> {
        let text = serde_json::to_string_pretty(value).map_err(|e| Error::Internal(e.to_string()))?;
        self.write(rel, text.as_bytes())
    }

    fn record(&self, rel: &str) -> Result<FileRecord> {
        Ok(FileRecord {
            path: rel.into(),
            sha256: file_hash(&self.root.join(rel))?,
        })
    }
}

pub fn stage_seed(seed: u64, stage: StageId) -> u64 {
    derive_seed(seed, stage.as_str())
}

/// Runs every configured stage in topological order and writes the manifest.
pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineOutput> {
    config.validate()?;
    let order = config.stage_order()?;
    let data = Dataset::load(&config.data.dir, &config.data.files)?;
    let inputs = input_records(&config.data)?;
    let w = Writer {
        root: config.out_dir.clone(),
    };
    std::fs::create_dir_all(&w.root).map_err(|e| Error::io(&w.root, e))?;

    let mut records = Vec::new();
    let mut fallbacks = Vec::new();
    let mut pspc: BTreeMap<String, LognormalPrior> = BTreeMap::new();
    let mut stage_b: Vec<SmoltPosterior> = Vec::new();
    let mut stage_c: Vec<SmoltPosterior> = Vec::new();
    let mut sr_joint: Option<BivariateNormal> = None;
    let mut m74: Option<Vec<M74YearPosterior>> = None;
    let years = model_years(&data)?;
    let mut lh = None;

    for &stage in &order {
        let seed = stage_seed(config.seed, stage);
        let binding = config.binding(stage).expect("ordered stage is listed");
        let mut rec = StageRecord {
            id: stage,
            inputs: binding.inputs.clone(),
            seed,
            outputs: vec![],
            notes: vec![],
        };
        match stage {
            StageId::A => {
                for q in &data.expert_pspc {
                    pspc.insert(q.stock.clone(), fit_quantile_prior(q)?);
                }
                rec.outputs.push(w.json("stage_A/pspc_priors.json", &pspc)?);
            }
            StageId::B => {
                let prior = RunSizePrior {
                    lower: config.mark_recapture.lower,
                    upper: config.mark_recapture.upper,
                };
                for (k, row) in data.smolt_trap.iter().enumerate() {
                    let trap = SmoltTrapData {
                        river_index: 0,
                        year: row.year,
                        marked: row.marked,
                        captured: row.captured,
                        recaptured: row.recaptured,
                    };
                    let res = markrecapture_posterior(
                        &row.river,
                        &trap,
                        prior,
                        config.mark_recapture.n_draws,
                        derive_seed_index(seed, k as u64),
                    )?;
                    rec.notes.extend(res.warnings);
                    stage_b.push(res.posterior);
                }
                let rel = "stage_B/smolt_draws.csv";
                std::fs::create_dir_all(w.root.join("stage_B")).map_err(|e| Error::io(&w.root, e))?;
                write_smolt_draws(&w.root.join(rel), &stage_b)?;
                rec.outputs.push(w.record(rel)?);
                rec.outputs.push(w.json("stage_B/warnings.json", &rec.notes)?);
            }
            StageId::C => {
                let cfg = RiverModelConfig {
                    seed,
                    ..config.river_model.clone()
                };
                let fit = fit_river_model(&data.rivers, &data.electrofishing, &stage_b, &cfg)?;
                let rel = "stage_C/smolt_draws.csv";
                std::fs::create_dir_all(w.root.join("stage_C")).map_err(|e| Error::io(&w.root, e))?;
                write_smolt_draws(&w.root.join(rel), &fit.posteriors)?;
                rec.outputs.push(w.record(rel)?);
                rec.outputs.push(w.json("stage_C/survival_draws.json", &fit.survival_draws)?);
                rec.outputs.push(w.json("stage_C/diagnostics.json", &fit.diagnostics)?);
                stage_c = fit.posteriors;
            }
            StageId::D => {
                let cfg = SrHyperpriorConfig {
                    seed,
                    ..config.sr_hyperprior.clone()
                };
                let fit = fit_sr_hyperprior(&data.external_sr, &cfg)?;
                let joint = fit.mixture_moments();
                rec.outputs.push(w.json("stage_D/sr_prior.json", &joint)?);
                rec.outputs.push(w.json("stage_D/hyper_draws.json", &fit.hyper_draws)?);
                rec.outputs.push(w.json("stage_D/diagnostics.json", &fit.diagnostics)?);
                sr_joint = Some(joint);
            }
            StageId::E => {
                let post = fit_m74_series(&data.m74, &years)?;
                rec.outputs.push(w.json("stage_E/m74_posteriors.json", &post)?);
                m74 = Some(post);
            }
            StageId::LifeHistory => {
                let joint = match (config.feeds(StageId::D, stage), &sr_joint) {
                    (true, Some(j)) => j.clone(),
                    _ => {
                        let note = "stage D not bound: stock-recruit prior taken from priors.default_sr".to_string();
                        rec.notes.push(note.clone());
                        fallbacks.push(note);
                        config.priors.default_sr.clone().expect("validated")
                    }
                };
                let pspc_used = if config.feeds(StageId::A, stage) { pspc.clone() } else { BTreeMap::new() };
                let m74_used = if config.feeds(StageId::E, stage) { m74.clone() } else { None };
                let smolt_source = if config.feeds(StageId::C, stage) {
                    &stage_c
                } else if config.feeds(StageId::B, stage) {
                    &stage_b
                } else {
                    &Vec::new()
                };
                let approx: Vec<SmoltLikelihoodApprox> =
                    smolt_source.iter().map(approximate_smolt_likelihood).collect::<Result<_>>()?;
                let spec = build_model_spec(config, &data, &years, &joint, &pspc_used, m74_used, approx)?;
                let model = LifeHistoryModel::new(spec)?;
                let (chains, report) = fit_life_history(&model, &config.life_history, seed)?;
                rec.outputs.extend(write_posterior(&w, &model, &chains, &report)?);
                if config.life_history.enforce_gate && !report.passed() {
                    return Err(Error::Convergence {
                        stage: "life_history".into(),
                        detail: report.summary(),
                    });
                }
                lh = Some((model, chains, report));
            }
        }
        records.push(rec);
    }

    let manifest = Manifest {
        tool: "salmon".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        seed: config.seed,
        stage_order: order,
        inputs,
        stages: records,
        fallbacks,
        config: config.clone(),
    };
    let path = w.root.join(MANIFEST_FILE);
    std::fs::write(&path, manifest.to_json()?).map_err(|e| Error::io(&path, e))?;
    let (model, chains, diagnostics) = lh.expect("life_history is always in the stage list");
    Ok(PipelineOutput {
        manifest,
        model,
        chains,
        diagnostics,
        stage_b,
        stage_c,
    })
}

/// Model years span the catch series.
fn model_years(data: &Dataset) -> Result<Vec<i32>> {
    let first = data.catch.iter().map(|c| c.year).min();
    let last = data.catch.iter().map(|c| c.year).max();
    match (first, last) {
        (Some(a), Some(b)) => Ok((a..=b).collect()),
        _ => Err(Error::Validation("the catch file has no rows".into())),
    }
}

/// Assembles the life-history model from the data and the upstream stage outputs.
///
/// Initial-state priors are centred on the stock's median smolt approximation
/// (or half the PSPC prior centre without one), with sea-ages following the
/// prior-median survival and maturation.
pub fn build_model_spec(
    config: &PipelineConfig,
    data: &Dataset,
    years: &[i32],
    sr_joint: &BivariateNormal,
    pspc: &BTreeMap<String, LognormalPrior>,
    m74: Option<Vec<M74YearPosterior>>,
    smolt_approx: Vec<SmoltLikelihoodApprox>,
) -> Result<ModelSpec> {
    let ages = config.model.ages;
    let big_a = ages.max_sea_age;
    let ny = years.len();
    let first_year = years[0];
    let stock_names: Vec<String> = match &config.model.stocks {
        Some(s) => s.clone(),
        None => data.rivers.iter().map(|r| r.river.clone()).collect(),
    };
    ensure!(
        !stock_names.is_empty(),
        Validation,
        "no stocks: list model.stocks or provide a rivers file"
    );

    let fisheries: Vec<FisheryDef> = config
        .fisheries
        .iter()
        .map(|f| FisheryDef {
            id: f.id.clone(),
            catchability: f.q_prior.median,
            selectivity: f.selectivity.clone(),
            reporting_rate: f.reporting_rate,
            obs_sd: f.obs_sd,
        })
        .collect();
    let mut effort = vec![vec![f64::NAN; ny]; fisheries.len()];
    for c in &data.catch {
        let fi = fisheries
            .iter()
            .position(|f| f.id == c.fishery)
            .ok_or_else(|| Error::Validation(format!("catch row for unconfigured fishery {:?}", c.fishery)))?;
        effort[fi][(c.year - first_year) as usize] = c.effort;
    }
    for (f, row) in fisheries.iter().zip(&effort) {
        if let Some(t) = row.iter().position(|e| e.is_nan()) {
            return Err(Error::Validation(format!(
                "fishery {} has no effort for {}",
                f.id,
                first_year + t as i32
            )));
        }
    }
    let reared = if data.reared.is_empty() {
        None
    } else {
        let mut r = vec![0.0; ny];
        for row in &data.reared {
            if let Some(t) = years.iter().position(|y| *y == row.year) {
                r[t] = row.releases;
            }
        }
        Some(r)
    };

    let in_stock = |s: &str| stock_names.iter().any(|n| n == s);
    let in_years = |y: i32| y >= first_year && y < first_year + ny as i32;
    let smolts: Vec<SmoltLikelihoodApprox> = smolt_approx
        .into_iter()
        .filter(|a| in_stock(&a.stock) && in_years(a.year))
        .collect();
    let observations = Observations {
        catch: data.catch.clone(),
        tags: data.tags.clone(),
        spawners: data
            .spawners
            .iter()
            .filter(|s| in_stock(&s.stock) && in_years(s.year))
            .cloned()
            .collect(),
        smolts,
    };

    let p = &config.priors;
    let m0 = p.m_post_smolt.lognormal()?;
    let m = p.m_adult.lognormal()?;
    let maturation = if p.maturation.is_empty() {
        vec![BetaPrior { a: 1.0, b: 1.0 }; big_a - 1]
    } else {
        p.maturation.clone()
    };
    let (m74_priors, m74_history) = match m74 {
        Some(post) => (
            post.iter()
                .map(|y| {
                    let (a, b) = y.survival_params();
                    BetaPrior { a, b }
                })
                .collect(),
            post,
        ),
        None => (vec![], vec![]),
    };
    let mut mat_mean: Vec<f64> = maturation.iter().map(|b| b.a / (b.a + b.b)).collect();
    mat_mean.push(1.0);

    let mut stock_recruit = Vec::new();
    let mut init_smolts = Vec::new();
    let mut init_sea = Vec::new();
    for name in &stock_names {
        let sr = SrPrior {
            joint: sr_joint.clone(),
            pspc: pspc.get(name).copied(),
        };
        let mut own: Vec<f64> = observations.smolts.iter().filter(|a| a.stock == *name).map(|a| a.mu).collect();
        own.sort_by(f64::total_cmp);
        let centre = if own.is_empty() {
            (0.5f64).ln() - sr.centre()[1]
        } else {
            own[own.len() / 2]
        };
        init_smolts.push(LognormalPrior::new(centre, p.init_sd)?);
        let mut level = centre - m0.median();
        let mut sea = Vec::with_capacity(big_a);
        for l in &mat_mean {
            sea.push(LognormalPrior::new(level, p.init_sd)?);
            level += (1.0 - l).max(1e-3).ln() - m.median();
        }
        init_sea.push(sea);
        stock_recruit.push(sr);
    }

    Ok(ModelSpec {
        ages,
        first_year,
        n_years: ny,
        stocks: stock_names
            .iter()
            .map(|n| StockSpec {
                name: n.clone(),
                fecundity: config.model.fecundity.clone(),
                female_prop: config.model.female_prop,
            })
            .collect(),
        fisheries,
        effort,
        reared,
        observations,
        priors: LifeHistoryPriors {
            stock_recruit,
            catchability: config.fisheries.iter().map(|f| f.q_prior.lognormal()).collect::<Result<_>>()?,
            m_post_smolt: m0,
            m_adult: m,
            maturation,
            m74_survival: m74_priors,
            sigma_r_scale: p.sigma_r_scale,
            init_smolts,
            init_sea,
        },
        fixed_noise: ProcessNoise {
            sigma_r: 0.0,
            sigma_n: config.model.sigma_n,
            sigma_s: config.model.sigma_s,
        },
        zero_floor: config.model.zero_floor,
        m74_history,
    })
}

/// Runs the life-history chains from jittered copies of the model's starting
/// point and computes the convergence report.
pub fn fit_life_history(
    model: &LifeHistoryModel,
    cfg: &LifeHistorySection,
    seed: u64,
) -> Result<(Vec<PosteriorChain>, DiagnosticsReport)> {
    let (n_warmup, n_iter) = cfg.sampler()?;
    let base = model.initial_point();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "inits"));
    let mut inits = Vec::with_capacity(cfg.chains);
    for _ in 0..cfg.chains {
        let mut chosen = base.clone();
        for _ in 0..50 {
            let cand: Vec<f64> = base
                .iter()
                .map(|v| { let z: f64 = StandardNormal.sample(&mut rng); v + cfg.jitter * z })
                .collect();
            if model.log_posterior(&cand).is_ok_and(|lp| lp.is_finite()) {
                chosen = cand;
                break;
            }
        }
        inits.push(chosen);
    }
    let sampler = SamplerConfig {
        n_warmup,
        n_iter,
        thin: cfg.thin,
        blocks: Some(model.blocks()),
        initial_scales: Some(model.initial_scales()),
        target_acceptance: 0.3,
        adapt: true,
    };
    let chains = mcmc::run_chains(model, &inits, seed, &sampler)?;
    let natural: Vec<PosteriorChain> = chains
        .iter()
        .map(|c| to_natural_chain(model, c))
        .collect::<Result<_>>()?;
    let report = mcmc::diagnostics(&model.registry().names(), &natural, cfg.rhat_threshold);
    Ok((chains, report))
}

fn to_natural_chain(model: &LifeHistoryModel, c: &PosteriorChain) -> Result<PosteriorChain> {
    Ok(PosteriorChain {
        draws: c
            .draws
            .iter()
            .map(|d| model.registry().to_natural(d))
            .collect::<Result<_>>()?,
        ..c.clone()
    })
}

/// Writes `model.json`, one CSV of natural-scale draws per chain, the smolt
/// approximations used, and the diagnostics.
fn write_posterior(
    w: &Writer,
    model: &LifeHistoryModel,
    chains: &[PosteriorChain],
    report: &DiagnosticsReport,
) -> Result<Vec<FileRecord>> {
    let mut out = vec![w.json("life_history/model.json", model)?];
    let names = model.registry().names();
    for (k, c) in chains.iter().enumerate() {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| Error::Internal(format!("chain csv: {e}"));
        wtr.write_record(&names).map_err(csv_err)?;
        for d in &c.draws {
            let nat = model.registry().to_natural(d)?;
            wtr.write_record(nat.iter().map(|v| v.to_string())).map_err(csv_err)?;
        }
        let bytes = wtr.into_inner().map_err(|e| Error::Internal(e.to_string()))?;
        out.push(w.write(&format!("life_history/chains/chain_{k}.csv"), &bytes)?);
    }
    let approx_rel = "life_history/smolt_approx.csv";
    write_smolt_approx(&w.root.join(approx_rel), &model.spec().observations.smolts)?;
    out.push(w.record(approx_rel)?);
    out.push(w.json("life_history/diagnostics.json", report)?);
    out.push(w.write("life_history/diagnostics.txt", report.table().as_bytes())?);
    Ok(out)
}

/// A fitted life-history posterior read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedPosterior {
    pub model: LifeHistoryModel,
    /// Unconstrained draws per chain.
    pub chains: Vec<PosteriorChain>,
}

impl LoadedPosterior {
    /// Reads `model.json` and `chains/chain_*.csv` from a life-history
    /// directory, or from its parent pipeline output directory.
    pub fn load(dir: &Path) -> Result<Self> {
        let dir = if dir.join("model.json").exists() {
            dir.to_path_buf()
        } else {
            dir.join("life_history")
        };
        let model_path = dir.join("model.json");
        let text = std::fs::read_to_string(&model_path).map_err(|e| Error::io(&model_path, e))?;
        let model: LifeHistoryModel = serde_json::from_str(&text).map_err(|e| Error::parse(&model_path, e))?;
        let names = model.registry().names();
        let mut chains = Vec::new();
        for k in 0.. {
            let path = dir.join("chains").join(format!("chain_{k}.csv"));
            if !path.exists() {
                break;
            }
            let mut rdr = csv::Reader::from_path(&path).map_err(|e| Error::parse(&path, e))?;
            let header: Vec<String> = rdr
                .headers()
                .map_err(|e| Error::parse(&path, e))?
                .iter()
                .map(String::from)
                .collect();
            ensure!(header == names, Validation, "{}: header does not match the model", path.display());
            let mut draws = Vec::new();
            for rec in rdr.records() {
                let rec = rec.map_err(|e| Error::parse(&path, e))?;
                let nat: Vec<f64> = rec
                    .iter()
                    .map(|v| v.parse::<f64>().map_err(|e| Error::parse(&path, e)))
                    .collect::<Result<_>>()?;
                draws.push(model.registry().from_natural(&nat)?);
            }
            chains.push(PosteriorChain {
                log_posterior: vec![f64::NAN; draws.len()],
                draws,
                seed: 0,
                n_warmup: 0,
                n_iter: 0,
                thin: 1,
                acceptance: vec![],
                adaptation: vec![],
            });
        }
        ensure!(!chains.is_empty(), Validation, "{}: no chain files", dir.display());
        Ok(Self { model, chains })
    }

    /// Natural-scale copy of the chains.
    pub fn natural_chains(&self) -> Result<Vec<PosteriorChain>> {
        self.chains.iter().map(|c| to_natural_chain(&self.model, c)).collect()
    }

    pub fn diagnostics(&self, threshold: f64) -> Result<DiagnosticsReport> {
        Ok(mcmc::diagnostics(&self.model.registry().names(), &self.natural_chains()?, threshold))
    }
}

/// Coordinate of `log smolts` for a stock and year: an initial smolt cohort
/// before the smolt delay, a latent recruitment afterwards.
pub fn smolt_coordinate(model: &LifeHistoryModel, stock: &str, year: i32) -> Option<usize> {
    let spec = model.spec();
    let s = spec.stocks.iter().position(|x| x.name == stock)?;
    let t = usize::try_from(year - spec.first_year).ok().filter(|t| *t < spec.n_years)?;
    let delay = spec.ages.smolt_delay;
    let reg = model.registry();
    if t < delay {
        Some(reg.range("init_smolts").ok()?.start + s * delay + t)
    } else {
        let nl = spec.n_years - delay;
        Some(reg.range("recruits").ok()?.start + s * nl + (t - delay))
    }
}

/// Smolt abundance draws of one stock and year, pooled over chains.
pub fn smolt_draws(model: &LifeHistoryModel, chains: &[PosteriorChain], stock: &str, year: i32) -> Option<Vec<f64>> {
    let k = smolt_coordinate(model, stock, year)?;
    Some(chains.iter().flat_map(|c| c.draws.iter().map(move |d| d[k].exp())).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerunReport {
    pub manifest_hash: String,
    pub rerun_manifest_hash: String,
    /// `(path, matches)` for every recorded output.
    pub outputs: Vec<(String, bool)>,
}

impl RerunReport {
    pub fn identical(&self) -> bool {
        self.outputs.iter().all(|(_, ok)| *ok)
    }
}

/// Repeats a recorded run into `out_dir` and compares every output hash.
/// Fails when an input file no longer matches its recorded hash.
pub fn rerun_from_manifest(manifest_path: &Path, out_dir: &Path) -> Result<RerunReport> {
    let recorded = Manifest::load(manifest_path)?;
    let now = input_records(&recorded.config.data)?;
    for (old, new) in recorded.inputs.iter().zip(&now) {
        ensure!(
            old == new,
            Validation,
            "input {} changed since the recorded run ({} vs {})",
            old.path,
            old.sha256,
            new.sha256
        );
    }
    let mut cfg = recorded.config.clone();
    cfg.out_dir = out_dir.to_path_buf();
    let rerun = run_pipeline(&cfg)?;
    let fresh: BTreeMap<&str, &str> = rerun
        .manifest
        .outputs()
        .map(|f| (f.path.as_str(), f.sha256.as_str()))
        .collect();
    let outputs = recorded
        .outputs()
        .map(|f| {
            let on_disk = file_hash(&out_dir.join(&f.path)).unwrap_or_default();
            let ok = fresh.get(f.path.as_str()) == Some(&f.sha256.as_str()) && on_disk == f.sha256;
            (f.path.clone(), ok)
        })
        .collect();
    let mut normalized = rerun.manifest.clone();
    normalized.config.out_dir = recorded.config.out_dir.clone();
    Ok(RerunReport {
        manifest_hash: recorded.hash()?,
        rerun_manifest_hash: normalized.hash()?,
        outputs,
    })
}

/// Pipeline config for a simulated design written by `write_simulation`:
/// fixed fishery definitions, deliberately offset q and mortality priors, and
/// the full stage graph. Designs with more than two stocks get the longer
/// 4 x 20k sampling budget.
pub fn demo_config(design: &SimulationDesign, data_dir: &Path, out_dir: &Path) -> PipelineConfig {
    let big_a = design.ages.max_sea_age;
    PipelineConfig {
        seed: design.seed,
        out_dir: out_dir.to_path_buf(),
        data: DataSection {
            dir: data_dir.to_path_buf(),
            files: DataFiles::default(),
        },
        stages: full_stage_graph(),
        model: ModelSection {
            ages: design.ages,
            fecundity: design.stocks[0].fecundity.clone(),
            female_prop: design.stocks[0].female_prop,
            stocks: Some(design.stocks.iter().map(|s| s.name.clone()).collect()),
            sigma_n: 0.0,
            sigma_s: 0.0,
            zero_floor: 0.5,
        },
        fisheries: design
            .fisheries
            .iter()
            .map(|f| FisherySection {
                id: f.id.clone(),
                selectivity: f.selectivity.clone(),
                reporting_rate: f.reporting_rate,
                obs_sd: f.obs_sd,
                q_prior: MedianPrior { median: 1.5e-4, sd: 1.0 },
            })
            .collect(),
        priors: PriorSection {
            maturation: vec![BetaPrior { a: 1.0, b: 1.0 }; big_a - 1],
            default_sr: Some(BivariateNormal {
                mean: [5.0, -10.0],
                cov: [[1.0, 0.0], [0.0, 2.0]],
            }),
            ..PriorSection::default()
        },
        mark_recapture: MarkRecaptureSection::default(),
        river_model: RiverModelConfig {
            n_draws: 4000,
            ..RiverModelConfig::default()
        },
        sr_hyperprior: SrHyperpriorConfig::default(),
        life_history: LifeHistorySection {
            iterations: if design.stocks.len() > 2 { 20_000 } else { 8_000 },
            thin: if design.stocks.len() > 2 { 5 } else { 2 },
            ..LifeHistorySection::default()
        },
    }
}

/// Reads stage B or C smolt draws written by a pipeline run.
pub fn load_stage_draws(out_dir: &Path, stage: StageId) -> Result<Vec<SmoltPosterior>> {
    read_smolt_draws(&out_dir.join(stage.dir()).join("smolt_draws.csv"))
}
