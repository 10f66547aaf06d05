//! Read-only query layer over a fitted posterior directory.
//!
//! Handlers are plain functions returning JSON values so that the HTTP server
//! and the command line render identical bytes. Every payload carries
//! `"schema": "v1"`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::decision::{compare_policies, project, FieldError, Policy, ProjectionContext};
use crate::error::Error;
use crate::mcmc::DiagnosticsReport;
use crate::model::LifeHistoryModel;
use crate::pipeline::{smolt_draws, LoadedPosterior};
use crate::stats::{quantile_sorted, quantiles};

pub const SCHEMA: &str = "v1";
/// Draws kept for interactive projections.
pub const DEFAULT_SUBSAMPLE: usize = 1000;
/// Projection seed fixed by the server, so identical requests give identical answers.
pub const DEFAULT_PROJECTION_SEED: u64 = 2024;
const SUBSAMPLE_SEED: u64 = 17;
const DEFAULT_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceOptions {
    /// Project on every posterior draw instead of the fixed subsample.
    pub full_draws: bool,
    pub projection_seed: u64,
    pub rhat_threshold: f64,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            full_draws: false,
            projection_seed: DEFAULT_PROJECTION_SEED,
            rhat_threshold: 1.05,
        }
    }
}

/// Error payload with an HTTP status and field-level detail.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ServiceError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    pub fields: Vec<FieldError>,
}

impl ServiceError {
    pub fn bad_request(message: impl Into<String>, fields: Vec<FieldError>) -> Self {
        Self {
            status: 400,
            code: "E_VALIDATION".into(),
            message: message.into(),
            fields,
        }
    }

    pub fn not_found(message: impl Into<String>, field: &str) -> Self {
        Self {
            status: 404,
            code: "E_NOT_FOUND".into(),
            message: message.into(),
            fields: vec![FieldError {
                field: field.into(),
                message: "not found".into(),
            }],
        }
    }

    pub fn body(&self) -> Value {
        envelope(json!({ "error": self }))
    }
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Validation(_) | Error::Domain(_) | Error::Dimension(_) => 400,
            _ => 500,
        };
        Self {
            status,
            code: e.code().into(),
            message: e.to_string(),
            fields: vec![],
        }
    }
}

impl From<ServiceError> for Error {
    fn from(e: ServiceError) -> Self {
        let detail = if e.fields.is_empty() {
            e.message
        } else {
            let f: Vec<String> = e.fields.iter().map(|f| format!("{}: {}", f.field, f.message)).collect();
            format!("{} ({})", e.message, f.join("; "))
        };
        match e.status {
            404 | 400 => Error::Validation(detail),
            _ => Error::Internal(detail),
        }
    }
}

pub type ServiceResult = std::result::Result<Value, ServiceError>;

/// Adds the schema field to an object payload.
pub fn envelope(mut v: Value) -> Value {
    if let Value::Object(m) = &mut v {
        m.insert("schema".into(), Value::String(SCHEMA.into()));
    }
    v
}

/// The canonical text of a payload, shared by the server and the CLI.
pub fn render(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("JSON values always serialize");
    s.push('\n');
    s
}

/// Posterior state shared by all requests. Never written after loading.
#[derive(Debug)]
pub struct PosteriorStore {
    pub dir: PathBuf,
    pub model: LifeHistoryModel,
    pub options: ServiceOptions,
    context: ProjectionContext,
    policies: BTreeMap<String, Policy>,
    /// `[stock][year]` sorted smolt draws.
    smolts: Vec<Vec<Vec<f64>>>,
    report: DiagnosticsReport,
    summary_quantiles: Vec<[f64; 3]>,
}

/// Seeded subsample of `n` indices from `total`, in increasing order.
pub fn subsample_indices(total: usize, n: usize, seed: u64) -> Vec<usize> {
    if total <= n {
        return (0..total).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, total, n).into_vec();
    idx.sort_unstable();
    idx
}

impl PosteriorStore {
    pub fn open(dir: &Path, options: ServiceOptions) -> crate::Result<Self> {
        let post = LoadedPosterior::load(dir)?;
        let pooled: Vec<Vec<f64>> = post.chains.iter().flat_map(|c| c.draws.iter().cloned()).collect();
        let chosen: Vec<Vec<f64>> = if options.full_draws {
            pooled
        } else {
            subsample_indices(pooled.len(), DEFAULT_SUBSAMPLE, SUBSAMPLE_SEED)
                .into_iter()
                .map(|i| pooled[i].clone())
                .collect()
        };
        let context = ProjectionContext::new(&post.model, &chosen)?;
        let fisheries = context.fisheries.clone();
        let policies = [
            Policy::status_quo(&fisheries),
            Policy::moratorium(&fisheries),
            Policy::uniform("half_effort", 0.5, &fisheries),
        ]
        .into_iter()
        .map(|p| (p.name.clone(), p))
        .collect();
        let spec = post.model.spec();
        let years = post.model.years();
        let smolts = spec
            .stocks
            .iter()
            .map(|s| {
                years
                    .iter()
                    .map(|&y| {
                        let mut d = smolt_draws(&post.model, &post.chains, &s.name, y).expect("model stock and year");
                        d.sort_by(f64::total_cmp);
                        d
                    })
                    .collect()
            })
            .collect();
        let natural = post.natural_chains()?;
        let report = post.diagnostics(options.rhat_threshold)?;
        let summary_quantiles = (0..post.model.dim())
            .map(|k| {
                let col: Vec<f64> = natural.iter().flat_map(|c| c.column(k)).collect();
                let q = quantiles(&col, &[0.05, 0.5, 0.95]);
                [q[0], q[1], q[2]]
            })
            .collect();
        Ok(Self {
            dir: dir.to_path_buf(),
            model: post.model,
            options,
            context,
            policies,
            smolts,
            report,
            summary_quantiles,
        })
    }

    pub fn context(&self) -> &ProjectionContext {
        &self.context
    }

    pub fn builtin_policies(&self) -> impl Iterator<Item = &Policy> {
        self.policies.values()
    }

    pub fn health(&self) -> Value {
        envelope(json!({ "status": "ok" }))
    }

    pub fn stocks(&self) -> Value {
        let spec = self.model.spec();
        let years = self.model.years();
        let stocks: Vec<Value> = spec
            .stocks
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let mut pspc: Vec<f64> = self.context.draws.iter().map(|d| d.stocks[i].pspc()).collect();
                pspc.sort_by(f64::total_cmp);
                json!({
                    "name": s.name,
                    "pspc": {
                        "q05": quantile_sorted(&pspc, 0.05),
                        "q50": quantile_sorted(&pspc, 0.5),
                        "q95": quantile_sorted(&pspc, 0.95),
                    },
                })
            })
            .collect();
        envelope(json!({
            "stocks": stocks,
            "fisheries": self.context.fisheries,
            "first_year": years.first(),
            "last_year": years.last(),
            "policies": self.policies.keys().collect::<Vec<_>>(),
        }))
    }

    pub fn summary(&self) -> Value {
        let params: Vec<Value> = self
            .report
            .params
            .iter()
            .zip(&self.summary_quantiles)
            .map(|(p, q)| {
                json!({
                    "name": p.name,
                    "mean": p.mean,
                    "sd": p.sd,
                    "q05": q[0],
                    "q50": q[1],
                    "q95": q[2],
                    "rhat": p.rhat,
                    "ess": p.ess,
                    "flagged": p.flagged,
                })
            })
            .collect();
        envelope(json!({
            "n_chains": self.report.n_chains,
            "draws_per_chain": self.report.draws_per_chain,
            "rhat_threshold": self.report.threshold,
            "max_rhat": self.report.max_rhat(),
            "min_ess": self.report.min_ess(),
            "passed": self.report.passed(),
            "params": params,
        }))
    }

    /// Smolt quantiles by year. `quantiles` is a comma-separated list of
    /// probabilities; a default set is used when absent.
    pub fn smolts(&self, stock: Option<&str>, quantiles: Option<&str>) -> ServiceResult {
        let stock = stock.ok_or_else(|| {
            ServiceError::bad_request(
                "missing stock",
                vec![FieldError {
                    field: "stock".into(),
                    message: "required".into(),
                }],
            )
        })?;
        let i = self
            .model
            .spec()
            .stocks
            .iter()
            .position(|s| s.name == stock)
            .ok_or_else(|| ServiceError::not_found(format!("unknown stock {stock:?}"), "stock"))?;
        let probs = parse_quantiles(quantiles)?;
        let values: Vec<Vec<f64>> = self.smolts[i]
            .iter()
            .map(|d| probs.iter().map(|p| quantile_sorted(d, *p)).collect())
            .collect();
        Ok(envelope(json!({
            "stock": stock,
            "quantiles": probs,
            "years": self.model.years(),
            "values": values,
        })))
    }

    pub fn project(&self, policy: &Policy) -> ServiceResult {
        let errs = policy.check(&self.context.fisheries);
        if !errs.is_empty() {
            return Err(ServiceError::bad_request(format!("invalid policy {:?}", policy.name), errs));
        }
        let r = project(&self.context, policy, self.options.projection_seed)?;
        Ok(envelope(serde_json::to_value(r).map_err(|e| Error::Internal(e.to_string()))?))
    }

    /// Parses and projects a raw request body.
    pub fn project_body(&self, body: &[u8]) -> ServiceResult {
        self.project(&parse_policy(body)?)
    }

    /// Compares built-in policies by id; every built-in when `ids` is absent.
    pub fn compare(&self, ids: Option<&str>) -> ServiceResult {
        let chosen: Vec<Policy> = match ids.map(str::trim).filter(|s| !s.is_empty()) {
            None => self.policies.values().cloned().collect(),
            Some(list) => list
                .split(',')
                .map(|id| {
                    let id = id.trim();
                    self.policies.get(id).cloned().ok_or_else(|| {
                        ServiceError::not_found(
                            format!(
                                "unknown policy {id:?}; known: {}",
                                self.policies.keys().cloned().collect::<Vec<_>>().join(", ")
                            ),
                            "ids",
                        )
                    })
                })
                .collect::<std::result::Result<_, _>>()?,
        };
        self.compare_policies(&chosen)
    }

    pub fn compare_policies(&self, policies: &[Policy]) -> ServiceResult {
        for p in policies {
            let errs = p.check(&self.context.fisheries);
            if !errs.is_empty() {
                return Err(ServiceError::bad_request(format!("invalid policy {:?}", p.name), errs));
            }
        }
        let table = compare_policies(&self.context, policies, self.options.projection_seed)?;
        Ok(envelope(serde_json::to_value(table).map_err(|e| Error::Internal(e.to_string()))?))
    }
}

/// Policy from a JSON body, with parse errors reported against the body or
/// the field serde names.
pub fn parse_policy(body: &[u8]) -> std::result::Result<Policy, ServiceError> {
    if body.iter().all(u8::is_ascii_whitespace) {
        return Err(ServiceError::bad_request(
            "empty policy",
            vec![FieldError {
                field: "body".into(),
                message: "a policy object is required".into(),
            }],
        ));
    }
    serde_json::from_slice(body).map_err(|e| {
        let msg = e.to_string();
        let field = ["unknown field `", "missing field `", "invalid type"]
            .iter()
            .find_map(|pat| {
                msg.find(pat).and_then(|i| {
                    let rest = &msg[i + pat.len()..];
                    rest.find('`').map(|j| rest[..j].to_string()).filter(|_| !pat.starts_with("invalid"))
                })
            })
            .unwrap_or_else(|| "body".into());
        ServiceError::bad_request("malformed policy", vec![FieldError { field, message: msg }])
    })
}

fn parse_quantiles(q: Option<&str>) -> std::result::Result<Vec<f64>, ServiceError> {
    let Some(text) = q.filter(|s| !s.trim().is_empty()) else {
        return Ok(DEFAULT_QUANTILES.to_vec());
    };
    let bad = |m: String| {
        ServiceError::bad_request(
            "invalid quantiles",
            vec![FieldError {
                field: "quantiles".into(),
                message: m,
            }],
        )
    };
    let mut probs = Vec::new();
    for part in text.split(',') {
        let p: f64 = part.trim().parse().map_err(|_| bad(format!("{part:?} is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(format!("{p} is outside [0, 1]")));
        }
        probs.push(p);
    }
    probs.sort_by(f64::total_cmp);
    Ok(probs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subsample_is_sorted_unique_and_seeded() {
        let a = subsample_indices(5000, 1000, 3);
        assert_eq!(a.len(), 1000);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(a, subsample_indices(5000, 1000, 3));
        assert_eq!(subsample_indices(10, 1000, 3), (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn policy_parse_errors_name_fields() {
        let e = parse_policy(b"").unwrap_err();
        assert_eq!((e.status, e.fields[0].field.as_str()), (400, "body"));
        let e = parse_policy(br#"{"name":"x","bogus":1}"#).unwrap_err();
        assert_eq!(e.fields[0].field, "bogus");
        let e = parse_policy(br#"{"horizon":3}"#).unwrap_err();
        assert_eq!(e.fields[0].field, "name");
        let p = parse_policy(br#"{"name":"x","multipliers":{"a":0.5,"b":[1,1,1,1,1,1]}}"#).unwrap();
        assert_eq!(p.horizon, 6);
    }

    #[test]
    fn quantile_parsing() {
        assert_eq!(parse_quantiles(Some("0.9, 0.1")).unwrap(), vec![0.1, 0.9]);
        assert!(parse_quantiles(Some("1.5")).is_err());
        assert!(parse_quantiles(Some("abc")).is_err());
        assert_eq!(parse_quantiles(None).unwrap().len(), 5);
    }

    #[test]
    fn envelope_marks_schema() {
        let v = envelope(json!({"status": "ok"}));
        assert_eq!(v["schema"], "v1");
        assert!(render(&v).ends_with('\n'));
    }
}
