//! `salmon` command line and HTTP service.

pub mod server;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use salmon_core::decision::Policy;
use salmon_core::pipeline::{demo_config, rerun_from_manifest, run_pipeline, LoadedPosterior, PipelineConfig};
use salmon_core::service::{parse_policy, render, PosteriorStore, ServiceOptions, DEFAULT_PROJECTION_SEED};
use salmon_core::simulate::{make_demo, simulate, write_simulation, DemoScale};
use salmon_core::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "salmon", version, about = "Bayesian salmon stock assessment")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic demo dataset with its truth and a pipeline config.
    Simulate(SimulateArgs),
    /// Run the assessment pipeline from a config file.
    Fit(FitArgs),
    /// Print convergence diagnostics; exits nonzero when the R-hat gate fails.
    Diagnose(DiagnoseArgs),
    /// Project a policy file forward from a posterior directory.
    Project(ProjectArgs),
    /// Compare policies on shared random numbers.
    Compare(CompareArgs),
    /// Repeat a recorded pipeline run and check every output hash.
    Rerun(RerunArgs),
    /// Serve a posterior directory over HTTP, read-only.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// small or medium
    #[arg(long, default_value = "small")]
    pub demo: DemoScale,
    #[arg(long, env = "SALMON_SEED", default_value_t = 1)]
    pub seed: u64,
    #[arg(long, env = "SALMON_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long, env = "SALMON_CONFIG")]
    pub config: PathBuf,
    #[arg(long, env = "SALMON_SEED")]
    pub seed: Option<u64>,
    #[arg(long, env = "SALMON_CHAINS")]
    pub chains: Option<usize>,
    /// Life-history iterations per chain, warmup included.
    #[arg(long, env = "SALMON_ITERS")]
    pub iters: Option<usize>,
    #[arg(long, env = "SALMON_OUT")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PosteriorArgs {
    /// Pipeline output directory or its life_history subdirectory.
    #[arg(long, env = "SALMON_POSTERIOR_DIR")]
    pub posterior_dir: PathBuf,
    /// Project every posterior draw instead of the fixed 1000-draw subsample.
    #[arg(long, env = "SALMON_FULL_DRAWS")]
    pub full_draws: bool,
    #[arg(long, env = "SALMON_SEED", default_value_t = DEFAULT_PROJECTION_SEED)]
    pub seed: u64,
}

impl PosteriorArgs {
    fn store(&self) -> Result<PosteriorStore> {
        PosteriorStore::open(
            &self.posterior_dir,
            ServiceOptions {
                full_draws: self.full_draws,
                projection_seed: self.seed,
                ..ServiceOptions::default()
            },
        )
    }
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long, env = "SALMON_POSTERIOR_DIR")]
    pub posterior_dir: PathBuf,
    #[arg(long, default_value_t = 1.05)]
    pub rhat_threshold: f64,
}

#[derive(Debug, Args)]
pub struct ProjectArgs {
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    /// JSON policy file.
    #[arg(long)]
    pub policy: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    /// JSON array of policies; the built-in policies when absent.
    #[arg(long, conflicts_with = "ids")]
    pub policies: Option<PathBuf>,
    /// Comma-separated built-in policy ids.
    #[arg(long)]
    pub ids: Option<String>,
    /// Also write the decision table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, env = "SALMON_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub posterior: PosteriorArgs,
    #[arg(long, env = "SALMON_PORT", default_value_t = 8080)]
    pub port: u16,
    #[arg(long, env = "SALMON_HOST", default_value = "127.0.0.1")]
    pub host: String,
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Runs one command, writing its normal output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<()> {
    let w = |out: &mut dyn std::io::Write, s: &str| {
        out.write_all(s.as_bytes()).map_err(|e| Error::Internal(format!("stdout: {e}")))
    };
    match cli.command {
        Command::Simulate(a) => {
            let design = make_demo(a.demo, a.seed);
            let sim = simulate(&design)?;
            let data = a.out.join("data");
            write_simulation(&data, &design, &sim)?;
            let cfg = demo_config(&design, Path::new("data"), Path::new("fit"));
            let path = a.out.join("config.toml");
            std::fs::write(&path, cfg.to_toml()?).map_err(|e| Error::Io { path: path.clone(), source: e })?;
            w(out, &format!("wrote {} and {}\n", data.display(), path.display()))
        }
        Command::Fit(a) => {
            let mut cfg = PipelineConfig::load(&a.config)?;
            if let Some(s) = a.seed {
                cfg.seed = s;
            }
            if let Some(c) = a.chains {
                cfg.life_history.chains = c;
            }
            if let Some(i) = a.iters {
                cfg.life_history.iterations = i;
                cfg.life_history.warmup = None;
            }
            if let Some(o) = a.out {
                cfg.out_dir = o;
            }
            let res = run_pipeline(&cfg)?;
            let d = &res.diagnostics;
            w(
                out,
                &format!(
                    "fit complete: {} chains x {} draws, max R-hat {:.4}, min ESS {:.0}\nmanifest: {}\n",
                    d.n_chains,
                    d.draws_per_chain,
                    d.max_rhat(),
                    d.min_ess(),
                    cfg.out_dir.join(salmon_core::pipeline::MANIFEST_FILE).display()
                ),
            )
        }
        Command::Diagnose(a) => {
            let post = LoadedPosterior::load(&a.posterior_dir)?;
            let rep = post.diagnostics(a.rhat_threshold)?;
            w(out, &rep.table())?;
            w(out, &format!("max R-hat {:.4}, min ESS {:.0}\n", rep.max_rhat(), rep.min_ess()))?;
            if rep.passed() {
                Ok(())
            } else {
                Err(Error::Convergence {
                    stage: "life_history".into(),
                    detail: rep.summary(),
                })
            }
        }
        Command::Project(a) => {
            let policy = parse_policy(&read(&a.policy)?)?;
            let store = a.posterior.store()?;
            w(out, &render(&store.project(&policy)?))
        }
        Command::Compare(a) => {
            let store = a.posterior.store()?;
            let v = match (&a.policies, &a.ids) {
                (Some(p), _) => {
                    let list: Vec<Policy> = serde_json::from_slice(&read(p)?)
                        .map_err(|e| Error::Validation(format!("{}: {e}", p.display())))?;
                    store.compare_policies(&list)?
                }
                (None, ids) => store.compare(ids.as_deref())?,
            };
            if let Some(path) = &a.csv {
                let table: salmon_core::DecisionTable = serde_json::from_value(v.clone())
                    .map_err(|e| Error::Internal(e.to_string()))?;
                table.write_csv(path)?;
            }
            w(out, &render(&v))
        }
        Command::Rerun(a) => {
            let rep = rerun_from_manifest(&a.manifest, &a.out)?;
            for (p, ok) in &rep.outputs {
                w(out, &format!("{} {p}\n", if *ok { "same" } else { "DIFF" }))?;
            }
            if rep.identical() {
                w(out, "all outputs identical\n")
            } else {
                Err(Error::Validation("rerun outputs differ from the manifest".into()))
            }
        }
        Command::Serve(a) => {
            let store = Arc::new(a.posterior.store()?);
            let addr = format!("{}:{}", a.host, a.port);
            let rt = tokio::runtime::Runtime::new().map_err(|e| Error::Internal(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| Error::Internal(format!("bind {addr}: {e}")))?;
                eprintln!("listening on {}", listener.local_addr().map_err(|e| Error::Internal(e.to_string()))?);
                server::serve(listener, store, server::shutdown_signal()).await
            })
        }
    }
}

/// Single-line machine-parsable error: `error[CODE]: detail`.
pub fn error_line(e: &Error) -> String {
    let detail = e.to_string().replace('\n', " ");
    format!("error[{}]: {detail}", e.code())
}
