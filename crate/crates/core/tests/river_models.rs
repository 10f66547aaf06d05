use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, LogNormal, StandardNormal};
use salmon_core::river::{
    approximate_smolt_likelihood, fit_river_model, markrecapture_posterior, ElectrofishingRecord,
    Pooling, RiverInfo, RiverModelConfig, RunSizePrior, SmoltPosterior, SmoltTrapData,
};
use salmon_core::stats::{ks_distance, mean, quantiles, sd, variance};

struct RiverTruth {
    name: &'static str,
    survival: f64,
    trap_years: usize,
}

struct Synthetic {
    rivers: Vec<RiverInfo>,
    electrofishing: Vec<ElectrofishingRecord>,
    traps: Vec<SmoltPosterior>,
    /// True parr abundance per river and survey year.
    parr: Vec<Vec<f64>>,
}

const FIRST: i32 = 2000;
const HABITAT: f64 = 1000.0;

/// Parr surveys each year, smolts one year later through survival with
/// log-normal noise, and mark-recapture trapping in the last `trap_years`.
fn synthesize(truths: &[RiverTruth], years: usize, tau: f64, seed: u64) -> Synthetic {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let site_noise = LogNormal::new(0.0, 0.3).unwrap();
    let mut out = Synthetic { rivers: vec![], electrofishing: vec![], traps: vec![], parr: vec![] };
    for (r, t) in truths.iter().enumerate() {
        out.rivers.push(RiverInfo { river: t.name.into(), habitat_area: HABITAT });
        let mut parr = Vec::new();
        for y in 0..years {
            let density = 10.0 * (0.3 * rng.sample::<f64, _>(StandardNormal)).exp();
            parr.push(density * HABITAT);
            for s in 0..4 {
                out.electrofishing.push(ElectrofishingRecord {
                    river: t.name.into(),
                    year: FIRST + y as i32,
                    site: format!("s{s}"),
                    density: density * site_noise.sample(&mut rng),
                    area: 200.0,
                });
            }
        }
        for y in years - t.trap_years..years {
            let eta: f64 = rng.sample(StandardNormal);
            let smolts = (parr[y] * t.survival * (tau * eta).exp()).round() as u64;
            let marked = 300.min(smolts / 2);
            let recaptured = Binomial::new(marked, 0.1).unwrap().sample(&mut rng);
            let unmarked = Binomial::new(smolts - marked, 0.1).unwrap().sample(&mut rng);
            let data = SmoltTrapData {
                river_index: r,
                year: FIRST + y as i32 + 1,
                marked,
                captured: recaptured + unmarked,
                recaptured,
            };
            let res = markrecapture_posterior(t.name, &data, RunSizePrior::default(), 2000, seed ^ y as u64).unwrap();
            out.traps.push(res.posterior);
        }
        out.parr.push(parr);
    }
    out
}

fn config(pooling: Pooling, seed: u64) -> RiverModelConfig {
    RiverModelConfig { pooling, seed, ..RiverModelConfig::default() }
}

fn log_draws(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| x.ln()).collect()
}

#[test]
fn single_river_survival_is_recovered() {
    let data = synthesize(&[RiverTruth { name: "a", survival: 0.2, trap_years: 12 }], 15, 0.2, 1);
    let fit = fit_river_model(&data.rivers, &data.electrofishing, &data.traps, &config(Pooling::Hierarchical, 2)).unwrap();
    let logs = log_draws(&fit.survival_draws["a"]);
    let (m, s) = (mean(&logs), sd(&logs));
    assert!((m - 0.2f64.ln()).abs() <= 3.0 * s, "log survival {m} sd {s}");
}

#[test]
fn identical_rivers_get_identical_survival_posteriors() {
    let one = synthesize(&[RiverTruth { name: "a", survival: 0.25, trap_years: 8 }], 12, 0.2, 3);
    let mut data = synthesize(&[RiverTruth { name: "a", survival: 0.25, trap_years: 8 }], 12, 0.2, 3);
    data.rivers.push(RiverInfo { river: "b".into(), habitat_area: HABITAT });
    data.electrofishing.extend(one.electrofishing.iter().map(|e| ElectrofishingRecord { river: "b".into(), ..e.clone() }));
    data.traps.extend(one.traps.iter().map(|t| SmoltPosterior { river: "b".into(), ..t.clone() }));
    let cfg = RiverModelConfig { n_draws: 10_000, iterations: 10_000, ..config(Pooling::Hierarchical, 4) };
    let fit = fit_river_model(&data.rivers, &data.electrofishing, &data.traps, &cfg).unwrap();
    let (a, b) = (&fit.survival_draws["a"], &fit.survival_draws["b"]);
    assert_eq!(a.len(), 10_000);
    let ks = ks_distance(a, b);
    assert!(ks < 0.1, "KS {ks}");
}

/// A river without trap data borrows survival from the population
/// distribution, so its smolt interval should cover the smolts implied by the
/// hierarchy mean applied to its own parr.
#[test]
fn untrapped_river_interval_covers_hierarchy_implied_smolts() {
    let (mu, omega) = (0.2f64.ln(), 0.3);
    let reps = 50;
    let mut covered = 0;
    for rep in 0..reps {
        let mut rng = ChaCha8Rng::seed_from_u64(900 + rep);
        let mut s = || (mu + omega * rng.sample::<f64, _>(StandardNormal)).exp();
        let truths = [
            RiverTruth { name: "a", survival: s(), trap_years: 8 },
            RiverTruth { name: "b", survival: s(), trap_years: 8 },
            RiverTruth { name: "c", survival: s(), trap_years: 8 },
            RiverTruth { name: "d", survival: s(), trap_years: 0 },
        ];
        let data = synthesize(&truths, 10, 0.2, 1000 + rep);
        let cfg = config(Pooling::Hierarchical, rep);
        let fit = fit_river_model(&data.rivers, &data.electrofishing, &data.traps, &cfg).unwrap();
        let survey = 5;
        let post = fit
            .posteriors
            .iter()
            .find(|p| p.river == "d" && p.year == FIRST + survey + 1)
            .unwrap();
        let implied = data.parr[3][survey as usize] * mu.exp();
        let q = quantiles(&post.draws, &[0.05, 0.95]);
        if q[0] <= implied && implied <= q[1] {
            covered += 1;
        }
    }
    assert!(covered * 10 >= reps * 9, "covered {covered} of {reps}");
}

#[test]
fn hierarchy_shrinks_weakly_informed_river() {
    let truths = [
        RiverTruth { name: "a", survival: 0.2, trap_years: 10 },
        RiverTruth { name: "b", survival: 0.22, trap_years: 10 },
        RiverTruth { name: "c", survival: 0.18, trap_years: 10 },
        RiverTruth { name: "weak", survival: 0.2, trap_years: 1 },
    ];
    let data = synthesize(&truths, 12, 0.3, 8);
    let hier = fit_river_model(&data.rivers, &data.electrofishing, &data.traps, &config(Pooling::Hierarchical, 9)).unwrap();
    let indep = fit_river_model(&data.rivers, &data.electrofishing, &data.traps, &config(Pooling::Independent, 9)).unwrap();
    let v_h = variance(&log_draws(&hier.survival_draws["weak"]));
    let v_i = variance(&log_draws(&indep.survival_draws["weak"]));
    assert!(v_h < v_i, "hierarchical {v_h} vs independent {v_i}");
}

#[test]
fn lognormal_approximation_recovers_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let draws: Vec<f64> = LogNormal::new(3.0, 0.5).unwrap().sample_iter(&mut rng).take(100_000).collect();
    let post = SmoltPosterior { river: "a".into(), year: 2001, draws };
    let a = approximate_smolt_likelihood(&post).unwrap();
    assert!((a.mu - 3.0).abs() / 3.0 < 0.01, "mu {}", a.mu);
    assert!((a.sd - 0.5).abs() / 0.5 < 0.01, "sd {}", a.sd);

    let scaled = SmoltPosterior { draws: post.draws.iter().map(|d| 10.0 * d).collect(), ..post.clone() };
    let b = approximate_smolt_likelihood(&scaled).unwrap();
    assert!((b.mu - a.mu - 10f64.ln()).abs() < 1e-9);
    assert!((b.sd - a.sd).abs() < 1e-9);
}
