mod common;

use common::{baranov, bh, eggs, noise, rel_err, spawn, spec_for, survive, truth_point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use salmon_core::decision::{compare_policies, project, Policy, ProjectionContext};
use salmon_core::dynamics::ProcessNoise;
use salmon_core::model::LifeHistoryModel;
use salmon_core::simulate::{make_demo, simulate, DemoScale};

fn model_and_truth(seed: u64) -> (LifeHistoryModel, Vec<f64>) {
    let design = make_demo(DemoScale::Small, seed);
    let out = simulate(&design).unwrap();
    let model = LifeHistoryModel::new(spec_for(&design, &out)).unwrap();
    let x = truth_point(&model, &design, &out.truth);
    (model, x)
}

/// A stand-in posterior: `n` small perturbations of the truth.
fn cloud(n: usize, seed: u64) -> ProjectionContext {
    let (model, x) = model_and_truth(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| x.iter().map(|v| v + 0.03 * rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    ProjectionContext::new(&model, &draws).unwrap()
}

#[test]
fn noiseless_single_draw_follows_deterministic_path() {
    let (model, x) = model_and_truth(21);
    let mut ctx = ProjectionContext::new(&model, &[x]).unwrap();
    ctx.draws[0].sigma_r = 0.0;
    ctx.fixed_noise = ProcessNoise { sigma_r: 0.0, sigma_n: 0.0, sigma_s: 0.0 };
    ctx.m74_history.clear();
    let policy = Policy::uniform("half", 0.5, &ctx.fisheries);
    let res = project(&ctx, &policy, 1).unwrap();

    let d = &ctx.draws[0];
    let lmat = d.maturation.rates().to_vec();
    let ages = lmat.len();
    let mut fishing = vec![0.0; ages + 1];
    for (fi, sel) in ctx.selectivity.iter().enumerate() {
        for a in 0..=ages {
            fishing[a] += d.catchability[fi] * ctx.base_effort[fi] * 0.5 * sel[a];
        }
    }
    let natural: Vec<f64> = (0..=ages).map(|a| if a == 0 { d.m_post_smolt } else { d.m_adult }).collect();
    let mut catch = 0.0;
    for (i, sp) in res.stocks.iter().enumerate() {
        let st = &d.stocks[i];
        let mut queue = d.states[i].smolt_queue.clone();
        let mut sea = d.states[i].sea.clone();
        for h in 0..policy.horizon {
            let r = queue[0];
            let q = sp.smolts[h].as_array();
            assert!(q.iter().all(|v| rel_err(*v, r) < 1e-10), "{} year {h}: {q:?} vs {r}", sp.stock);
            let spawners: Vec<f64> = (0..ages)
                .map(|a| spawn(sea[a], lmat[a], fishing[a + 1], natural[a + 1], noise(0.0, 0.0)))
                .collect();
            let o = eggs(&spawners, &st.fecundity, st.female_prop);
            catch += baranov(r, fishing[0], natural[0]);
            for a in 1..=ages {
                catch += baranov(sea[a - 1], fishing[a], natural[a]);
            }
            let mut next = vec![survive(r, fishing[0], natural[0], 1.0)];
            for a in 1..ages {
                next.push((1.0 - lmat[a - 1]) * survive(sea[a - 1], fishing[a], natural[a], 1.0));
            }
            sea = next;
            queue.remove(0);
            queue.push(bh(o, st.alpha, st.beta));
        }
    }
    assert!(rel_err(res.expected_cumulative_catch, catch) < 1e-10);
}

#[test]
fn expected_catch_rises_with_uniform_effort() {
    let ctx = cloud(200, 22);
    let mut last = -1.0;
    for k in 0..=10 {
        let m = k as f64 / 10.0;
        let res = project(&ctx, &Policy::uniform(&format!("x{k}"), m, &ctx.fisheries), 5).unwrap();
        assert!(res.expected_cumulative_catch >= last, "multiplier {m}");
        last = res.expected_cumulative_catch;
    }
}

#[test]
fn moratorium_dominates_with_shared_noise() {
    let ctx = cloud(2000, 23);
    let sq = project(&ctx, &Policy::status_quo(&ctx.fisheries), 9).unwrap();
    let mor = project(&ctx, &Policy::moratorium(&ctx.fisheries), 9).unwrap();
    for (a, b) in mor.stocks.iter().zip(&sq.stocks) {
        assert!(a.p_reach_50 >= b.p_reach_50, "{}", a.stock);
        assert!(a.p_reach_75 <= a.p_reach_50 && b.p_reach_75 <= b.p_reach_50);
    }
}

#[test]
fn empty_policy_list_gives_empty_table() {
    let ctx = cloud(10, 24);
    let table = compare_policies(&ctx, &[], 1).unwrap();
    assert!(table.rows.is_empty());
    assert_eq!(table.best_for_p50(), None);
}

#[test]
fn projected_quantiles_are_ordered() {
    let ctx = cloud(300, 25);
    let res = project(&ctx, &Policy::status_quo(&ctx.fisheries), 3).unwrap();
    for s in &res.stocks {
        for q in s.smolts.iter().chain(&s.ratio) {
            assert!(q.as_array().windows(2).all(|w| w[0] <= w[1]), "{}: {q:?}", s.stock);
        }
    }
}

#[test]
fn best_policy_is_stable_on_random_halves() {
    let ctx = cloud(400, 26);
    let policies = vec![
        Policy::status_quo(&ctx.fisheries),
        Policy::uniform("half_effort", 0.5, &ctx.fisheries),
        Policy::moratorium(&ctx.fisheries),
    ];
    let full = compare_policies(&ctx, &policies, 7).unwrap();
    let best = full.best_for_p50().unwrap().to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(27);
    let mut same = 0;
    for _ in 0..50 {
        let mut idx: Vec<usize> = (0..ctx.draws.len()).collect();
        for i in (1..idx.len()).rev() {
            idx.swap(i, rng.random_range(0..=i));
        }
        idx.truncate(ctx.draws.len() / 2);
        let half = compare_policies(&ctx.subset(&idx), &policies, 7).unwrap();
        if half.best_for_p50() == Some(best.as_str()) {
            same += 1;
        }
    }
    assert!(same >= 45, "best policy {best} kept in {same} of 50 halves");
}
