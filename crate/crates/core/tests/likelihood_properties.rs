mod common;

use common::{spec_for, truth_point};
use salmon_core::model::LifeHistoryModel;
use salmon_core::simulate::{make_demo, simulate, DemoScale};

fn q_coords(model: &LifeHistoryModel) -> std::ops::Range<usize> {
    model.registry().range("q").unwrap()
}

#[test]
fn true_catchability_beats_doubled_catchability() {
    let mut wins = 0;
    for rep in 0..100 {
        let design = make_demo(DemoScale::Small, 1000 + rep);
        let out = simulate(&design).unwrap();
        let model = LifeHistoryModel::new(spec_for(&design, &out)).unwrap();
        let x = truth_point(&model, &design, &out.truth);
        let mut doubled = x.clone();
        for k in q_coords(&model) {
            doubled[k] += 2f64.ln();
        }
        let at_truth = model.log_likelihood(&x).unwrap().total();
        let at_double = model.log_likelihood(&doubled).unwrap().total();
        if at_truth > at_double {
            wins += 1;
        }
    }
    assert!(wins >= 95, "truth won {wins} of 100");
}

#[test]
fn truth_has_finite_log_posterior() {
    for scale in [DemoScale::Small, DemoScale::Medium] {
        let design = make_demo(scale, 3);
        let out = simulate(&design).unwrap();
        let model = LifeHistoryModel::new(spec_for(&design, &out)).unwrap();
        let lp = model.log_posterior(&truth_point(&model, &design, &out.truth)).unwrap();
        assert!(lp.is_finite(), "{scale:?}: {lp}");
    }
}

/// Average log-likelihood over replicates on a coarse grid peaks at the
/// generating catchability and catch-error sd, within one grid step.
#[test]
fn average_likelihood_peaks_near_generating_values() {
    let grid: [f64; 5] = [0.5, 0.7071, 1.0, 1.4142, 2.0];
    let reps = 30;
    let mut q_avg = [0.0; 5];
    let mut sd_avg = [0.0; 5];
    for rep in 0..reps {
        let design = make_demo(DemoScale::Small, 5000 + rep);
        let out = simulate(&design).unwrap();
        let spec = spec_for(&design, &out);
        let model = LifeHistoryModel::new(spec.clone()).unwrap();
        let x = truth_point(&model, &design, &out.truth);
        for (g, mult) in grid.iter().enumerate() {
            let mut xq = x.clone();
            for k in q_coords(&model) {
                xq[k] += mult.ln();
            }
            q_avg[g] += model.log_likelihood(&xq).unwrap().total() / reps as f64;

            let mut s = spec.clone();
            for f in &mut s.fisheries {
                f.obs_sd *= mult;
            }
            let m = LifeHistoryModel::new(s).unwrap();
            sd_avg[g] += m.log_likelihood(&x).unwrap().catch / reps as f64;
        }
    }
    let argmax = |v: &[f64; 5]| (0..5).max_by(|a, b| v[*a].total_cmp(&v[*b])).unwrap();
    assert!(argmax(&q_avg).abs_diff(2) <= 1, "q grid {q_avg:?}");
    assert!(argmax(&sd_avg).abs_diff(2) <= 1, "catch sd grid {sd_avg:?}");
}
