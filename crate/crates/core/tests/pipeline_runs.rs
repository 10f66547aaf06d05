use std::collections::BTreeSet;
use std::path::Path;

use salmon_core::pipeline::{
    demo_config, file_hash, rerun_from_manifest, run_pipeline, LoadedPosterior, Manifest, PipelineConfig, StageBinding,
    StageId, MANIFEST_FILE, MISSING,
};
use salmon_core::simulate::{make_demo, simulate, write_simulation, DemoScale};

/// Small demo data in `root/data` and a config with short chains writing to
/// `root/fit`. The convergence gate is off so short runs always finish.
fn quick_config(root: &Path) -> PipelineConfig {
    let design = make_demo(DemoScale::Small, 41);
    let out = simulate(&design).unwrap();
    write_simulation(&root.join("data"), &design, &out).unwrap();
    let mut cfg = demo_config(&design, &root.join("data"), &root.join("fit"));
    cfg.life_history.chains = 2;
    cfg.life_history.iterations = 1200;
    cfg.life_history.thin = 1;
    cfg.life_history.enforce_gate = false;
    cfg.sr_hyperprior.chains = 2;
    cfg.sr_hyperprior.warmup = 1500;
    cfg.sr_hyperprior.iterations = 2000;
    cfg.sr_hyperprior.rhat_threshold = 1.5;
    cfg.river_model.rhat_threshold = 1.5;
    cfg
}

fn files_under(root: &Path) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/"));
            }
        }
    }
    out
}

#[test]
fn manifest_lists_every_output_and_tracks_inputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    let first = run_pipeline(&cfg).unwrap();
    let manifest = Manifest::load(&cfg.out_dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(manifest.hash().unwrap(), first.manifest.hash().unwrap());

    let listed: BTreeSet<String> = manifest.outputs().map(|f| f.path.clone()).collect();
    for f in manifest.outputs() {
        assert_eq!(file_hash(&cfg.out_dir.join(&f.path)).unwrap(), f.sha256, "{}", f.path);
    }
    let mut on_disk = files_under(&cfg.out_dir);
    on_disk.remove(MANIFEST_FILE);
    assert_eq!(listed, on_disk);
    let expert = |m: &Manifest| m.inputs.iter().find(|i| i.kind == "expert_pspc").unwrap().sha256.clone();
    assert_ne!(expert(&manifest), MISSING);

    std::fs::remove_file(cfg.data.dir.join("expert_pspc.csv")).unwrap();
    let second = run_pipeline(&cfg).unwrap();
    assert_ne!(second.manifest.hash().unwrap(), first.manifest.hash().unwrap());
    assert_eq!(expert(&second.manifest), MISSING);
}

#[test]
fn rerun_from_manifest_is_bit_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick_config(tmp.path());
    run_pipeline(&cfg).unwrap();
    let report = rerun_from_manifest(&cfg.out_dir.join(MANIFEST_FILE), &tmp.path().join("again")).unwrap();
    assert!(report.identical(), "{report:?}");
    assert!(!report.outputs.is_empty());

    // A changed input is refused rather than silently refit.
    let catch = cfg.data.dir.join("catch.csv");
    let mut text = std::fs::read_to_string(&catch).unwrap();
    text.push('\n');
    std::fs::write(&catch, text).unwrap();
    assert!(rerun_from_manifest(&cfg.out_dir.join(MANIFEST_FILE), &tmp.path().join("third")).is_err());
}

#[test]
fn missing_stage_d_falls_back_to_default_prior() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(tmp.path());
    cfg.stages.retain(|s| s.id != StageId::D);
    for s in &mut cfg.stages {
        s.inputs.retain(|i| *i != StageId::D);
    }
    let out = run_pipeline(&cfg).unwrap();
    assert!(!out.manifest.fallbacks.is_empty());
    assert!(out.manifest.stages.iter().all(|s| s.id != StageId::D));
    assert!(!cfg.out_dir.join("stage_D").exists());

    cfg.priors.default_sr = None;
    assert!(run_pipeline(&cfg).is_err());
}

#[test]
fn fitted_posterior_loads_back() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = quick_config(tmp.path());
    cfg.stages = vec![
        StageBinding { id: StageId::B, inputs: vec![] },
        StageBinding { id: StageId::C, inputs: vec![StageId::B] },
        StageBinding { id: StageId::LifeHistory, inputs: vec![StageId::C] },
    ];
    let out = run_pipeline(&cfg).unwrap();
    let loaded = LoadedPosterior::load(&cfg.out_dir).unwrap();
    assert_eq!(loaded.chains.len(), out.chains.len());
    for (a, b) in loaded.chains.iter().zip(&out.chains) {
        assert_eq!(a.draws.len(), b.draws.len());
        for (x, y) in a.draws.iter().zip(&b.draws) {
            for (u, v) in x.iter().zip(y) {
                assert!((u - v).abs() <= 1e-9 * v.abs().max(1.0), "{u} vs {v}");
            }
        }
    }
}
